#include "mmer/ingest.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "mmer/resample.hpp"

namespace mmer::corpus {

std::vector<acoustics::RirSet> ingest_external_rirs(const std::string& dir, int pipeline_rate_hz) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error("ingest_external_rirs: not a directory: " + dir);

  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty())
    std::fprintf(stderr, "warning: ingest_external_rirs: no WAV files in %s\n", dir.c_str());

  std::vector<acoustics::RirSet> sets;
  for (const auto& path : wavs) {
    try {
      auto set = acoustics::load_rir_set(path.string());
      if (set.channel_count() == 0) throw std::runtime_error("zero channels");
      if (set.sample_rate_hz != pipeline_rate_hz) {
        MultiChannelAudio audio;
        audio.sample_rate_hz = set.sample_rate_hz;
        audio.channels = std::move(set.rirs);
        audio = dsp::resample(audio, pipeline_rate_hz);
        set.rirs = std::move(audio.channels);
        set.sample_rate_hz = pipeline_rate_hz;
      }
      sets.push_back(std::move(set));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: ingest_external_rirs: skipping %s: %s\n",
                   path.string().c_str(), e.what());
    }
  }
  return sets;
}

}  // namespace mmer::corpus
