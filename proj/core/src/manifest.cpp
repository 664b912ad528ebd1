#include "mmer/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmer/rng.hpp"

namespace mmer::corpus {

namespace {

const std::set<std::string> kSplits = {"train", "val", "test"};

void check_path(const std::string& path, const std::string& id) {
  if (!path.empty() && !std::filesystem::exists(path))
    throw std::runtime_error("manifest: missing file for utterance '" + id + "': " + path);
}

}  // namespace

std::vector<ManifestEntry> UtteranceManifest::split_entries(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

std::vector<int> UtteranceManifest::actor_ids() const {
  std::set<int> ids;
  for (const auto& e : entries) ids.insert(e.actor_id);
  return {ids.begin(), ids.end()};
}

void UtteranceManifest::validate(bool check_paths) const {
  std::map<int, std::string> actor_split;
  for (const auto& e : entries) {
    if (!kSplits.count(e.split))
      throw std::invalid_argument("manifest: unknown split '" + e.split + "' for utterance '" +
                                  e.utterance_id + "'");
    auto [it, inserted] = actor_split.emplace(e.actor_id, e.split);
    if (!inserted && it->second != e.split)
      throw std::invalid_argument("manifest: actor " + std::to_string(e.actor_id) +
                                  " appears in splits '" + it->second + "' and '" + e.split + "'");
    if (check_paths) {
      check_path(e.clean_audio_path, e.utterance_id);
      check_path(e.multichannel_audio_path, e.utterance_id);
      check_path(e.video_clip_path, e.utterance_id);
    }
  }
}

void manifest_write(const std::string& path, const UtteranceManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest_write: cannot open " + path);
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    j["utterance_id"] = e.utterance_id;
    j["actor_id"] = e.actor_id;
    j["label"] = emotion_name(e.label);
    j["clean_audio_path"] = e.clean_audio_path;
    if (!e.multichannel_audio_path.empty())
      j["multichannel_audio_path"] = e.multichannel_audio_path;
    if (!e.video_clip_path.empty()) j["video_clip_path"] = e.video_clip_path;
    if (!e.rir_provenance.empty()) j["rir_provenance"] = e.rir_provenance;
    j["split"] = e.split;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("manifest_write: write failed: " + path);
}

UtteranceManifest manifest_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest_read: cannot open " + path);
  UtteranceManifest manifest;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest_read: " + path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    ManifestEntry entry;
    entry.utterance_id = j.at("utterance_id").get<std::string>();
    entry.actor_id = j.at("actor_id").get<int>();
    entry.label = emotion_from_name(j.at("label").get<std::string>());
    entry.clean_audio_path = j.at("clean_audio_path").get<std::string>();
    entry.multichannel_audio_path = j.value("multichannel_audio_path", "");
    entry.video_clip_path = j.value("video_clip_path", "");
    entry.rir_provenance = j.value("rir_provenance", "");
    entry.split = j.at("split").get<std::string>();
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

std::map<int, std::string> build_split(const std::vector<int>& actor_ids,
                                       const std::array<double, 3>& ratios, uint64_t rng_seed) {
  if (actor_ids.size() < 3) throw std::invalid_argument("build_split: need at least 3 actors");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("build_split: ratios must sum to 1");

  std::vector<int> shuffled = actor_ids;
  Rng rng(rng_seed);
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_u64(i)]);

  const auto n = static_cast<double>(shuffled.size());
  // The 1e-9 nudge absorbs the usual 0.8*N float dust before flooring.
  const size_t n_train = static_cast<size_t>(std::floor(n * ratios[0] + 1e-9));
  const size_t n_val = static_cast<size_t>(std::floor(n * ratios[1] + 1e-9));
  const size_t n_test = shuffled.size() - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw std::invalid_argument("build_split: a split would be empty");

  std::map<int, std::string> assignment;
  for (size_t i = 0; i < shuffled.size(); ++i) {
    const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    assignment[shuffled[i]] = split;
  }
  return assignment;
}

}  // namespace mmer::corpus
