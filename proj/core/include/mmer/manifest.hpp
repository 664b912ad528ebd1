#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmer/labels.hpp"

namespace mmer::corpus {

struct ManifestEntry {
  std::string utterance_id;
  int actor_id = 0;
  EmotionLabel label = EmotionLabel::neutral;
  std::string clean_audio_path;
  std::string multichannel_audio_path;  // empty when absent
  std::string video_clip_path;          // empty when absent
  std::string rir_provenance;           // synthetic seed or external RIR id
  std::string split;                    // train | val | test

  bool operator==(const ManifestEntry&) const = default;
};

struct UtteranceManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split_entries(const std::string& split) const;
  std::vector<int> actor_ids() const;

  // Actor exclusivity across splits, valid labels/splits, and (optionally)
  // existence of every referenced path.
  void validate(bool check_paths = false) const;
};

// JSON-lines, one entry per line, UTF-8.
void manifest_write(const std::string& path, const UtteranceManifest& manifest);
UtteranceManifest manifest_read(const std::string& path);

// Shuffles actors deterministically, then assigns floor(N*r_train) to train,
// floor(N*r_val) to val and the remainder to test.
std::map<int, std::string> build_split(const std::vector<int>& actor_ids,
                                       const std::array<double, 3>& ratios, uint64_t rng_seed);

}  // namespace mmer::corpus
