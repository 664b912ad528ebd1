#pragma once

#include <string>
#include <vector>

#include "mmer/rir.hpp"

namespace mmer::corpus {

// Loads every multi-channel WAV (with optional JSON sidecar) in a directory,
// resampling to the pipeline rate. Room names come from the filename stem.
// Unreadable files are reported and skipped; the rest proceed.
std::vector<acoustics::RirSet> ingest_external_rirs(const std::string& dir,
                                                    int pipeline_rate_hz = 16000);

}  // namespace mmer::corpus
