#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmer/adam.hpp"
#include "mmer/tensor.hpp"

namespace mmer::nn {

// Serialized model state in the "EMCK" container:
//   magic "EMCK", u32 version, u64 tensor count,
//   per tensor { u16 name_len, name, u8 dtype(0=f32), u8 rank, u32 dims...,
//                f32 little-endian payload },
//   u64 json_len, config JSON bytes,
//   u8 has_adam, [ u64 step, u64 count, per moment-pair
//                  { u16 name_len, name, u64 numel, m payload, v payload } ].
// Tensors are sorted by name, so identical state serializes byte-identically.
struct Checkpoint {
  struct Entry {
    Shape shape;
    std::vector<float> data;
  };
  std::map<std::string, Entry> tensors;
  std::string config_json;
  bool has_adam = false;
  uint64_t adam_step = 0;
  std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> adam_moments;
};

void checkpoint_write(const std::string& path, const Checkpoint& ckpt);
Checkpoint checkpoint_read(const std::string& path);

Checkpoint checkpoint_from_store(const ParamStore& store, std::string config_json,
                                 bool include_adam = true);
// Creates or overwrites parameters in `store` from the checkpoint.
void store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt);

}  // namespace mmer::nn
