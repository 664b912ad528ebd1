#include "mmer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "EMCK serialization assumes a little-endian host");

namespace mmer::nn {

namespace {

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_name(std::ostream& out, const std::string& name) {
  if (name.size() > 0xffff) throw std::invalid_argument("EMCK: tensor name too long: " + name);
  write_pod<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string read_name(std::istream& in) {
  const auto len = read_pod<uint16_t>(in);
  std::string name(len, '\0');
  in.read(name.data(), len);
  return name;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::istream& in, std::vector<float>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

}  // namespace

void checkpoint_write(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint_write: cannot open " + path);

  out.write("EMCK", 4);
  write_pod<uint32_t>(out, 1);
  write_pod<uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, entry] : ckpt.tensors) {
    write_name(out, name);
    write_pod<uint8_t>(out, 0);  // dtype f32
    write_pod<uint8_t>(out, static_cast<uint8_t>(entry.shape.size()));
    for (int64_t d : entry.shape) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
    write_floats(out, entry.data);
  }

  write_pod<uint64_t>(out, ckpt.config_json.size());
  out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));

  write_pod<uint8_t>(out, ckpt.has_adam ? 1 : 0);
  if (ckpt.has_adam) {
    write_pod<uint64_t>(out, ckpt.adam_step);
    write_pod<uint64_t>(out, ckpt.adam_moments.size());
    for (const auto& [name, mv] : ckpt.adam_moments) {
      write_name(out, name);
      write_pod<uint64_t>(out, mv.first.size());
      write_floats(out, mv.first);
      write_floats(out, mv.second);
    }
  }
  if (!out) throw std::runtime_error("checkpoint_write: write failed: " + path);
}

Checkpoint checkpoint_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint_read: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "EMCK", 4) != 0)
    throw std::runtime_error("checkpoint_read: bad magic in " + path);
  const auto version = read_pod<uint32_t>(in);
  if (version != 1)
    throw std::runtime_error("checkpoint_read: unsupported version in " + path);

  Checkpoint ckpt;
  const auto count = read_pod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_name(in);
    const auto dtype = read_pod<uint8_t>(in);
    if (dtype != 0) throw std::runtime_error("checkpoint_read: unsupported dtype in " + path);
    const auto rank = read_pod<uint8_t>(in);
    Checkpoint::Entry entry;
    entry.shape.resize(rank);
    int64_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      entry.shape[r] = read_pod<uint32_t>(in);
      numel *= entry.shape[r];
    }
    entry.data.resize(numel);
    read_floats(in, entry.data);
    ckpt.tensors.emplace(name, std::move(entry));
  }

  const auto json_len = read_pod<uint64_t>(in);
  ckpt.config_json.resize(json_len);
  in.read(ckpt.config_json.data(), static_cast<std::streamsize>(json_len));

  ckpt.has_adam = read_pod<uint8_t>(in) != 0;
  if (ckpt.has_adam) {
    ckpt.adam_step = read_pod<uint64_t>(in);
    const auto mcount = read_pod<uint64_t>(in);
    for (uint64_t i = 0; i < mcount; ++i) {
      const std::string name = read_name(in);
      const auto numel = read_pod<uint64_t>(in);
      std::vector<float> m(numel), v(numel);
      read_floats(in, m);
      read_floats(in, v);
      ckpt.adam_moments.emplace(name, std::make_pair(std::move(m), std::move(v)));
    }
  }
  if (!in) throw std::runtime_error("checkpoint_read: truncated file " + path);
  return ckpt;
}

Checkpoint checkpoint_from_store(const ParamStore& store, std::string config_json,
                                 bool include_adam) {
  Checkpoint ckpt;
  ckpt.config_json = std::move(config_json);
  for (const auto& [name, p] : store.params)
    ckpt.tensors.emplace(name, Checkpoint::Entry{p.shape(), p.data()});
  if (include_adam && store.step > 0) {
    ckpt.has_adam = true;
    ckpt.adam_step = static_cast<uint64_t>(store.step);
    for (const auto& [name, m] : store.moment1) {
      auto it = store.moment2.find(name);
      if (it != store.moment2.end()) ckpt.adam_moments.emplace(name, std::make_pair(m, it->second));
    }
  }
  return ckpt;
}

void store_from_checkpoint(ParamStore& store, const Checkpoint& ckpt) {
  for (const auto& [name, entry] : ckpt.tensors) {
    auto it = store.params.find(name);
    if (it == store.params.end()) {
      auto& p = store.create(name, entry.shape);
      p.data() = entry.data;
    } else {
      if (it->second.shape() != entry.shape)
        throw std::runtime_error("store_from_checkpoint: shape mismatch for '" + name + "'");
      it->second.data() = entry.data;
    }
  }
  if (ckpt.has_adam) {
    store.step = static_cast<int64_t>(ckpt.adam_step);
    for (const auto& [name, mv] : ckpt.adam_moments) {
      store.moment1[name] = mv.first;
      store.moment2[name] = mv.second;
    }
  }
}

}  // namespace mmer::nn
