#include "fcd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fcd {

namespace {

constexpr char kMagic[8] = {'F', 'C', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(in.gcount() == sizeof(T), "truncated checkpoint: " + path);
  return v;
}

}  // namespace

void Checkpoint::put_tensor(const std::string& name, const std::vector<int>& shape, const float* data,
                            size_t count) {
  size_t expect = 1;
  for (int d : shape) expect *= static_cast<size_t>(d);
  check_arg(expect == count, "put_tensor: shape/count mismatch for " + name);
  TensorEntry e;
  e.shape = shape;
  e.data.assign(data, data + count);
  tensors_[name] = std::move(e);
}

const Checkpoint::TensorEntry& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  check(it != tensors_.end(), "checkpoint is missing tensor: " + name);
  return it->second;
}

void Checkpoint::put_vector(const std::string& name, const std::vector<float>& v) {
  put_tensor(name, {static_cast<int>(v.size())}, v.data(), v.size());
}

std::vector<float> Checkpoint::get_vector(const std::string& name) const { return tensor(name).data; }

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  std::string meta_str = meta.dump();
  write_pod(out, static_cast<uint64_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_pod(out, static_cast<uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    write_pod(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<uint8_t>(0));  // dtype f32
    write_pod(out, static_cast<uint8_t>(t.shape.size()));
    for (int d : t.shape) write_pod(out, static_cast<int32_t>(d));
    write_pod(out, static_cast<uint64_t>(t.data.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  check(out.good(), "checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  check(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
        "not a checkpoint file: " + path);
  uint32_t version = read_pod<uint32_t>(in, path);
  check(version == kVersion, "unsupported checkpoint version in " + path);

  Checkpoint ckpt;
  uint64_t meta_len = read_pod<uint64_t>(in, path);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  check(in.gcount() == static_cast<std::streamsize>(meta_len), "truncated checkpoint: " + path);
  ckpt.meta = nlohmann::json::parse(meta_str, nullptr, false);
  check(!ckpt.meta.is_discarded(), "corrupt checkpoint metadata: " + path);

  uint32_t count = read_pod<uint32_t>(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    check(in.gcount() == static_cast<std::streamsize>(name_len), "truncated checkpoint: " + path);
    uint8_t dtype = read_pod<uint8_t>(in, path);
    check(dtype == 0, "unsupported tensor dtype in " + path);
    uint8_t ndim = read_pod<uint8_t>(in, path);
    TensorEntry t;
    size_t expect = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      int32_t dim = read_pod<int32_t>(in, path);
      check(dim > 0, "corrupt tensor dim in " + path);
      t.shape.push_back(dim);
      expect *= static_cast<size_t>(dim);
    }
    uint64_t byte_len = read_pod<uint64_t>(in, path);
    check(byte_len == expect * sizeof(float), "corrupt tensor size for " + name + " in " + path);
    t.data.resize(expect);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(byte_len));
    check(in.gcount() == static_cast<std::streamsize>(byte_len), "truncated checkpoint: " + path);
    ckpt.tensors_[name] = std::move(t);
  }
  return ckpt;
}

}  // namespace fcd
