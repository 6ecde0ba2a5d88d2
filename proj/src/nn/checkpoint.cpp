#include "flow/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace flow::nn {

namespace {
constexpr char kMagic[4] = {'Z', 'F', 'C', 'K'};
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, 4);
  const uint32_t version = 1, count = static_cast<uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, t] : params) {
    const uint32_t len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    const uint32_t ndims = static_cast<uint32_t>(t.shape.size());
    out.write(reinterpret_cast<const char*>(&ndims), 4);
    for (int d : t.shape) {
      const uint32_t dim = static_cast<uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&dim), 4);
    }
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  out.close();
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint for reading: " + path.string());
  auto read = [&](void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw std::runtime_error("truncated checkpoint: " + path.string());
  };
  char magic[4];
  read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a ZFCK checkpoint: " + path.string());
  uint32_t version, count;
  read(&version, 4);
  if (version != 1) throw std::runtime_error("unsupported ZFCK version in " + path.string());
  read(&count, 4);
  NamedTensors out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len;
    read(&len, 4);
    std::string name(len, '\0');
    read(name.data(), len);
    uint32_t ndims;
    read(&ndims, 4);
    std::vector<int> shape(ndims);
    for (auto& d : shape) {
      uint32_t dim;
      read(&dim, 4);
      d = static_cast<int>(dim);
    }
    Tensor t = Tensor::zeros(shape);
    read(t.v.data(), t.v.size() * sizeof(double));
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace flow::nn
