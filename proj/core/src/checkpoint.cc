#include "specdetect/checkpoint.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace specdetect::nn {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated record");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Sanity bound on rank and name length when reading untrusted files.
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

}  // namespace

void write_tensors(std::ostream& out, const ParamStore<float>& params) {
  out.write(kCheckpointMagic, 4);
  out.put(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& entry : params) {
    put_u32(out, static_cast<std::uint32_t>(entry.name.size()));
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    put_u32(out, static_cast<std::uint32_t>(entry.value.ndim()));
    for (int d : entry.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : entry.value.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
}

ParamStore<float> read_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: bad magic");
  const int version = in.get();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(in);
  ParamStore<float> params;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len > kMaxNameLength) throw IoError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("checkpoint: truncated name");
    const std::uint32_t rank = get_u32(in);
    if (rank == 0 || rank > kMaxRank) throw IoError("checkpoint: implausible rank for " + name);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(in));
    std::vector<float> values(shape_size(shape));
    for (float& v : values) {
      const std::uint32_t bits = get_u32(in);
      std::memcpy(&v, &bits, 4);
    }
    params.add(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  return params;
}

void save_tensors(const std::filesystem::path& path, const ParamStore<float>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  write_tensors(out, params);
  if (!out) throw IoError(path.string() + ": write failed");
}

ParamStore<float> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  return read_tensors(in);
}

void assign_by_name(const ParamStore<float>& loaded, ParamStore<float>& dst) {
  if (loaded.size() != dst.size())
    throw IoError("checkpoint: holds " + std::to_string(loaded.size()) + " tensors, model expects " +
                  std::to_string(dst.size()));
  for (auto& entry : dst) {
    const auto idx = loaded.find(entry.name);
    if (!idx) throw IoError("checkpoint: missing tensor " + entry.name);
    const Tensor<float>& src = loaded[*idx].value;
    if (!src.same_shape(entry.value))
      throw IoError("checkpoint: tensor " + entry.name + " has shape " + shape_string(src.shape()) +
                    ", model expects " + shape_string(entry.value.shape()));
    entry.value = src;
  }
}

}  // namespace specdetect::nn
