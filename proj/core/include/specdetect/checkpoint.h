#ifndef SPECDETECT_CHECKPOINT_H_
#define SPECDETECT_CHECKPOINT_H_

#include <filesystem>
#include <iosfwd>

#include "specdetect/tensor.h"

namespace specdetect::nn {

// Tensor checkpoint layout, all integers little-endian:
//   magic "SDCK", version byte (1), uint32 record count, then per record
//   uint32 name length, UTF-8 name bytes, uint32 rank, uint32 dims[rank],
//   float32 payload in row-major order.
inline constexpr char kCheckpointMagic[4] = {'S', 'D', 'C', 'K'};
inline constexpr unsigned char kCheckpointVersion = 1;

void write_tensors(std::ostream& out, const ParamStore<float>& params);
ParamStore<float> read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, const ParamStore<float>& params);
ParamStore<float> load_tensors(const std::filesystem::path& path);

// Copies every tensor of `loaded` into the same-named tensor of `dst`.
// Throws if the name sets or any shape differ.
void assign_by_name(const ParamStore<float>& loaded, ParamStore<float>& dst);

}  // namespace specdetect::nn

#endif  // SPECDETECT_CHECKPOINT_H_
