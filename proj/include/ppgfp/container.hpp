#pragma once

// Tensor container used for checkpoints, beat files and fingerprint files.
//
//   PPGFP-CONTAINER 1 <count>
//   <name> <dtype> <shape> <offset>      one line per tensor
//   end
//   <payload>                             little-endian IEEE-754, concatenated
//
// dtype is f64 or f32, shape is extents joined by 'x' (e.g. 64x64), offset is
// the byte position of the tensor inside the payload block.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppgfp/tensor.hpp"

namespace ppgfp {

enum class DType { F64, F32 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  DType dtype = DType::F64;
};

std::string encode_container(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_container(std::string_view bytes);

/// Writes to a sibling temp file then renames over `path`.
void write_container(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

/// Writes `contents` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name);

}  // namespace ppgfp
