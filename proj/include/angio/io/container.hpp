#pragma once

#include "angio/tensor.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace angio {

/// Thrown for unreadable, truncated, or tampered files.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  std::vector<Index> shape;  // stored verbatim; numel must match data size
  Eigen::ArrayXf data;
};

/// Tensor container: one line of JSON, a newline, then little-endian float32 payload.
///
/// Header keys: format ("angio-tensors"), version (1), meta (caller JSON),
/// tensors ([{name, shape, offset, count}], offsets in floats), payload_sha256.
struct TensorFile {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const;
  const NamedTensor* find(const std::string& name) const;
};

constexpr int kContainerVersion = 1;

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

/// Deformation fields are stored as a single "displacement" tensor of shape [H, W, 2], (dy, dx).
void write_field(const std::string& path, const Tensor<float>& field);
Tensor<float> read_field(const std::string& path);

}  // namespace angio
