#pragma once

#include "angio/tensor.hpp"

#include <string>

namespace angio {

/// Reads an 8-bit gray or RGB(A) PNG into a (1,C,H,W) tensor in [0,1]; alpha is dropped.
Tensor<float> read_png(const std::string& path);

/// Writes a (1,1,H,W) or (1,3,H,W) tensor, clamped to [0,1] and rounded to 8 bits.
void write_png(const std::string& path, const Tensor<float>& img);

}  // namespace angio
