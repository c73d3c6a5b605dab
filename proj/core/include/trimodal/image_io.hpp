// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimodal/tensor.hpp"

namespace trimodal {

// RGB8 PNG encoding of an [H,W,3] tensor with values in [0,1].
std::vector<uint8_t> encode_png(const Tensor& pixels);
void write_png(const std::string& path, const Tensor& pixels);
std::string png_data_uri(const Tensor& pixels);  // base64, for HTML embedding

}  // namespace trimodal
