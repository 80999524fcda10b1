#pragma once

#include <string>
#include <vector>

#include "unblur/tensor.hpp"

namespace unblur {

// Images are [H, W, 3] float tensors in [-1, 1]. Files are 8-bit RGB PNG
// with the mapping q = round(255 * (v + 1) / 2), v = 2q/255 - 1.
using Image = Tensor<float>;

std::vector<std::uint8_t> quantize_image(const Image& img);
Image dequantize_image(const std::vector<std::uint8_t>& px, int h, int w);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// exact PNG byte stream for roundtrip/identity checks
std::vector<std::uint8_t> encode_png(const Image& img);

Image stack_rows(const std::vector<Image>& imgs);  // [B, H, W, 3]

}  // namespace unblur
