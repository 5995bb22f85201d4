#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spoa/tensor.hpp"

namespace spoa {

/// 8-bit interleaved image with 1 (PGM) or 3 (PPM) channels.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Binary P5/P6 with maxval 255.
ImageBuffer decode_pnm(std::string_view bytes, const std::string& source = "<memory>");
std::string encode_pnm(const ImageBuffer& image);

ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

/// Pixels scaled into [0, 1].
Tensor to_tensor(const ImageBuffer& image);
/// Clamps to [0, 1], scales by 255 and rounds half away from zero.
ImageBuffer from_tensor(const Tensor& t);

}  // namespace spoa
