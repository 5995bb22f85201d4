#include "spoa/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "spoa/errors.hpp"

namespace spoa {

namespace {

class HeaderParser {
 public:
  HeaderParser(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) fail("header value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail("malformed header");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) fail("malformed header");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw ValidationError(source_ + ": " + what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 2;
};

}  // namespace

ImageBuffer decode_pnm(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ValidationError(source + ": not a binary PGM/PPM file");
  }
  HeaderParser header(bytes, source);
  ImageBuffer image;
  image.channels = bytes[1] == '5' ? 1 : 3;
  image.width = header.number();
  image.height = header.number();
  const std::size_t maxval = header.number();
  if (maxval != 255) header.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (image.width == 0 || image.height == 0) header.fail("zero image dimension");
  header.single_space();

  const std::size_t expected = image.width * image.height * image.channels;
  const std::size_t available = bytes.size() - header.position();
  if (available < expected) {
    header.fail("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                std::to_string(available));
  }
  auto raster = bytes.substr(header.position(), expected);
  image.pixels.assign(raster.begin(), raster.end());
  return image;
}

std::string encode_pnm(const ImageBuffer& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("encode_pnm: channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw ValidationError("encode_pnm: pixel count does not match dimensions");
  }
  std::string out = image.channels == 1 ? "P5\n" : "P6\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

ImageBuffer load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes, path.string());
}

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
  const std::string bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor to_tensor(const ImageBuffer& image) {
  Tensor t({image.height, image.width, image.channels});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
  return t;
}

ImageBuffer from_tensor(const Tensor& t) {
  if (t.channels() != 1 && t.channels() != 3) throw ValidationError("from_tensor: channels must be 1 or 3");
  ImageBuffer image{t.width(), t.height(), t.channels(), std::vector<std::uint8_t>(t.size())};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(t[i], 0.0, 1.0) * 255.0;
    image.pixels[i] = static_cast<std::uint8_t>(std::round(v));
  }
  return image;
}

}  // namespace spoa
