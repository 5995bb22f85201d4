#include "spoa/container.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "spoa/errors.hpp"

namespace spoa {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ValidationError(source_ + ": truncated checkpoint");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }

  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return std::bit_cast<double>(v);
  }

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_container(const std::vector<NamedArray>& records) {
  std::string out(kContainerMagic);
  for (const auto& r : records) {
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.data.size()) {
      throw ValidationError("container record '" + r.name + "': dims do not match payload size");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    for (auto d : r.dims) put_u32(out, d);
    for (double v : r.data) put_f64(out, v);
  }
  return out;
}

std::vector<NamedArray> decode_container(std::string_view bytes, const std::string& source) {
  if (bytes.substr(0, kContainerMagic.size()) != kContainerMagic) {
    throw ValidationError(source + ": not a SPOA1 checkpoint (bad magic)");
  }
  Reader in(bytes.substr(kContainerMagic.size()), source);
  std::vector<NamedArray> records;
  while (!in.done()) {
    NamedArray r;
    const auto name_len = in.u32();
    r.name = std::string(in.take(name_len));
    std::uint64_t count = 1;
    for (auto& d : r.dims) {
      d = in.u32();
      count *= d;
    }
    if (count > bytes.size() / 8) throw ValidationError(source + ": truncated checkpoint");
    r.data.resize(static_cast<std::size_t>(count));
    for (auto& v : r.data) v = in.f64();
    records.push_back(std::move(r));
  }
  return records;
}

void write_container(const std::filesystem::path& path, const std::vector<NamedArray>& records) {
  const std::string bytes = encode_container(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedArray> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path.string());
}

}  // namespace spoa
