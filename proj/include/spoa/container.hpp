#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spoa {

inline constexpr std::string_view kContainerMagic = "SPOA1";

/// One record of the flat binary container.
struct NamedArray {
  std::string name;
  std::array<std::uint32_t, 4> dims{1, 1, 1, 1};
  std::vector<double> data;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// Layout: "SPOA1", then per record: u32 name length, name bytes,
// 4 x u32 dims, f64 payload (product of dims values). All little-endian.
// Records run until end of file.
std::string encode_container(const std::vector<NamedArray>& records);
std::vector<NamedArray> decode_container(std::string_view bytes, const std::string& source = "<memory>");

void write_container(const std::filesystem::path& path, const std::vector<NamedArray>& records);
std::vector<NamedArray> read_container(const std::filesystem::path& path);

}  // namespace spoa
