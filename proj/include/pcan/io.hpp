#pragma once

#include <filesystem>
#include <iosfwd>

#include "pcan/core.hpp"
#include "pcan/mask.hpp"

namespace pcan {

// .fmap layout: "PCAF", u16 version (1), u32 height, u32 width, u32 channels,
// then height*width*channels float32, all little-endian, row-major (y, x, c).
// Values are narrowed to float32 on write, so a round trip is exact for maps
// whose entries are representable as float.
inline constexpr std::uint16_t kFmapVersion = 1;
// Upper bound on elements accepted from a header; larger claims are rejected
// before any allocation.
inline constexpr std::uint64_t kMaxFmapElements = std::uint64_t{1} << 31;

void write_fmap(std::ostream& os, const FeatureMap& map);
FeatureMap read_fmap(std::istream& is);
void write_fmap(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_fmap(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255). Foreground is written as 255; on read any
// value >= 128 counts as foreground.
void write_pgm(std::ostream& os, const MaskMap& mask);
MaskMap read_pgm(std::istream& is);
void write_pgm(const std::filesystem::path& path, const MaskMap& mask);
MaskMap read_pgm(const std::filesystem::path& path);

// Rounds every entry to float precision (what a .fmap round trip preserves).
FeatureMap to_float_precision(FeatureMap map);

}  // namespace pcan
