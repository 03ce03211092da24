#include "pcan/io.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "pcan/detail/binary.hpp"

namespace pcan {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open for reading: " + path.string());
  return is;
}

void finish_write(std::ostream& os, const std::filesystem::path& path) {
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

}  // namespace

void write_fmap(std::ostream& os, const FeatureMap& map) {
  binary::put_magic(os, "PCAF");
  binary::put_le<std::uint16_t>(os, kFmapVersion);
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.height()));
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.width()));
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.channels()));
  for (double v : map.data()) binary::put_f32(os, v);
}

FeatureMap read_fmap(std::istream& is) {
  binary::expect_magic(is, "PCAF", ".fmap");
  const auto version = binary::get_le<std::uint16_t>(is, ".fmap version");
  require(version == kFmapVersion, Errc::unsupported, "unsupported .fmap version " + std::to_string(version));
  const std::uint64_t h = binary::get_le<std::uint32_t>(is, ".fmap height");
  const std::uint64_t w = binary::get_le<std::uint32_t>(is, ".fmap width");
  const std::uint64_t c = binary::get_le<std::uint32_t>(is, ".fmap channels");
  require(h > 0 && w > 0 && c > 0, Errc::invalid_argument, ".fmap header has a zero dimension");
  // Each factor is < 2^32, so h*w fits in 64 bits; check before the final product.
  const std::uint64_t hw = h * w;
  require(hw <= kMaxFmapElements && hw * c <= kMaxFmapElements, Errc::dimension_overflow,
          ".fmap header dimensions exceed the supported element count");
  const std::size_t n = static_cast<std::size_t>(hw * c);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = binary::get_f32(is, ".fmap payload");
  return FeatureMap(h, w, c, std::move(data));
}

void write_fmap(const std::filesystem::path& path, const FeatureMap& map) {
  auto os = open_out(path);
  write_fmap(os, map);
  finish_write(os, path);
}

FeatureMap read_fmap(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_fmap(is);
}

FeatureMap to_float_precision(FeatureMap map) {
  for (auto& v : map.pixels().data()) v = static_cast<double>(static_cast<float>(v));
  return map;
}

void write_pgm(std::ostream& os, const MaskMap& mask) {
  os << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  for (std::size_t i = 0; i < mask.size(); ++i) os.put(mask[i] ? static_cast<char>(255) : static_cast<char>(0));
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  require(!tok.empty(), Errc::truncated, "truncated PGM header");
  return tok;
}

std::size_t pgm_number(std::istream& is, const char* what) {
  const auto tok = pgm_token(is);
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == tok.size(), Errc::invalid_argument, std::string("bad PGM ") + what + ": " + tok);
  return static_cast<std::size_t>(v);
}

}  // namespace

MaskMap read_pgm(std::istream& is) {
  char magic[2] = {};
  is.read(magic, 2);
  require(is.gcount() == 2 && magic[0] == 'P' && magic[1] == '5', Errc::bad_magic, "not a binary PGM (P5)");
  const std::size_t w = pgm_number(is, "width");
  const std::size_t h = pgm_number(is, "height");
  const std::size_t maxval = pgm_number(is, "maxval");
  require(w > 0 && h > 0, Errc::invalid_argument, "PGM has a zero dimension");
  require(maxval == 255, Errc::unsupported, "only maxval 255 PGM masks are supported");
  require(static_cast<std::uint64_t>(w) * h <= kMaxFmapElements, Errc::dimension_overflow, "PGM too large");
  std::vector<std::uint8_t> values(w * h);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size()));
  require(is.gcount() == static_cast<std::streamsize>(values.size()), Errc::truncated, "truncated PGM payload");
  for (auto& v : values) v = v >= 128 ? 1 : 0;
  return MaskMap(h, w, std::move(values));
}

void write_pgm(const std::filesystem::path& path, const MaskMap& mask) {
  auto os = open_out(path);
  write_pgm(os, mask);
  finish_write(os, path);
}

MaskMap read_pgm(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_pgm(is);
}

}  // namespace pcan
