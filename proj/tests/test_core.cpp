#include <doctest.h>

#include <cstring>
#include <sstream>

#include "pcan/io.hpp"
#include "pcan/mask.hpp"
#include "support.hpp"

using namespace pcan;
using pcan::testing::random_map;

TEST_CASE("softmax examples") {
  const std::vector<double> zero{0.0, 0.0};
  auto p = softmax(zero);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  const std::vector<double> single{-123.0};
  CHECK(softmax(single)[0] == 1.0);

  const std::vector<double> l{0.0, -1.0};
  p = softmax(l);
  CHECK(p[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(0.26894).epsilon(1e-5));

  CHECK_THROWS_AS(softmax(std::vector<double>{}), Error);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  RngStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(1 + rng.below(20));
    for (auto& v : x) v = 30.0 * rng.normal();
    const double c = 100.0 * rng.normal();
    auto shifted = x;
    for (auto& v : shifted) v += c;
    const auto a = softmax(x), b = softmax(shifted);
    double sum = 0.0;
    for (double v : a) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(pcan::testing::max_abs_diff(a, b) < 1e-12);
  }
}

TEST_CASE("sq_dist examples") {
  const std::vector<double> a{1.0, 2.0}, b{4.0, 6.0};
  CHECK(sq_dist(a, a) == 0.0);
  CHECK(sq_dist(std::vector<double>{0.0}, std::vector<double>{1.0}) == 1.0);
  CHECK(sq_dist(a, b) == 25.0);
  CHECK_THROWS_AS(sq_dist(a, std::vector<double>{1.0}), Error);
}

TEST_CASE("feature map validation") {
  CHECK_THROWS_AS(FeatureMap(0, 2, 1), Error);
  CHECK_THROWS_AS(FeatureMap(2, 2, 1, std::vector<double>(3)), Error);
  try {
    FeatureMap(1, 1, 1, std::vector<double>{std::nan("")});
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::numeric);
  }
}

TEST_CASE("encode_keys_values") {
  const auto frame = random_map(2, 2, 3, 1);

  SUBCASE("identity projection reproduces the frame") {
    const auto kv = encode_keys_values(frame, ProjectionParams::identity(3));
    CHECK(kv.keys == frame);
    CHECK(kv.values == frame);
  }
  SUBCASE("zero weights give zero maps") {
    ProjectionParams p;
    p.key_weights = Matrix(3, 4);
    p.value_weights = Matrix(3, 2);
    const auto kv = encode_keys_values(frame, p);
    for (double v : kv.keys.data()) CHECK(v == 0.0);
    for (double v : kv.values.data()) CHECK(v == 0.0);
  }
  SUBCASE("seeded weights match a per-pixel matmul") {
    const auto p = ProjectionParams::seeded(3, 4, 5, 7);
    const auto kv = encode_keys_values(frame, p);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t d = 0; d < 4; ++d) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += frame.pixel(i)[c] * p.key_weights(c, d);
        CHECK(kv.keys.pixel(i)[d] == doctest::Approx(s).epsilon(1e-12));
      }
      for (std::size_t d = 0; d < 5; ++d) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += frame.pixel(i)[c] * p.value_weights(c, d);
        CHECK(kv.values.pixel(i)[d] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
  SUBCASE("channel mismatch is rejected") {
    CHECK_THROWS_AS(encode_keys_values(frame, ProjectionParams::identity(4)), Error);
  }
}

TEST_CASE("encode_keys_values is linear") {
  const auto p = ProjectionParams::seeded(5, 6, 3, 9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f1 = random_map(3, 4, 5, seed), f2 = random_map(3, 4, 5, seed + 100);
    const double a = 0.7, b = -1.3;
    std::vector<double> mix(f1.data().size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * f1.data()[i] + b * f2.data()[i];
    const auto e = encode_keys_values(FeatureMap(3, 4, 5, mix), p);
    const auto e1 = encode_keys_values(f1, p), e2 = encode_keys_values(f2, p);
    for (std::size_t i = 0; i < e.keys.data().size(); ++i)
      CHECK(std::abs(e.keys.data()[i] - (a * e1.keys.data()[i] + b * e2.keys.data()[i])) < 1e-9);
    for (std::size_t i = 0; i < e.values.data().size(); ++i)
      CHECK(std::abs(e.values.data()[i] - (a * e1.values.data()[i] + b * e2.values.data()[i])) < 1e-9);
  }
}

TEST_CASE("rng streams are reproducible") {
  RngStream a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  auto d1 = RngStream::derive(5, 1, 2), d2 = RngStream::derive(5, 1, 2), d3 = RngStream::derive(5, 2, 1);
  CHECK(d1.next_u64() == d2.next_u64());
  CHECK(d1.next_u64() != d3.next_u64());
  RngStream u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("parallel_for results do not depend on the thread count") {
  const auto frame = random_map(17, 13, 6, 4);
  const auto p = ProjectionParams::seeded(6, 8, 8, 2);
  const auto before = thread_count();
  set_thread_count(1);
  const auto one = encode_keys_values(frame, p);
  set_thread_count(4);
  const auto four = encode_keys_values(frame, p);
  set_thread_count(before);
  CHECK(one.keys == four.keys);
  CHECK(one.values == four.values);
}

TEST_CASE("compensated sum") {
  CompensatedSum<double> s;
  s.add(1.0);
  for (int i = 0; i < 1000; ++i) s.add(1e-16);
  s.add(-1.0);
  CHECK(s.value() == doctest::Approx(1e-13).epsilon(1e-6));
}

TEST_CASE("fmap round trip") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed);
    const auto map = to_float_precision(random_map(1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(4), seed));
    std::stringstream ss;
    write_fmap(ss, map);
    CHECK(read_fmap(ss) == map);
  }
}

namespace {

std::string fmap_header(const char* magic, std::uint16_t version, std::uint32_t h, std::uint32_t w, std::uint32_t c) {
  std::string s(magic, 4);
  s.append(reinterpret_cast<const char*>(&version), 2);
  for (std::uint32_t v : {h, w, c}) s.append(reinterpret_cast<const char*>(&v), 4);
  return s;
}

Errc read_error(const std::string& bytes) {
  std::stringstream ss(bytes);
  try {
    read_fmap(ss);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io;
}

}  // namespace

TEST_CASE("fmap errors") {
  CHECK(read_error(fmap_header("PCAX", 1, 1, 1, 1) + std::string(4, '\0')) == Errc::bad_magic);
  CHECK(read_error(fmap_header("PCAF", 1, 2, 2, 1) + std::string(12, '\0')) == Errc::truncated);
  CHECK(read_error(fmap_header("PCAF", 2, 1, 1, 1) + std::string(4, '\0')) == Errc::unsupported);
  CHECK(read_error(fmap_header("PCAF", 1, 65536, 65536, 1)) == Errc::dimension_overflow);
  CHECK(read_error(fmap_header("PCAF", 1, 0, 2, 1)) == Errc::invalid_argument);
  CHECK(read_error("PC") == Errc::truncated);
  try {
    read_fmap(std::filesystem::path("/nonexistent/dir/x.fmap"));
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
}

TEST_CASE("fmap layout is little-endian float32 row-major") {
  FeatureMap m(1, 2, 1, std::vector<double>{1.0, -2.0});
  std::stringstream ss;
  write_fmap(ss, m);
  const auto bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 2 + 12 + 8);
  CHECK(bytes.substr(0, 4) == "PCAF");
  float v;
  std::memcpy(&v, bytes.data() + 18, 4);
  CHECK(v == 1.0f);
  std::memcpy(&v, bytes.data() + 22, 4);
  CHECK(v == -2.0f);
}

TEST_CASE("masks and pgm") {
  MaskMap m(3, 4);
  CHECK(m.empty());
  CHECK_FALSE(m.box().has_value());
  m.set(1, 2, true);
  m.set(2, 3, true);
  CHECK(m.area() == 2);
  CHECK(*m.box() == Box{2, 1, 3, 2});
  m.set(1, 2, false);
  CHECK(*m.box() == Box{3, 2, 3, 2});

  std::stringstream ss;
  write_pgm(ss, m);
  CHECK(read_pgm(ss) == m);

  std::stringstream gray("P5\n# comment\n2 1\n255\n");
  gray.seekp(0, std::ios::end);
  gray.put(static_cast<char>(127));
  gray.put(static_cast<char>(128));
  const auto g = read_pgm(gray);
  CHECK_FALSE(g.at(0, 0));
  CHECK(g.at(0, 1));

  std::stringstream bad("P2\n1 1\n255\n0");
  CHECK_THROWS_AS(read_pgm(bad), Error);
}

TEST_CASE("mask iou") {
  MaskMap a(2, 2), b(2, 2);
  CHECK(mask_iou(a, b) == 0.0);
  a.set(0, 0, true);
  a.set(0, 1, true);
  b.set(0, 1, true);
  b.set(1, 1, true);
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == 1.0);
  CHECK_THROWS_AS(mask_iou(a, MaskMap(3, 2)), Error);
}
