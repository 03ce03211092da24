#include <doctest.h>

#include <sstream>

#include "pcan/bench.hpp"
#include "pcan/nonlocal.hpp"
#include "pcan/pcam.hpp"
#include "support.hpp"

using namespace pcan;
using pcan::testing::random_map;
using pcan::testing::random_matrix;
using pcan::testing::random_protos;

namespace {

PrototypeSet scalar_protos(std::vector<double> means, std::vector<double> values, double sigma2) {
  PrototypeSet p;
  const auto n = means.size();
  p.key_means = Matrix(n, 1, std::move(means));
  p.value_protos = Matrix(n, 1, std::move(values));
  p.sigma2 = sigma2;
  return p;
}

}  // namespace

TEST_CASE("attend examples") {
  SUBCASE("constant value prototypes") {
    auto p = random_protos(5, 3, 2, 1);
    for (std::size_t j = 0; j < 5; ++j) {
      p.value_protos(j, 0) = 4.0;
      p.value_protos(j, 1) = -1.5;
    }
    const auto y = attend(random_map(3, 3, 3, 2), p);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(y.pixel(i)[0] == doctest::Approx(4.0));
      CHECK(y.pixel(i)[1] == doctest::Approx(-1.5));
    }
  }
  SUBCASE("one-hot limit") {
    auto p = random_protos(4, 2, 3, 3, 1e-6);
    FeatureMap q(1, 4, 2);
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 2; ++c) q.at(0, j, c) = p.key_means(j, c);
    const auto y = attend(q, p);
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(y.at(0, j, c) - p.value_protos(j, c)) < 1e-6);
  }
  SUBCASE("hand-evaluated D=1 read") {
    const auto p = scalar_protos({0.0, 1.0}, {12.689, 17.311}, 0.5);
    const auto y = attend(FeatureMap(1, 1, 1, 0.5), p);
    CHECK(std::abs(y.data()[0] - 15.0) < 1e-3);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(attend(random_map(2, 2, 4, 1), random_protos(3, 3, 2, 1)), Error);
  }
}

TEST_CASE("attend is invariant to prototype order") {
  const auto q = random_map(4, 5, 3, 7);
  const auto p = random_protos(6, 3, 4, 8);
  PrototypeSet r = p;
  const std::size_t perm[] = {3, 0, 5, 1, 4, 2};
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < 3; ++c) r.key_means(j, c) = p.key_means(perm[j], c);
    for (std::size_t c = 0; c < 4; ++c) r.value_protos(j, c) = p.value_protos(perm[j], c);
  }
  CHECK(pcan::testing::max_abs_diff(attend(q, p).data(), attend(q, r).data()) < 1e-12);
}

TEST_CASE("attend equals gaussian non-local attention at the oracle configuration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto mem_keys = random_map(8, 8, 4, 100 + seed);
    const auto mem_values = random_map(8, 8, 3, 200 + seed);
    const auto query = random_map(8, 8, 4, 300 + seed);
    EmConfig cfg;
    cfg.n_protos = 64;
    cfg.n_iters = 0;
    cfg.sigma2 = 0.8;
    cfg.init = InitKind::warm_start;
    cfg.warm_means = mem_keys.pixels();
    const auto protos = build_prototypes(mem_keys.pixels(), mem_values.pixels(), cfg, ValueMode::hard);
    const auto a = attend(query, protos);
    const auto b = nonlocal_attend(query, {mem_keys}, {mem_values}, KernelSpec::gaussian(0.8));
    CHECK(pcan::testing::max_abs_diff(a.data(), b.data()) < 1e-9);
  }
}

TEST_CASE("memory bank") {
  SUBCASE("FIFO eviction") {
    MemoryBank bank(2);
    for (std::int64_t t = 1; t <= 3; ++t) push_frame(bank, random_protos(2, 2, 2, t), t);
    REQUIRE(bank.size() == 2);
    CHECK(bank.frames()[0].frame_index == 2);
    CHECK(bank.frames()[1].frame_index == 3);
    CHECK(*bank.latest_index() == 3);
  }
  SUBCASE("capacity one keeps the latest") {
    MemoryBank bank(1);
    for (std::int64_t t = 0; t < 5; ++t) {
      push_frame(bank, random_protos(2, 2, 2, t), t);
      CHECK(bank.size() == 1);
      CHECK(bank.frames()[0].frame_index == t);
    }
  }
  SUBCASE("default capacity") { CHECK(MemoryBank().capacity() == 32); }
  SUBCASE("errors") {
    CHECK_THROWS_AS(MemoryBank(0), Error);
    MemoryBank bank(3);
    push_frame(bank, random_protos(2, 2, 2, 1), 5);
    CHECK_THROWS_AS(push_frame(bank, random_protos(2, 2, 2, 1), 5), Error);
    CHECK_THROWS_AS(push_frame(bank, random_protos(2, 3, 2, 1), 6), Error);
  }
  SUBCASE("file round trip") {
    MemoryBank bank(4);
    for (std::int64_t t = 0; t < 3; ++t) {
      auto p = random_protos(3, 2, 2, t);
      for (auto& v : p.key_means.data()) v = static_cast<float>(v);
      for (auto& v : p.value_protos.data()) v = static_cast<float>(v);
      push_frame(bank, p, t * 2);
    }
    std::stringstream ss;
    write_bank(ss, bank);
    CHECK(read_bank(ss) == bank);
  }
}

TEST_CASE("reconstruct_all") {
  const auto q = random_map(4, 4, 3, 1);
  SUBCASE("single frame") {
    MemoryBank bank(4);
    push_frame(bank, random_protos(3, 3, 2, 2), 0);
    CHECK(reconstruct_all(bank, q).size() == 1);
  }
  SUBCASE("identical frames give identical reconstructions") {
    MemoryBank bank(4);
    push_frame(bank, random_protos(3, 3, 2, 2), 0);
    push_frame(bank, random_protos(3, 3, 2, 2), 1);
    const auto r = reconstruct_all(bank, q);
    CHECK(r[0].y == r[1].y);
  }
  SUBCASE("matches per-frame attend") {
    MemoryBank bank(4);
    for (std::int64_t t = 0; t < 3; ++t) push_frame(bank, random_protos(5, 3, 2, 11 + t), t);
    const auto r = reconstruct_all(bank, q);
    REQUIRE(r.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(r[t].source_index == static_cast<std::int64_t>(t));
      CHECK(r[t].y == attend(q, bank.frames()[t].protos));
    }
    CHECK(reconstruct_all(bank, q, 2).size() == 2);
  }
}

TEST_CASE("aggregate") {
  SUBCASE("no reconstructions") {
    const auto v = random_map(2, 3, 2, 5);
    const auto r = aggregate({}, v);
    CHECK(r.y_bar == v);
    for (double w : r.weights.data()) CHECK(w == 1.0);
  }
  SUBCASE("reconstruction equal to current") {
    const auto v = random_map(2, 3, 2, 5);
    const auto r = aggregate({{v, 0}}, v);
    for (double w : r.weights.data()) CHECK(w == doctest::Approx(0.5));
    CHECK(pcan::testing::max_abs_diff(r.y_bar.data(), v.data()) < 1e-12);
  }
  SUBCASE("hand-evaluated scalar case") {
    const auto r = aggregate({{FeatureMap(1, 1, 1, 3.0), 0}}, FeatureMap(1, 1, 1, 1.0));
    CHECK(std::abs(r.y_bar.data()[0] - 2.7616) < 1e-3);
    CHECK(std::abs(r.weights.data()[0] - 0.8808) < 1e-4);  // reconstruction
    CHECK(std::abs(r.weights.data()[1] - 0.1192) < 1e-4);  // current frame
  }
  SUBCASE("weights sum to one and the output stays in the convex hull") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto keys = random_map(4, 4, 3, seed);
      const auto vals = random_map(4, 4, 2, seed + 40);
      MemoryBank bank(8);
      for (std::int64_t t = 0; t < 3; ++t) {
        const auto mk = random_map(4, 4, 3, 1000 * seed + t);
        const auto mv = random_map(4, 4, 2, 2000 * seed + t);
        EmConfig cfg;
        cfg.n_protos = 4;
        cfg.seed = seed;
        push_frame(bank, build_prototypes(mk.pixels(), mv.pixels(), cfg, ValueMode::normalized), t);
      }
      const auto recs = reconstruct_all(bank, keys);
      const auto r = aggregate(recs, vals);
      for (std::size_t i = 0; i < 16; ++i) {
        double s = 0.0;
        for (double w : r.weights.pixel(i)) s += w;
        CHECK(std::abs(s - 1.0) < 1e-9);
        for (std::size_t c = 0; c < 2; ++c) {
          double lo = vals.pixel(i)[c], hi = lo;
          for (const auto& rec : recs) {
            lo = std::min(lo, rec.y.pixel(i)[c]);
            hi = std::max(hi, rec.y.pixel(i)[c]);
          }
          CHECK(r.y_bar.pixel(i)[c] >= lo - 1e-12);
          CHECK(r.y_bar.pixel(i)[c] <= hi + 1e-12);
        }
      }
    }
  }
  SUBCASE("grid mismatch") {
    CHECK_THROWS_AS(aggregate({{random_map(2, 2, 2, 1), 0}}, random_map(2, 3, 2, 1)), Error);
  }
}

TEST_CASE("multi-level aggregation") {
  MemoryBank bank(4);
  for (std::int64_t t = 0; t < 2; ++t) push_frame(bank, random_protos(4, 3, 2, 30 + t), t);
  const auto keys = random_map(3, 3, 3, 1);
  const auto vals = random_map(3, 3, 2, 2);

  const auto single = multi_level_aggregate({{3, LevelInput{keys, vals, &bank}}});
  const auto direct = aggregate(reconstruct_all(bank, keys), vals);
  CHECK(single.at(3).y_bar == direct.y_bar);
  CHECK(single.at(3).weights == direct.weights);

  const auto three = multi_level_aggregate(
      {{3, LevelInput{keys, vals, &bank}}, {4, LevelInput{keys, vals, &bank}}, {5, LevelInput{keys, vals, &bank}}});
  CHECK(three.at(3).y_bar == three.at(4).y_bar);
  CHECK(three.at(4).y_bar == three.at(5).y_bar);

  CHECK_THROWS_AS(multi_level_aggregate({}), Error);
  CHECK_THROWS_AS(multi_level_aggregate({{3, LevelInput{keys, vals, nullptr}}}), Error);
}

TEST_CASE("per-level cost is linear in the level pixel count") {
  CostDims base;
  base.key_dim = 64;
  base.value_dim = 64;
  base.frames = 2;
  std::uint64_t prev_pixels = 0, prev_cost = 0;
  for (auto [h, w] : {std::pair<std::uint64_t, std::uint64_t>{12, 20}, {23, 40}, {45, 80}}) {
    auto d = base;
    d.height = h;
    d.width = w;
    const auto c = pca_cost(d).analytic_multiplies;
    if (prev_pixels) CHECK(c * prev_pixels == prev_cost * d.pixels());
    prev_pixels = d.pixels();
    prev_cost = c;
  }
}
