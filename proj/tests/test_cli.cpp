#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "pcan/bench.hpp"
#include "pcan/gmm.hpp"
#include "pcan/io.hpp"
#include "pcan/pcam.hpp"
#include "pcan/synth.hpp"
#include "support.hpp"

using namespace pcan;
using pcan::testing::random_map;
using pcan::testing::random_protos;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("pcan_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path operator/(const std::string& p) const { return dir / p; }
};

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = pcan::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string fmap_bytes(const FeatureMap& m) {
  std::ostringstream os;
  write_fmap(os, m);
  return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Two static, separated disks, so perfect detections stay perfect.
const char* kStaticScene = R"([scene]
height = 32
width = 24
frames = 5
noise = 0
allow_occlusion = false

[object.1]
color = 0.9, 0.1, 0.1
x = 7
y = 16
radius = 4

[object.2]
color = 0.1, 0.2, 0.9
x = 17
y = 16
radius = 4

[tracker]
key_dim = 8
value_dim = 8
frame_protos = 8

[corruption]
erosion = 0
)";

}  // namespace

TEST_CASE("cli cluster: trace has iters + 1 non-decreasing entries and reruns are byte-identical") {
  Scratch s("cluster");
  write_fmap(s / "keys.fmap", random_map(45, 80, 8, 11));
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"--seed", "5", "--out-dir", (s / out).string(), "cluster", (s / "keys.fmap").string(),
                        "--protos", "64"});
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(s / "a/protos.pcap") == slurp(s / "b/protos.pcap"));
  CHECK(slurp(s / "a/trace.json") == slurp(s / "b/trace.json"));
  const auto trace = read_json(s / "a/trace.json")["likelihood_trace"].get<std::vector<double>>();
  REQUIRE(trace.size() == 7);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-9 * std::abs(trace[i - 1]));
}

TEST_CASE("cli cluster matches the library call and a zero-iteration warm start reproduces its input") {
  Scratch s("cluster_parity");
  const auto keys = random_map(12, 10, 4, 21);
  const auto values = random_map(12, 10, 3, 22);
  write_fmap(s / "k.fmap", keys);
  write_fmap(s / "v.fmap", values);
  REQUIRE(invoke({"--seed", "9", "--out-dir", (s / "a").string(), "cluster", (s / "k.fmap").string(), "--values",
               (s / "v.fmap").string(), "--protos", "6", "--value-mode", "normalized"})
              .code == 0);

  EmConfig em;
  em.n_protos = 6;
  em.seed = 9;
  const auto lib = build_prototypes(to_float_precision(keys).pixels(), to_float_precision(values).pixels(), em,
                                    ValueMode::normalized);
  std::ostringstream os;
  write_protos(os, lib);
  CHECK(slurp(s / "a/protos.pcap") == os.str());

  REQUIRE(invoke({"--out-dir", (s / "w").string(), "cluster", (s / "k.fmap").string(), "--values",
               (s / "v.fmap").string(), "--iters", "0", "--init", "warm", "--warm", (s / "a/protos.pcap").string(),
               "--value-mode", "normalized"})
              .code == 0);
  const auto a = read_protos(s / "a/protos.pcap");
  const auto w = read_protos(s / "w/protos.pcap");
  CHECK(w.key_means == a.key_means);
  CHECK(pcan::testing::max_abs_diff(w.value_protos.data(), a.value_protos.data()) < 1e-6);
}

TEST_CASE("cli config values apply and flags override them") {
  Scratch s("override");
  write_fmap(s / "k.fmap", random_map(6, 6, 2, 3));
  write_file(s / "em.ini", "[em]\nprotos = 5\niters = 2\n");
  REQUIRE(invoke({"--out-dir", (s / "a").string(), "cluster", (s / "k.fmap").string(), "--config",
               (s / "em.ini").string()})
              .code == 0);
  auto t = read_json(s / "a/trace.json");
  CHECK(t["n_protos"] == 5);
  CHECK(t["likelihood_trace"].size() == 3);
  REQUIRE(invoke({"--out-dir", (s / "b").string(), "cluster", (s / "k.fmap").string(), "--config",
               (s / "em.ini").string(), "--protos", "3"})
              .code == 0);
  t = read_json(s / "b/trace.json");
  CHECK(t["n_protos"] == 3);
  CHECK(t["likelihood_trace"].size() == 3);
}

TEST_CASE("cli attend: single frame, identical frames and library parity") {
  Scratch s("attend");
  const auto keys = random_map(5, 6, 4, 31);
  const auto values = random_map(5, 6, 3, 32);
  write_fmap(s / "k.fmap", keys);
  write_fmap(s / "v.fmap", values);
  const auto kq = read_fmap(s / "k.fmap");
  const auto vq = read_fmap(s / "v.fmap");

  SUBCASE("single-frame bank returns the value map") {
    fs::create_directories(s / "bank");
    write_protos(s / "bank/frame_0.pcap", random_protos(4, 4, 3, 33));
    REQUIRE(invoke({"--out-dir", (s / "o").string(), "attend", (s / "k.fmap").string(), "--values",
                 (s / "v.fmap").string(), "--bank", (s / "bank").string()})
                .code == 0);
    CHECK(read_fmap(s / "o/ybar.fmap") == vq);
  }
  SUBCASE("identical frames get identical weights") {
    fs::create_directories(s / "bank");
    const auto p = random_protos(4, 4, 3, 34);
    for (int i = 0; i < 4; ++i) write_protos(s / ("bank/frame_" + std::to_string(i) + ".pcap"), p);
    REQUIRE(invoke({"--out-dir", (s / "o").string(), "attend", (s / "k.fmap").string(), "--values",
                 (s / "v.fmap").string(), "--bank", (s / "bank").string()})
                .code == 0);
    const auto w = read_fmap(s / "o/weights.fmap");
    REQUIRE(w.channels() == 4);
    for (std::size_t i = 0; i < w.pixel_count(); ++i) {
      CHECK(w.pixel(i)[0] == w.pixel(i)[1]);
      CHECK(w.pixel(i)[1] == w.pixel(i)[2]);
    }
  }
  SUBCASE("3-frame random bank matches the library byte-for-byte") {
    fs::create_directories(s / "bank");
    MemoryBank bank(3);
    for (int i = 0; i < 3; ++i) {
      write_protos(s / ("bank/f" + std::to_string(i) + ".pcap"), random_protos(5, 4, 3, 40 + i));
      bank.push(read_protos(s / ("bank/f" + std::to_string(i) + ".pcap")), i);
    }
    REQUIRE(invoke({"--out-dir", (s / "o").string(), "attend", (s / "k.fmap").string(), "--values",
                 (s / "v.fmap").string(), "--bank", (s / "bank").string(), "--current-index", "3"})
                .code == 0);
    const auto lib = aggregate(reconstruct_all(bank, kq, 3), vq);
    CHECK(slurp(s / "o/ybar.fmap") == fmap_bytes(lib.y_bar));
    CHECK(slurp(s / "o/weights.fmap") == fmap_bytes(lib.weights));

    write_bank(s / "bank.pcab", bank);
    REQUIRE(invoke({"--out-dir", (s / "p").string(), "attend", (s / "k.fmap").string(), "--values",
                 (s / "v.fmap").string(), "--bank", (s / "bank.pcab").string(), "--current-index", "3"})
                .code == 0);
    CHECK(slurp(s / "p/ybar.fmap") == slurp(s / "o/ybar.fmap"));
  }
}

TEST_CASE("cli exit codes") {
  Scratch s("exit");
  write_fmap(s / "k.fmap", random_map(4, 4, 2, 1));
  fs::create_directories(s / "empty");
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"nosuch"}).code == 2);
  CHECK(invoke({"cluster"}).code == 2);
  CHECK(invoke({"--threads", "0", "synth"}).code == 2);
  CHECK(invoke({"attend", (s / "k.fmap").string(), "--values", (s / "k.fmap").string(), "--bank",
             (s / "empty").string()})
            .code == 2);
  CHECK(invoke({"cluster", (s / "missing.fmap").string()}).code == 3);
  write_file(s / "junk.fmap", "JUNKJUNKJUNK");
  CHECK(invoke({"cluster", (s / "junk.fmap").string()}).code == 3);
  write_file(s / "short.fmap", "PC");
  CHECK(invoke({"cluster", (s / "short.fmap").string()}).code == 3);
  CHECK(invoke({"track", (s / "missing.ini").string()}).code == 3);
  write_file(s / "bad.ini", "[tracker]\nunknown_key = 1\n");
  CHECK(invoke({"track", (s / "bad.ini").string()}).code == 2);
  write_file(s / "bad2.ini", "[tracker]\ncapacity = zero\n");
  CHECK(invoke({"track", (s / "bad2.ini").string()}).code == 2);
  write_file(s / "bad3.ini", "[bench]\nheights = 8\n");
  CHECK(invoke({"track", (s / "bad3.ini").string()}).code == 2);

  auto nan_map = random_map(4, 4, 2, 2);
  nan_map.at(1, 1, 0) = std::numeric_limits<double>::quiet_NaN();
  write_fmap(s / "nan.fmap", nan_map);
  CHECK(invoke({"--out-dir", (s / "o").string(), "cluster", (s / "nan.fmap").string(), "--protos", "2"}).code == 4);
}

TEST_CASE("cli track: perfect detections report IoU 1, capacity runs emit separate metric files") {
  Scratch s("track");
  write_file(s / "scene.ini", kStaticScene);
  for (const char* cap : {"1", "8"}) {
    const auto r = invoke({"--json", "--out-dir", (s / "o").string(), "track", (s / "scene.ini").string(),
                        "--capacity", cap});
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary["metrics"]["mean_iou"].get<double>() == 1.0);
    CHECK(summary["metrics"]["id_switches"] == 0);
  }
  CHECK(fs::exists(s / "o/metrics_cap1.json"));
  CHECK(fs::exists(s / "o/metrics_cap8.json"));
  const auto doc = read_json(s / "o/track_output.json");
  REQUIRE(doc["frames"].size() == 5);
  CHECK(doc["frames"][0]["tracks"].size() == 2);
  CHECK(fs::exists(s / "o/masks/frame_0004_track_2.pgm"));
}

TEST_CASE("cli track matches run_tracker and reruns are byte-identical") {
  Scratch s("track_parity");
  write_file(s / "t.ini", "[tracker]\nkey_dim = 8\nvalue_dim = 8\nframe_protos = 8\n");
  for (const char* out : {"a", "b"})
    REQUIRE(invoke({"--seed", "4", "--out-dir", (s / out).string(), "track", (s / "t.ini").string(), "--frames", "6"})
                .code == 0);
  CHECK(slurp(s / "a/track_output.json") == slurp(s / "b/track_output.json"));

  TrackerConfig tc;
  tc.key_dim = tc.value_dim = tc.frame_protos = 8;
  const auto lib = run_tracker(crossing_scene(4, 6, 0.1), tc);
  const auto doc = read_json(s / "a/track_output.json");
  CHECK(doc["metrics"]["mean_iou"].get<double>() == lib.metrics.mean_iou);
  CHECK(doc["initial_metrics"]["mean_iou"].get<double>() == lib.initial_metrics.mean_iou);
  for (std::size_t t = 0; t < lib.frames.size(); ++t) {
    for (const auto& [id, mask] : lib.frames[t].tracks) {
      char name[64];
      std::snprintf(name, sizeof name, "masks/frame_%04zu_track_%lld.pgm", t, static_cast<long long>(id));
      CHECK(read_pgm(s / "a" / name) == mask);
    }
  }
}

TEST_CASE("cli synth and bench match the library") {
  Scratch s("synth_bench");
  REQUIRE(invoke({"--seed", "2", "--out-dir", (s / "syn").string(), "synth", "--frames", "3"}).code == 0);
  const auto seq = generate_sequence(crossing_scene(2, 3, 0.1));
  for (std::size_t t = 0; t < 3; ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "frames/frame_%04zu.fmap", t);
    CHECK(slurp(s / "syn" / name) == fmap_bytes(seq.frames[t]));
    std::snprintf(name, sizeof name, "masks/frame_%04zu_obj_1.pgm", t);
    CHECK(read_pgm(s / "syn" / name) == seq.gt_masks[t][0]);
  }

  write_file(s / "b.ini", "[bench]\nmechanisms = pca, nonlocal\nheights = 6\nwidths = 5\nframes = 1,2\nn_protos = 8\ninstrumented = true\n");
  REQUIRE(invoke({"--out-dir", (s / "b").string(), "bench", (s / "b.ini").string()}).code == 0);
  BenchConfig bc;
  bc.mechanisms = {Mechanism::pca, Mechanism::nonlocal};
  bc.heights = {6};
  bc.widths = {5};
  bc.frames = {1, 2};
  bc.n_protos = 8;
  bc.instrumented = true;
  const auto lib = run_suite(bc);
  CHECK(slurp(s / "b/costs.csv") == lib.csv);
  CHECK(slurp(s / "b/costs.svg") == lib.svg);
}
