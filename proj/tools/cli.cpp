#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "pcan/bench.hpp"
#include "pcan/core.hpp"
#include "pcan/error.hpp"
#include "pcan/gmm.hpp"
#include "pcan/io.hpp"
#include "pcan/pcam.hpp"
#include "pcan/synth.hpp"

namespace pcan::cli {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  fs::path out_dir = ".";
  bool json = false;
};

// ---- value parsing ----

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos > 0 && pos == text.size(), Errc::invalid_argument, "config: " + key + " is not a number: " + text);
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  const bool digits = !text.empty() && std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); });
  try {
    if (digits) v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(digits && pos == text.size(), Errc::invalid_argument,
          "config: " + key + " is not a non-negative integer: " + text);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  fail(Errc::invalid_argument, "config: " + key + " is not a boolean: " + text);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

Rgb parse_rgb(const std::string& key, const std::string& text) {
  const auto parts = split_list(text);
  require(parts.size() == 3, Errc::invalid_argument, "config: " + key + " needs three comma-separated values");
  return {parse_double(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2])};
}

std::vector<std::uint64_t> parse_uint_list(const std::string& key, const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& p : split_list(text)) out.push_back(parse_uint(key, p));
  return out;
}

// ---- config file ----

// One [section]: values are pulled by key and anything left over is an error.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> take(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }
  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }
  std::string qualified(const std::string& key) const { return name_ + "." + key; }

  void read(const std::string& key, double& v) {
    if (auto s = take(key)) v = parse_double(qualified(key), *s);
  }
  void read(const std::string& key, std::size_t& v) {
    if (auto s = take(key)) v = static_cast<std::size_t>(parse_uint(qualified(key), *s));
  }
  void read(const std::string& key, bool& v) {
    if (auto s = take(key)) v = parse_bool(qualified(key), *s);
  }
  void read(const std::string& key, Rgb& v) {
    if (auto s = take(key)) v = parse_rgb(qualified(key), *s);
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      require(child.empty(), Errc::invalid_argument, "config: nested key in [" + name_ + "]");
      require(used_.count(key) > 0, Errc::invalid_argument, "config: unknown key " + qualified(key));
    }
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

class ConfigFile {
 public:
  ConfigFile() = default;
  explicit ConfigFile(const fs::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), Errc::io, "cannot open config: " + path.string());
    try {
      pt::read_ini(is, root_);
    } catch (const pt::ini_parser_error& e) {
      fail(Errc::invalid_argument, "config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [name, child] : root_)
      require(child.data().empty() || !child.empty(), Errc::invalid_argument,
              "config: key outside a section: " + name);
  }

  Section section(const std::string& name) {
    seen_.insert(name);
    auto it = root_.find(name);
    return Section(name, it == root_.not_found() ? nullptr : &it->second);
  }

  // Names of the [prefix.N] sections in file order.
  std::vector<std::string> sections_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, child] : root_)
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
  }


  void finish(const std::set<std::string>& allowed) const {
    for (const auto& [name, child] : root_) {
      require(allowed.count(name) > 0 || seen_.count(name) > 0, Errc::invalid_argument,
              "config: section [" + name + "] is not used by this command");
    }
  }

 private:
  pt::ptree root_;
  std::set<std::string> seen_;
};

ConfigFile load_config(const std::string& path) { return path.empty() ? ConfigFile() : ConfigFile(path); }

// ---- shared helpers ----

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  os << text;
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Errc::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu", t);
  return buf;
}

// Run lengths over the row-major mask, starting with a (possibly empty) run of 0s.
json rle(const MaskMap& mask) {
  json runs = json::array();
  bool cur = false;
  std::size_t len = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != cur) {
      runs.push_back(len);
      cur = !cur;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

json metrics_json(const TrackMetrics& m) {
  return {{"mean_iou", m.mean_iou},   {"id_switches", m.id_switches},         {"smotsa", m.smotsa},
          {"matched", m.matched},     {"false_positives", m.false_positives}, {"gt_masks", m.gt_masks}};
}

struct Report {
  json summary;
  std::string text;  // human-readable line printed without --json
};

// ---- cluster ----

struct ClusterArgs {
  std::string keys;
  std::string values;
  std::string config;
  std::string warm;
  std::size_t protos = 64;
  std::size_t iters = 6;
  double sigma2 = 0.5;
  std::string init = "subsample";
  std::string value_mode = "literal";
};

Report cmd_cluster(const Globals& g, const ClusterArgs& a, const CLI::App& sub) {
  auto file = load_config(a.config);
  auto sec = file.section("em");
  EmConfig em;
  em.n_protos = a.protos;
  em.n_iters = a.iters;
  em.sigma2 = a.sigma2;
  std::string init = a.init, mode = a.value_mode, warm = a.warm;
  // file values first, then any flag given on the command line wins
  const bool file_protos = sec.has("protos");
  sec.read("protos", em.n_protos);
  sec.read("iters", em.n_iters);
  sec.read("sigma2", em.sigma2);
  if (auto s = sec.take("init")) init = *s;
  if (auto s = sec.take("value_mode")) mode = *s;
  if (auto s = sec.take("warm")) warm = *s;
  sec.finish();
  file.finish({});
  if (sub.count("--protos")) em.n_protos = a.protos;
  if (sub.count("--iters")) em.n_iters = a.iters;
  if (sub.count("--sigma2")) em.sigma2 = a.sigma2;
  if (sub.count("--init")) init = a.init;
  if (sub.count("--value-mode")) mode = a.value_mode;
  if (sub.count("--warm")) warm = a.warm;

  em.init = parse_init_kind(init);
  em.seed = g.seed;
  const auto value_mode = parse_value_mode(mode);
  const auto keys = read_fmap(fs::path(a.keys));
  const auto values = a.values.empty() ? keys : read_fmap(fs::path(a.values));
  require(keys.same_grid(values), Errc::dimension_mismatch, "cluster: key and value maps have different grids");
  if (em.init == InitKind::warm_start) {
    require(!warm.empty(), Errc::invalid_argument, "cluster: --init warm needs --warm <file.pcap>");
    em.warm_means = read_protos(fs::path(warm)).key_means;
    if (!file_protos && !sub.count("--protos")) em.n_protos = em.warm_means.rows();
  }

  auto fit = fit_gmm(keys.pixels(), em);
  PrototypeSet protos;
  protos.value_protos = value_prototypes(fit.assignments, values.pixels(), value_mode);
  protos.key_means = std::move(fit.means);
  protos.sigma2 = em.sigma2;

  ensure_dir(g.out_dir);
  write_protos(g.out_dir / "protos.pcap", protos);
  json trace = {{"n_protos", protos.n_protos()},   {"key_dim", protos.key_dim()},
                {"value_dim", protos.value_dim()}, {"sigma2", em.sigma2},
                {"iters", em.n_iters},             {"init", std::string(to_string(em.init))},
                {"value_mode", std::string(to_string(value_mode))},
                {"seed", g.seed},                  {"reseeds", fit.reseeds},
                {"likelihood_trace", fit.likelihood_trace}};
  write_text(g.out_dir / "trace.json", trace.dump(2) + "\n");

  Report r;
  r.summary = {{"command", "cluster"},
               {"outputs", {(g.out_dir / "protos.pcap").string(), (g.out_dir / "trace.json").string()}},
               {"final_log_likelihood", fit.likelihood_trace.back()}};
  r.text = "cluster: " + std::to_string(protos.n_protos()) + " prototypes, final log-likelihood " +
           std::to_string(fit.likelihood_trace.back());
  return r;
}

// ---- attend ----

struct AttendArgs {
  std::string keys;
  std::string values;
  std::string bank;
  std::optional<std::int64_t> current;
};

std::int64_t index_from_stem(const fs::path& file) {
  const auto stem = file.stem().string();
  auto start = stem.size();
  while (start > 0 && std::isdigit(static_cast<unsigned char>(stem[start - 1]))) --start;
  require(start < stem.size(), Errc::invalid_argument, "bank file name has no frame index: " + file.string());
  return static_cast<std::int64_t>(parse_uint("bank index", stem.substr(start)));
}

// A .pcab file, or a directory of <name><index>.pcap files.
MemoryBank load_bank(const fs::path& path) {
  require(fs::exists(path), Errc::io, "bank not found: " + path.string());
  if (!fs::is_directory(path)) return read_bank(path);
  std::vector<std::pair<std::int64_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_regular_file() && entry.path().extension() == ".pcap")
      files.emplace_back(index_from_stem(entry.path()), entry.path());
  require(!files.empty(), Errc::invalid_argument, "bank directory holds no .pcap files: " + path.string());
  std::sort(files.begin(), files.end());
  MemoryBank bank(files.size());
  for (const auto& [index, file] : files) bank.push(read_protos(file), index);
  return bank;
}

Report cmd_attend(const Globals& g, const AttendArgs& a) {
  const auto keys = read_fmap(fs::path(a.keys));
  const auto values = read_fmap(fs::path(a.values));
  const auto bank = load_bank(a.bank);
  require(bank.size() > 0, Errc::invalid_argument, "attend: the bank is empty");
  const std::int64_t current = a.current.value_or(*bank.latest_index());
  const auto result = aggregate(reconstruct_all(bank, keys, current), values);

  ensure_dir(g.out_dir);
  write_fmap(g.out_dir / "ybar.fmap", result.y_bar);
  write_fmap(g.out_dir / "weights.fmap", result.weights);
  Report r;
  r.summary = {{"command", "attend"},
               {"current_index", current},
               {"memory_frames", result.weights.channels() - 1},
               {"outputs", {(g.out_dir / "ybar.fmap").string(), (g.out_dir / "weights.fmap").string()}}};
  r.text = "attend: read " + std::to_string(result.weights.channels() - 1) + " memory frames before index " +
           std::to_string(current);
  return r;
}

// ---- scene / tracker config ----

Shape parse_shape(const std::string& key, const std::string& s) {
  if (s == "disk") return Shape::disk;
  if (s == "rectangle" || s == "rect") return Shape::rectangle;
  fail(Errc::invalid_argument, "config: " + key + " must be disk or rectangle: " + s);
}

PartitionMode parse_partition(const std::string& s) {
  if (s == "joint") return PartitionMode::joint;
  if (s == "separate") return PartitionMode::separate;
  fail(Errc::invalid_argument, "config: tracker.partition must be joint or separate: " + s);
}

struct SceneFlags {
  std::optional<std::size_t> frames;
  std::optional<double> noise;
};

// Defaults to the two-object crossing scene; [scene] keys adjust it and any
// [object.N] sections replace its objects.
SceneConfig read_scene(ConfigFile& file, const Globals& g, const SceneFlags& flags) {
  auto sec = file.section("scene");
  std::size_t frames = 20;
  double noise = 0.1;
  sec.read("frames", frames);
  sec.read("noise", noise);
  if (flags.frames) frames = *flags.frames;
  if (flags.noise) noise = *flags.noise;
  SceneConfig scene = crossing_scene(g.seed, frames, noise);
  sec.read("height", scene.height);
  sec.read("width", scene.width);
  sec.read("background", scene.background);
  sec.read("allow_occlusion", scene.allow_occlusion);
  sec.finish();

  const auto names = file.sections_with_prefix("object.");
  if (!names.empty()) scene.objects.clear();
  for (const auto& name : names) {
    auto o = file.section(name);
    ObjectSpec obj;
    if (auto s = o.take("shape")) obj.shape = parse_shape(o.qualified("shape"), *s);
    o.read("color", obj.color);
    o.read("x", obj.x);
    o.read("y", obj.y);
    o.read("radius", obj.radius);
    o.read("half_width", obj.half_width);
    o.read("half_height", obj.half_height);
    o.read("vx", obj.vx);
    o.read("vy", obj.vy);
    o.finish();
    scene.objects.push_back(obj);
  }
  scene.validate();
  return scene;
}

struct TrackFlags {
  SceneFlags scene;
  std::optional<std::size_t> capacity;
  std::optional<std::size_t> frame_protos;
  std::optional<std::size_t> dim;
  std::optional<double> erosion;
  std::optional<double> momentum;
  bool no_instance = false;
};

TrackerConfig read_tracker(ConfigFile& file, const TrackFlags& flags) {
  TrackerConfig c;
  auto sec = file.section("tracker");
  sec.read("key_dim", c.key_dim);
  sec.read("value_dim", c.value_dim);
  sec.read("projection_seed", c.projection_seed);
  sec.read("key_scale", c.key_scale);
  sec.read("value_scale", c.value_scale);
  sec.read("frame_protos", c.frame_protos);
  sec.read("em_iters", c.em_iters);
  sec.read("sigma2", c.sigma2);
  if (auto s = sec.take("frame_init")) c.frame_init = parse_init_kind(*s);
  if (auto s = sec.take("frame_value_mode")) c.frame_value_mode = parse_value_mode(*s);
  sec.read("capacity", c.capacity);
  sec.read("instance_protos", c.instance_protos);
  sec.read("n_pos", c.n_pos);
  sec.read("n_neg", c.n_neg);
  sec.read("momentum", c.momentum);
  sec.read("bg_factor", c.bg_factor);
  sec.read("instance_em_iters", c.instance_em_iters);
  sec.read("instance_sigma2", c.instance_sigma2);
  if (auto s = sec.take("partition")) c.partition = parse_partition(*s);
  sec.read("fuse_a", c.fuse_a);
  sec.read("fuse_b", c.fuse_b);
  sec.read("iou_threshold", c.iou_threshold);
  sec.read("appearance_weight", c.appearance_weight);
  sec.read("max_age", c.max_age);
  sec.finish();

  auto cor = file.section("corruption");
  cor.read("erosion", c.corruption.erosion);
  cor.read("dilation", c.corruption.dilation);
  cor.read("dropout", c.corruption.dropout);
  cor.read("logit_scale", c.corruption.logit_scale);
  cor.finish();

  if (flags.capacity) c.capacity = *flags.capacity;
  if (flags.frame_protos) c.frame_protos = *flags.frame_protos;
  if (flags.dim) c.key_dim = c.value_dim = *flags.dim;
  if (flags.erosion) c.corruption.erosion = *flags.erosion;
  if (flags.momentum) c.momentum = *flags.momentum;
  if (flags.no_instance) c.instance_protos = false;
  c.validate();
  return c;
}

// ---- track ----

Report cmd_track(const Globals& g, const std::string& config, const TrackFlags& flags) {
  auto file = load_config(config);
  const auto scene = read_scene(file, g, flags.scene);
  const auto tracker = read_tracker(file, flags);
  file.finish({});

  const auto output = run_tracker(scene, tracker);

  const auto mask_dir = g.out_dir / "masks";
  ensure_dir(mask_dir);
  json frames = json::array();
  for (std::size_t t = 0; t < output.frames.size(); ++t) {
    json tracks = json::array(), initial = json::array();
    for (const auto& [id, mask] : output.frames[t].tracks) {
      const auto name = frame_name(t) + "_track_" + std::to_string(id) + ".pgm";
      write_pgm(mask_dir / name, mask);
      tracks.push_back({{"id", id}, {"area", mask.area()}, {"mask", "masks/" + name}, {"rle", rle(mask)}});
    }
    for (const auto& [id, mask] : output.frames[t].initial)
      initial.push_back({{"gt_id", id}, {"area", mask.area()}, {"rle", rle(mask)}});
    frames.push_back({{"t", t}, {"tracks", tracks}, {"initial", initial}});
  }
  const json metrics = {{"seed", g.seed},
                        {"capacity", tracker.capacity},
                        {"instance_protos", tracker.instance_protos},
                        {"metrics", metrics_json(output.metrics)},
                        {"initial_metrics", metrics_json(output.initial_metrics)}};
  json doc = metrics;
  doc["height"] = scene.height;
  doc["width"] = scene.width;
  doc["frames"] = frames;
  write_text(g.out_dir / "track_output.json", doc.dump(1) + "\n");
  const auto metrics_file = "metrics_cap" + std::to_string(tracker.capacity) + ".json";
  write_text(g.out_dir / metrics_file, metrics.dump(2) + "\n");

  Report r;
  r.summary = metrics;
  r.summary["command"] = "track";
  r.summary["outputs"] = {(g.out_dir / "track_output.json").string(), (g.out_dir / metrics_file).string()};
  std::ostringstream os;
  os << "track: mean IoU " << output.metrics.mean_iou << " (initial " << output.initial_metrics.mean_iou
     << "), id switches " << output.metrics.id_switches << ", sMOTSA " << output.metrics.smotsa;
  r.text = os.str();
  return r;
}

// ---- synth ----

Report cmd_synth(const Globals& g, const std::string& config, const SceneFlags& flags) {
  auto file = load_config(config);
  const auto scene = read_scene(file, g, flags);
  file.finish({});
  const auto seq = generate_sequence(scene);

  ensure_dir(g.out_dir / "frames");
  ensure_dir(g.out_dir / "masks");
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    write_fmap(g.out_dir / "frames" / (frame_name(t) + ".fmap"), seq.frames[t]);
    for (std::size_t k = 0; k < seq.gt_ids.size(); ++k)
      write_pgm(g.out_dir / "masks" / (frame_name(t) + "_obj_" + std::to_string(seq.gt_ids[k]) + ".pgm"),
                seq.gt_masks[t][k]);
  }
  json objects = json::array();
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& o = scene.objects[k];
    objects.push_back({{"id", seq.gt_ids[k]},
                       {"shape", o.shape == Shape::disk ? "disk" : "rectangle"},
                       {"color", o.color},
                       {"x", o.x},
                       {"y", o.y},
                       {"radius", o.radius},
                       {"half_width", o.half_width},
                       {"half_height", o.half_height},
                       {"vx", o.vx},
                       {"vy", o.vy}});
  }
  const json doc = {{"seed", g.seed},         {"height", scene.height},     {"width", scene.width},
                    {"frames", seq.frames.size()}, {"noise", scene.noise_sigma}, {"objects", objects}};
  write_text(g.out_dir / "sequence.json", doc.dump(2) + "\n");

  Report r;
  r.summary = doc;
  r.summary["command"] = "synth";
  r.text = "synth: wrote " + std::to_string(seq.frames.size()) + " frames with " +
           std::to_string(scene.objects.size()) + " objects";
  return r;
}

// ---- bench ----

struct BenchFlags {
  std::vector<std::string> mechanisms;
  bool instrumented = false;
};

Report cmd_bench(const Globals& g, const std::string& config, const BenchFlags& flags) {
  auto file = load_config(config);
  auto sec = file.section("bench");
  BenchConfig b;
  std::vector<std::string> mechs{"pca", "nonlocal", "mhsa"};
  if (auto s = sec.take("mechanisms")) mechs = split_list(*s);
  if (auto s = sec.take("heights")) b.heights = parse_uint_list("bench.heights", *s);
  if (auto s = sec.take("widths")) b.widths = parse_uint_list("bench.widths", *s);
  if (auto s = sec.take("frames")) b.frames = parse_uint_list("bench.frames", *s);
  sec.read("key_dim", b.key_dim);
  sec.read("value_dim", b.value_dim);
  sec.read("n_protos", b.n_protos);
  sec.read("em_iters", b.em_iters);
  sec.read("heads", b.heads);
  sec.read("instrumented", b.instrumented);
  sec.finish();
  file.finish({});
  if (!flags.mechanisms.empty()) mechs = flags.mechanisms;
  if (flags.instrumented) b.instrumented = true;
  for (const auto& m : mechs) b.mechanisms.push_back(parse_mechanism(m));
  b.seed = g.seed;

  const auto result = run_suite(b);
  ensure_dir(g.out_dir);
  write_text(g.out_dir / "costs.csv", result.csv);
  write_text(g.out_dir / "costs.svg", result.svg);

  Report r;
  r.summary = {{"command", "bench"},
               {"rows", result.rows.size()},
               {"outputs", {(g.out_dir / "costs.csv").string(), (g.out_dir / "costs.svg").string()}}};
  r.text = "bench: " + std::to_string(result.rows.size()) + " rows";
  return r;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::io:
    case Errc::bad_magic:
    case Errc::truncated:
    case Errc::dimension_overflow:
      return kExitIo;
    case Errc::numeric:
      return kExitNumeric;
    default:
      return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototypical cross-attention toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::string out_dir = ".";
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  app.add_flag("--json", g.json, "Print a JSON summary on stdout");

  ClusterArgs ca;
  auto* cluster = app.add_subcommand("cluster", "Fit GMM prototypes to a key map");
  cluster->add_option("keys", ca.keys, "Key map (.fmap)")->required();
  cluster->add_option("--values", ca.values, "Value map (.fmap); defaults to the key map");
  cluster->add_option("--config", ca.config, "Config file ([em] section)");
  cluster->add_option("--protos", ca.protos, "Number of prototypes")->capture_default_str();
  cluster->add_option("--iters", ca.iters, "EM iterations")->capture_default_str();
  cluster->add_option("--sigma2", ca.sigma2, "Shared variance")->capture_default_str();
  cluster->add_option("--init", ca.init, "subsample | farthest | warm")->capture_default_str();
  cluster->add_option("--warm", ca.warm, "Warm-start prototypes (.pcap)");
  cluster->add_option("--value-mode", ca.value_mode, "literal | normalized | hard")->capture_default_str();

  AttendArgs aa;
  std::int64_t current = 0;
  auto* attend = app.add_subcommand("attend", "Read a prototype memory bank and aggregate");
  attend->add_option("keys", aa.keys, "Query key map (.fmap)")->required();
  attend->add_option("--values", aa.values, "Current value map (.fmap)")->required();
  attend->add_option("--bank", aa.bank, "Bank directory of *.pcap or a .pcab file")->required();
  auto* current_opt = attend->add_option("--current-index", current, "Current frame index; defaults to the newest");

  std::string track_config;
  TrackFlags tf;
  auto* track = app.add_subcommand("track", "Run the toy tracker on a synthetic scene");
  track->add_option("config", track_config, "Scene and tracker config file");
  track->add_option("--frames", tf.scene.frames, "Sequence length");
  track->add_option("--noise", tf.scene.noise, "Pixel noise sigma");
  track->add_option("--capacity", tf.capacity, "Memory capacity");
  track->add_option("--frame-protos", tf.frame_protos, "Frame prototypes");
  track->add_option("--dim", tf.dim, "Key and value dimension");
  track->add_option("--erosion", tf.erosion, "Detection boundary erosion fraction");
  track->add_option("--momentum", tf.momentum, "Instance prototype momentum");
  track->add_flag("--no-instance", tf.no_instance, "Disable instance prototypes");

  std::string bench_config;
  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Analytic and instrumented attention cost");
  bench->add_option("config", bench_config, "Bench config file");
  bench->add_option("--mechanisms", bf.mechanisms, "pca, nonlocal, mhsa")->delimiter(',');
  bench->add_flag("--instrumented", bf.instrumented, "Also count operations on the real kernels");

  std::string synth_config;
  SceneFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence");
  synth->add_option("config", synth_config, "Scene config file");
  synth->add_option("--frames", sf.frames, "Sequence length");
  synth->add_option("--noise", sf.noise, "Pixel noise sigma");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  g.out_dir = out_dir;
  if (current_opt->count()) aa.current = current;

  try {
    set_thread_count(g.threads);
    Report r;
    if (cluster->parsed()) r = cmd_cluster(g, ca, *cluster);
    else if (attend->parsed()) r = cmd_attend(g, aa);
    else if (track->parsed()) r = cmd_track(g, track_config, tf);
    else if (bench->parsed()) r = cmd_bench(g, bench_config, bf);
    else r = cmd_synth(g, synth_config, sf);
    if (g.json) out << r.summary.dump(2) << "\n";
    else out << r.text << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace pcan::cli
