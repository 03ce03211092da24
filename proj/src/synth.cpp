#include "pcan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace pcan {

namespace {

double reflect(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double u = std::fmod(p - lo, 2.0 * span);
  if (u < 0.0) u += 2.0 * span;
  if (u > span) u = 2.0 * span - u;
  return lo + u;
}

bool covers(const ObjectSpec& obj, double cx, double cy, double px, double py) {
  if (obj.shape == Shape::disk) {
    const double dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= obj.radius * obj.radius;
  }
  return std::abs(px - cx) <= obj.half_width && std::abs(py - cy) <= obj.half_height;
}

}  // namespace

void SceneConfig::validate() const {
  require(height > 0 && width > 0, Errc::invalid_argument, "scene dimensions must be positive");
  require(n_frames >= 1, Errc::invalid_argument, "scene needs at least one frame");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), Errc::invalid_argument, "noise_sigma must be >= 0");
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const auto& o = objects[k];
    const std::string name = "object " + std::to_string(k);
    require(o.extent_x() > 0.0 && o.extent_y() > 0.0, Errc::invalid_argument, name + " has a non-positive size");
    require(2.0 * o.extent_x() <= static_cast<double>(width) && 2.0 * o.extent_y() <= static_cast<double>(height),
            Errc::invalid_argument, name + " is larger than the frame");
    require(o.x >= o.extent_x() && o.x <= static_cast<double>(width) - o.extent_x() && o.y >= o.extent_y() &&
                o.y <= static_cast<double>(height) - o.extent_y(),
            Errc::invalid_argument, name + " does not fit in the frame at t=0");
    require(std::isfinite(o.vx) && std::isfinite(o.vy), Errc::invalid_argument, name + " has a non-finite velocity");
  }
}

std::pair<double, double> object_center(const ObjectSpec& obj, std::size_t t, std::size_t height, std::size_t width) {
  const double td = static_cast<double>(t);
  return {reflect(obj.x + obj.vx * td, obj.extent_x(), static_cast<double>(width) - obj.extent_x()),
          reflect(obj.y + obj.vy * td, obj.extent_y(), static_cast<double>(height) - obj.extent_y())};
}

MaskMap object_footprint(const ObjectSpec& obj, std::size_t t, std::size_t height, std::size_t width) {
  const auto [cx, cy] = object_center(obj, t, height, width);
  MaskMap m(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      if (covers(obj, cx, cy, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) m.set(y, x, true);
  return m;
}

Sequence generate_sequence(const SceneConfig& config) {
  config.validate();
  const std::size_t h = config.height, w = config.width, n_obj = config.objects.size();
  Sequence seq;
  for (std::size_t k = 0; k < n_obj; ++k) seq.gt_ids.push_back(static_cast<std::int64_t>(k) + 1);

  for (std::size_t t = 0; t < config.n_frames; ++t) {
    // owner[i] = index of the topmost object at pixel i, or n_obj for background
    std::vector<std::size_t> owner(h * w, n_obj);
    for (std::size_t k = 0; k < n_obj; ++k) {
      const auto fp = object_footprint(config.objects[k], t, h, w);
      for (std::size_t i = 0; i < fp.size(); ++i) {
        if (!fp[i]) continue;
        require(config.allow_occlusion || owner[i] == n_obj, Errc::invalid_argument,
                "objects overlap at frame " + std::to_string(t) + " but occlusion is disabled");
        owner[i] = k;
      }
    }
    std::vector<MaskMap> masks(n_obj, MaskMap(h, w));
    FeatureMap frame(h, w, 3);
    auto rng = RngStream::derive(config.seed, t, 0x6e6f697365ULL);
    for (std::size_t i = 0; i < h * w; ++i) {
      const Rgb& color = owner[i] < n_obj ? config.objects[owner[i]].color : config.background;
      if (owner[i] < n_obj) masks[owner[i]].set(i, true);
      auto px = frame.pixel(i);
      for (std::size_t c = 0; c < 3; ++c) px[c] = color[c] + config.noise_sigma * rng.normal();
    }
    seq.frames.push_back(std::move(frame));
    seq.gt_masks.push_back(std::move(masks));
  }
  return seq;
}

SceneConfig crossing_scene(std::uint64_t seed, std::size_t n_frames, double noise_sigma) {
  static constexpr Rgb kPalette[] = {
      {0.9, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.2, 0.9}, {0.9, 0.9, 0.1}, {0.9, 0.1, 0.9}, {0.1, 0.9, 0.9},
  };
  RngStream rng(seed);
  SceneConfig s;
  s.height = 48;
  s.width = 48;
  s.n_frames = n_frames;
  s.noise_sigma = noise_sigma;
  s.seed = seed;
  const std::size_t ca = rng.below(6);
  std::size_t cb = rng.below(5);
  if (cb >= ca) ++cb;

  ObjectSpec a;
  a.color = kPalette[ca];
  a.radius = rng.uniform(5.5, 7.0);
  a.x = rng.uniform(9.0, 12.0);
  a.y = rng.uniform(20.0, 24.0);
  a.vx = rng.uniform(1.3, 1.7);
  a.vy = rng.uniform(-0.2, 0.2);

  ObjectSpec b;
  b.color = kPalette[cb];
  b.radius = rng.uniform(5.5, 7.0);
  b.x = rng.uniform(36.0, 39.0);
  b.y = a.y + rng.uniform(3.0, 6.0);
  b.vx = -rng.uniform(1.3, 1.7);
  b.vy = rng.uniform(-0.2, 0.2);

  s.objects = {a, b};
  return s;
}

FeatureMap encode_frame(const FeatureMap& rgb) {
  require(rgb.channels() == 3, Errc::dimension_mismatch, "encode_frame expects an RGB frame");
  const std::size_t h = rgb.height(), w = rgb.width();
  FeatureMap out(h, w, kEncodedChannels);
  const double sx = w > 1 ? 1.0 / static_cast<double>(w - 1) : 0.0;
  const double sy = h > 1 ? 1.0 / static_cast<double>(h - 1) : 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      auto px = out.pixel(y * w + x);
      for (std::size_t c = 0; c < 3; ++c) px[c] = rgb.at(y, x, c);
      px[3] = static_cast<double>(x) * sx;
      px[4] = static_cast<double>(y) * sy;
      double sum[3] = {0, 0, 0};
      std::size_t n = 0;
      for (std::size_t yy = y > 0 ? y - 1 : 0; yy <= std::min(h - 1, y + 1); ++yy) {
        for (std::size_t xx = x > 0 ? x - 1 : 0; xx <= std::min(w - 1, x + 1); ++xx) {
          for (std::size_t c = 0; c < 3; ++c) sum[c] += rgb.at(yy, xx, c);
          ++n;
        }
      }
      for (std::size_t c = 0; c < 3; ++c) px[5 + c] = sum[c] / static_cast<double>(n);
    }
  }
  return out;
}

namespace {

// Pixels of `mask` with the given state that have a 4-neighbor of the other
// state (out-of-bounds counts as background).
std::vector<std::size_t> frontier(const MaskMap& mask, bool inside) {
  const std::size_t h = mask.height(), w = mask.width();
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x) != inside) continue;
      auto is_fg = [&](long yy, long xx) {
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return false;
        return mask.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
      };
      const long ly = static_cast<long>(y), lx = static_cast<long>(x);
      const bool n[4] = {is_fg(ly - 1, lx), is_fg(ly + 1, lx), is_fg(ly, lx - 1), is_fg(ly, lx + 1)};
      bool touches = false;
      for (bool b : n) touches = touches || (b != inside);
      if (inside ? touches : (touches && std::any_of(n, n + 4, [](bool b) { return b; })))
        out.push_back(y * w + x);
    }
  }
  return out;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Flips `count` pixels layer by layer from the boundary inward (erode) or
// outward (dilate), in random order within a layer.
void peel(MaskMap& mask, std::size_t count, bool erode, RngStream& rng) {
  while (count > 0) {
    auto layer = frontier(mask, erode);
    if (layer.empty()) return;
    shuffle(layer, rng);
    for (std::size_t i = 0; i < layer.size() && count > 0; ++i, --count) mask.set(layer[i], !erode);
  }
}

}  // namespace

MaskMap corrupt_mask(const MaskMap& gt, const CorruptionConfig& config, RngStream& rng) {
  require(config.erosion >= 0.0 && config.dilation >= 0.0 && config.dropout >= 0.0 && config.dropout <= 1.0,
          Errc::invalid_argument, "corruption fractions must be non-negative (dropout <= 1)");
  MaskMap out = gt;
  const double area = static_cast<double>(gt.area());
  peel(out, static_cast<std::size_t>(std::lround(config.erosion * area)), true, rng);
  peel(out, static_cast<std::size_t>(std::lround(config.dilation * area)), false, rng);
  if (config.dropout > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] && rng.uniform() < config.dropout) out.set(i, false);
  }
  return out;
}

FeatureMap mask_logits(const MaskMap& mask, double scale) {
  FeatureMap out(mask.height(), mask.width(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) out.pixel(i)[0] = mask[i] ? scale : -scale;
  return out;
}

void TrackerConfig::validate() const {
  require(key_dim > 0 && value_dim > 0, Errc::invalid_argument, "key/value dims must be positive");
  require(key_scale > 0.0 && value_scale > 0.0 && std::isfinite(key_scale) && std::isfinite(value_scale),
          Errc::invalid_argument, "projection scales must be positive");
  require(frame_protos > 0 && n_pos > 0 && n_neg > 0, Errc::invalid_argument, "prototype counts must be positive");
  require(sigma2 > 0.0 && instance_sigma2 > 0.0, Errc::invalid_argument, "sigma2 must be positive");
  require(capacity >= 1, Errc::invalid_argument, "memory capacity must be at least 1");
  require(momentum >= 0.0 && momentum <= 1.0, Errc::invalid_argument, "momentum must lie in [0, 1]");
  require(bg_factor >= 1.0, Errc::invalid_argument, "bg_factor must be >= 1");
  require(appearance_weight >= 0.0 && appearance_weight <= 1.0, Errc::invalid_argument,
          "appearance_weight must lie in [0, 1]");
  require(frame_init != InitKind::warm_start, Errc::invalid_argument, "frame-level EM cannot warm-start");
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Matrix& scores, double threshold) {
  struct Cand {
    double score;
    std::size_t r, c;
  };
  std::vector<Cand> cands;
  for (std::size_t r = 0; r < scores.rows(); ++r)
    for (std::size_t c = 0; c < scores.cols(); ++c)
      if (scores(r, c) >= threshold) cands.push_back({scores(r, c), r, c});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
  std::vector<bool> row_used(scores.rows(), false), col_used(scores.cols(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (row_used[c.r] || col_used[c.c]) continue;
    row_used[c.r] = col_used[c.c] = true;
    out.emplace_back(c.r, c.c);
  }
  return out;
}

namespace {

struct LiveTrack {
  InstanceTrack inst;
  MaskMap last_mask;
  std::size_t age = 0;
};

struct Detection {
  std::int64_t gt_id;
  MaskMap mask;
};

MaskMap clip_to(const MaskMap& mask, const Box& box) {
  MaskMap out(mask.height(), mask.width());
  for (std::size_t y = box.y0; y <= box.y1; ++y)
    for (std::size_t x = box.x0; x <= box.x1; ++x)
      if (mask.at(y, x)) out.set(y, x, true);
  return out;
}

double mean_over(const FeatureMap& map, const MaskMap& mask) {
  CompensatedSum<double> acc;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) acc.add(map.pixel(i)[0]);
  return mask.area() ? acc.value() / static_cast<double>(mask.area()) : 0.0;
}

EmConfig instance_em(const TrackerConfig& cfg, std::size_t n, std::uint64_t seed) {
  EmConfig em;
  em.n_protos = n;
  em.sigma2 = cfg.instance_sigma2;
  em.n_iters = cfg.instance_em_iters;
  em.init = InitKind::subsample;
  em.seed = seed;
  return em;
}

// Refined mask: fused attention restricted to the detection's context box.
MaskMap refine(const TrackerConfig& cfg, const Detection& det, const AttentionPair& attn) {
  const auto fused = fuse_mask(mask_logits(det.mask, cfg.corruption.logit_scale), attn, cfg.fuse_a, cfg.fuse_b);
  const Box region = scale_box(*det.mask.box(), cfg.bg_factor, det.mask.height(), det.mask.width());
  auto out = clip_to(fused, region);
  return out.empty() ? det.mask : out;
}

}  // namespace

TrackOutput run_tracker(const Sequence& sequence, const TrackerConfig& config, std::uint64_t seed) {
  config.validate();
  require(!sequence.frames.empty(), Errc::invalid_argument, "run_tracker: empty sequence");
  auto proj = ProjectionParams::seeded(kEncodedChannels, config.key_dim, config.value_dim, config.projection_seed);
  for (auto& w : proj.key_weights.data()) w *= config.key_scale;
  for (auto& w : proj.value_weights.data()) w *= config.value_scale;

  MemoryBank bank(config.capacity);
  std::vector<LiveTrack> tracks;
  std::int64_t next_id = 1;
  TrackOutput out;

  for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
    const auto ti = static_cast<std::int64_t>(t);
    const auto kv = encode_keys_values(encode_frame(sequence.frames[t]), proj);

    // frame-level prototypes: condense the current frame, store it, then read
    // every older frame still in memory and fuse with the current values
    EmConfig frame_em;
    frame_em.n_protos = std::min(config.frame_protos, kv.keys.pixel_count());
    frame_em.sigma2 = config.sigma2;
    frame_em.n_iters = config.em_iters;
    frame_em.init = config.frame_init;
    frame_em.seed = RngStream::derive(seed, t, 1).next_u64();
    push_frame(bank, build_prototypes(kv.keys.pixels(), kv.values.pixels(), frame_em, config.frame_value_mode), ti);
    const auto agg = aggregate(reconstruct_all(bank, kv.keys, ti), kv.values);
    const FeatureMap& features = agg.y_bar;

    // detections from corrupted ground truth, in shuffled order
    FrameTracks frame_out;
    std::vector<Detection> dets;
    for (std::size_t k = 0; k < sequence.gt_masks[t].size(); ++k) {
      const auto& gt = sequence.gt_masks[t][k];
      if (gt.empty()) continue;
      auto rng = RngStream::derive(seed, t, 0x100 + k);
      auto m = corrupt_mask(gt, config.corruption, rng);
      if (m.empty()) continue;
      frame_out.initial.emplace_back(sequence.gt_ids[k], m);
      dets.push_back({sequence.gt_ids[k], std::move(m)});
    }
    {
      auto rng = RngStream::derive(seed, t, 2);
      for (std::size_t i = dets.size(); i > 1; --i) std::swap(dets[i - 1], dets[rng.below(i)]);
    }

    std::vector<AttentionPair> attn;
    if (config.instance_protos) {
      for (const auto& tr : tracks)
        attn.push_back(instance_attention_maps(features, tr.inst.fg_protos, tr.inst.bg_protos, config.partition));
    }
    Matrix scores(tracks.size(), dets.size());
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      for (std::size_t c = 0; c < dets.size(); ++c) {
        const double iou = mask_iou(tracks[r].last_mask, dets[c].mask);
        scores(r, c) = config.instance_protos ? (1.0 - config.appearance_weight) * iou +
                                                    config.appearance_weight * mean_over(attn[r].fg_map, dets[c].mask)
                                              : iou;
      }
    }
    const auto pairs = associate(scores, config.iou_threshold);

    std::vector<bool> det_used(dets.size(), false), track_used(tracks.size(), false);
    for (const auto& [r, c] : pairs) {
      det_used[c] = track_used[r] = true;
      auto& tr = tracks[r];
      MaskMap refined = dets[c].mask;
      if (config.instance_protos) {
        refined = refine(config, dets[c], attn[r]);
        const auto keys = extract_fg_bg(features, dets[c].mask, config.bg_factor);
        const auto cur = fit_instance_protos(keys.fg, keys.bg, instance_em(config, config.n_pos, 0),
                                             instance_em(config, config.n_neg, 0), &tr.inst);
        tr.inst = propagate(tr.inst, cur.fg, cur.bg, ti);
      }
      tr.last_mask = refined;
      tr.age = 0;
      frame_out.tracks.emplace_back(tr.inst.track_id, std::move(refined));
    }

    std::vector<LiveTrack> survivors;
    for (std::size_t r = 0; r < tracks.size(); ++r) {
      if (!track_used[r] && ++tracks[r].age > config.max_age) continue;
      survivors.push_back(std::move(tracks[r]));
    }
    tracks = std::move(survivors);

    for (std::size_t c = 0; c < dets.size(); ++c) {
      if (det_used[c]) continue;
      LiveTrack tr;
      tr.inst.track_id = next_id++;
      tr.inst.momentum = config.momentum;
      tr.inst.last_seen = ti;
      MaskMap refined = dets[c].mask;
      if (config.instance_protos) {
        const auto keys = extract_fg_bg(features, dets[c].mask, config.bg_factor);
        const auto em_seed = RngStream::derive(seed, t, 0x200 + c).next_u64();
        const auto fit = fit_instance_protos(keys.fg, keys.bg,
                                             instance_em(config, std::min(config.n_pos, keys.fg.rows()), em_seed),
                                             instance_em(config, std::min(config.n_neg, keys.bg.rows()), em_seed + 1));
        tr.inst.fg_protos = fit.fg;
        tr.inst.bg_protos = fit.bg;
        refined = refine(config, dets[c], instance_attention_maps(features, fit.fg, fit.bg, config.partition));
      }
      tr.last_mask = refined;
      frame_out.tracks.emplace_back(tr.inst.track_id, std::move(refined));
      tracks.push_back(std::move(tr));
    }

    std::sort(frame_out.tracks.begin(), frame_out.tracks.end(),
              [](const LabeledMask& a, const LabeledMask& b) { return a.first < b.first; });
    out.frames.push_back(std::move(frame_out));
  }

  std::vector<std::vector<LabeledMask>> pred, init;
  for (const auto& f : out.frames) {
    pred.push_back(f.tracks);
    init.push_back(f.initial);
  }
  out.metrics = evaluate(pred, sequence);
  out.initial_metrics = evaluate(init, sequence);
  return out;
}

TrackOutput run_tracker(const SceneConfig& scene, const TrackerConfig& config) {
  return run_tracker(generate_sequence(scene), config, scene.seed);
}

TrackMetrics evaluate(const std::vector<std::vector<LabeledMask>>& predictions, const Sequence& gt) {
  require(predictions.size() == gt.gt_masks.size(), Errc::dimension_mismatch,
          "evaluate: prediction and ground-truth frame counts differ");
  TrackMetrics m;
  CompensatedSum<double> iou_sum;
  std::map<std::int64_t, std::int64_t> last_match;  // gt id -> prediction id
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const auto& preds = predictions[t];
    const auto& gts = gt.gt_masks[t];
    struct Pair {
      double iou;
      std::size_t p, g;
    };
    std::vector<Pair> cands;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].empty()) continue;
      ++m.gt_masks;
      for (std::size_t p = 0; p < preds.size(); ++p) {
        const double iou = mask_iou(preds[p].second, gts[g]);
        if (iou > 0.5) cands.push_back({iou, p, g});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<bool> p_used(preds.size(), false), g_used(gts.size(), false);
    for (const auto& c : cands) {
      if (p_used[c.p] || g_used[c.g]) continue;
      p_used[c.p] = g_used[c.g] = true;
      ++m.matched;
      iou_sum.add(c.iou);
      const auto gid = gt.gt_ids[c.g];
      const auto pid = preds[c.p].first;
      auto it = last_match.find(gid);
      if (it != last_match.end() && it->second != pid) ++m.id_switches;
      last_match[gid] = pid;
    }
    for (bool used : p_used) m.false_positives += used ? 0 : 1;
  }
  m.mean_iou = m.matched ? iou_sum.value() / static_cast<double>(m.matched) : 0.0;
  m.smotsa = m.gt_masks ? (iou_sum.value() - static_cast<double>(m.false_positives) -
                           static_cast<double>(m.id_switches)) /
                              static_cast<double>(m.gt_masks)
                        : 0.0;
  return m;
}

}  // namespace pcan
