#include "pcan/instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "pcan/detail/binary.hpp"
#include "pcan/detail/kernels.hpp"

namespace pcan {

void InstanceTrack::validate() const {
  require(momentum >= 0.0 && momentum <= 1.0, Errc::invalid_argument, "track momentum must lie in [0, 1]");
  fg_protos.validate();
  bg_protos.validate();
  require(fg_protos.key_dim() == bg_protos.key_dim() && fg_protos.value_dim() == bg_protos.value_dim(),
          Errc::dimension_mismatch, "track fg and bg prototype dims differ");
}

Box scale_box(const Box& box, double factor, std::size_t height, std::size_t width) {
  require(factor > 0.0 && std::isfinite(factor), Errc::invalid_argument, "box scale factor must be positive");
  auto scale_axis = [factor](std::size_t lo, std::size_t hi, std::size_t limit, std::size_t& out_lo,
                             std::size_t& out_hi) {
    // Pixel i covers [i, i + 1); scale the covered interval about its center.
    const double center = 0.5 * static_cast<double>(lo + hi + 1);
    const double half = 0.5 * static_cast<double>(hi + 1 - lo) * factor;
    const double a = std::max(0.0, std::floor(center - half));
    const double b = std::min(static_cast<double>(limit), std::ceil(center + half));
    out_lo = static_cast<std::size_t>(a);
    out_hi = static_cast<std::size_t>(std::max(a + 1.0, b)) - 1;
  };
  Box out;
  scale_axis(box.x0, box.x1, width, out.x0, out.x1);
  scale_axis(box.y0, box.y1, height, out.y0, out.y1);
  return out;
}

FgBgKeys extract_fg_bg(const FeatureMap& keys, const MaskMap& mask, double bg_factor) {
  require(bg_factor >= 1.0, Errc::invalid_argument, "bg_factor must be >= 1");
  require(mask.height() == keys.height() && mask.width() == keys.width(), Errc::dimension_mismatch,
          "extract_fg_bg: mask and key grids differ");
  require(!mask.empty(), Errc::empty_instance, "empty instance: mask has no foreground pixel");

  const Box region = scale_box(*mask.box(), bg_factor, keys.height(), keys.width());
  std::vector<std::size_t> fg_idx, bg_idx;
  for (std::size_t y = 0; y < keys.height(); ++y) {
    for (std::size_t x = 0; x < keys.width(); ++x) {
      const std::size_t i = y * keys.width() + x;
      if (mask[i]) {
        fg_idx.push_back(i);
      } else if (region.contains(x, y)) {
        bg_idx.push_back(i);
      }
    }
  }
  FgBgKeys out;
  if (bg_idx.empty()) {
    out.used_fallback = true;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) bg_idx.push_back(i);
    require(!bg_idx.empty(), Errc::empty_instance, "empty instance background: mask covers the whole frame");
  }
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Matrix m(idx.size(), keys.channels());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = keys.pixel(idx[r]);
      std::copy(src.begin(), src.end(), m.row(r).begin());
    }
    return m;
  };
  out.fg = gather(fg_idx);
  out.bg = gather(bg_idx);
  return out;
}

namespace {

// Mass-normalized value prototypes; a component without mass keeps its key
// mean as value rather than failing.
PrototypeSet fit_one(const Matrix& keys, EmConfig config, const PrototypeSet* warm, const char* which) {
  require(keys.rows() >= 1, Errc::empty_instance, std::string("no ") + which + " samples to fit");
  if (warm) {
    config.init = InitKind::warm_start;
    config.warm_means = warm->key_means;
    config.n_protos = warm->n_protos();
  }
  auto fit = fit_gmm(keys, config);
  const auto mass = kernels::column_mass(fit.assignments.posteriors);
  auto sums = kernels::weighted_sums<double>(fit.assignments.posteriors, keys, nullptr);
  for (std::size_t j = 0; j < mass.size(); ++j) {
    for (std::size_t c = 0; c < sums.cols(); ++c)
      sums(j, c) = mass[j] >= kernels::kEmptyMass ? sums(j, c) / mass[j] : fit.means(j, c);
  }
  PrototypeSet set;
  set.key_means = std::move(fit.means);
  set.value_protos = std::move(sums);
  set.sigma2 = config.sigma2;
  return set;
}

}  // namespace

InstancePrototypes fit_instance_protos(const Matrix& fg_keys, const Matrix& bg_keys, const EmConfig& config_pos,
                                       const EmConfig& config_neg, const InstanceTrack* warm_start) {
  if (warm_start) {
    require(warm_start->fg_protos.key_dim() == fg_keys.cols() && warm_start->bg_protos.key_dim() == bg_keys.cols(),
            Errc::dimension_mismatch, "warm-start track dims differ from the key dims");
  }
  return {fit_one(fg_keys, config_pos, warm_start ? &warm_start->fg_protos : nullptr, "foreground"),
          fit_one(bg_keys, config_neg, warm_start ? &warm_start->bg_protos : nullptr, "background")};
}

AttentionPair instance_attention_maps(const FeatureMap& keys, const PrototypeSet& fg, const PrototypeSet& bg,
                                      PartitionMode mode) {
  fg.validate();
  bg.validate();
  require(fg.key_dim() == keys.channels() && bg.key_dim() == keys.channels(), Errc::dimension_mismatch,
          "instance_attention_maps: prototype key dim differs from key channels");
  require(fg.sigma2 == bg.sigma2, Errc::invalid_argument, "fg and bg prototype sets must share sigma2");

  const std::size_t n_pos = fg.n_protos();
  const std::size_t n_neg = bg.n_protos();
  Matrix joint(n_pos + n_neg, fg.key_dim());
  std::copy(fg.key_means.data().begin(), fg.key_means.data().end(), joint.data().begin());
  std::copy(bg.key_means.data().begin(), bg.key_means.data().end(),
            joint.data().begin() + static_cast<std::ptrdiff_t>(fg.key_means.data().size()));

  FeatureMap fg_map(keys.height(), keys.width(), 1), bg_map(keys.height(), keys.width(), 1);
  parallel_for(keys.pixel_count(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> w(n_pos + n_neg);
    for (std::size_t i = begin; i < end; ++i) {
      kernels::gaussian_logits<double>(keys.pixel(i), joint, fg.sigma2, w);
      double pf, pb;
      if (mode == PartitionMode::joint) {
        kernels::softmax_inplace<double>(w);
        CompensatedSum<double> f, b;
        for (std::size_t j = 0; j < n_pos; ++j) f.add(w[j]);
        for (std::size_t j = n_pos; j < w.size(); ++j) b.add(w[j]);
        const double total = f.value() + b.value();
        pf = f.value() / total;
        pb = b.value() / total;
      } else {
        std::span<double> wf(w.data(), n_pos), wb(w.data() + n_pos, n_neg);
        const double lf = kernels::softmax_inplace<double>(wf) - std::log(static_cast<double>(n_pos));
        const double lb = kernels::softmax_inplace<double>(wb) - std::log(static_cast<double>(n_neg));
        pf = 1.0 / (1.0 + std::exp(lb - lf));
        pb = 1.0 - pf;
      }
      fg_map.pixel(i)[0] = pf;
      bg_map.pixel(i)[0] = pb;
    }
  });
  return {std::move(fg_map), std::move(bg_map)};
}

namespace {

PrototypeSet blend(const PrototypeSet& acc, const PrototypeSet& cur, double lambda, const char* which) {
  require(acc.key_means.rows() == cur.key_means.rows() && acc.key_means.cols() == cur.key_means.cols() &&
              acc.value_protos.rows() == cur.value_protos.rows() && acc.value_protos.cols() == cur.value_protos.cols(),
          Errc::dimension_mismatch, std::string("propagate: ") + which + " prototype dims differ");
  PrototypeSet out = acc;
  auto mix = [lambda](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (1.0 - lambda) * dst[i] + lambda * src[i];
  };
  mix(out.key_means.data(), cur.key_means.data());
  mix(out.value_protos.data(), cur.value_protos.data());
  return out;
}

}  // namespace

InstanceTrack propagate(const InstanceTrack& track, const PrototypeSet& current_fg, const PrototypeSet& current_bg,
                        std::optional<std::int64_t> frame_index) {
  require(track.momentum >= 0.0 && track.momentum <= 1.0, Errc::invalid_argument, "momentum must lie in [0, 1]");
  InstanceTrack out = track;
  out.fg_protos = blend(track.fg_protos, current_fg, track.momentum, "foreground");
  out.bg_protos = blend(track.bg_protos, current_bg, track.momentum, "background");
  out.last_seen = frame_index.value_or(track.last_seen + 1);
  return out;
}

MaskMap fuse_mask(const FeatureMap& initial_logits, const AttentionPair& attn, double a, double b) {
  require(initial_logits.channels() == 1 && attn.fg_map.channels() == 1 && attn.bg_map.channels() == 1,
          Errc::dimension_mismatch, "fuse_mask expects single-channel maps");
  require(initial_logits.same_grid(attn.fg_map) && initial_logits.same_grid(attn.bg_map), Errc::dimension_mismatch,
          "fuse_mask: grids differ");
  MaskMap out(initial_logits.height(), initial_logits.width());
  for (std::size_t i = 0; i < initial_logits.pixel_count(); ++i) {
    const double logit = a * initial_logits.pixel(i)[0] + b * (attn.fg_map.pixel(i)[0] - attn.bg_map.pixel(i)[0]);
    const double prob = 1.0 / (1.0 + std::exp(-logit));
    if (prob >= 0.5) out.set(i, true);
  }
  return out;
}

void write_track(std::ostream& os, const InstanceTrack& track) {
  track.validate();
  binary::put_magic(os, "PCAT");
  binary::put_le<std::uint16_t>(os, kTrackVersion);
  binary::put_i64(os, track.track_id);
  binary::put_f64(os, track.momentum);
  binary::put_i64(os, track.last_seen);
  write_protos(os, track.fg_protos);
  write_protos(os, track.bg_protos);
}

InstanceTrack read_track(std::istream& is) {
  binary::expect_magic(is, "PCAT", "track");
  const auto version = binary::get_le<std::uint16_t>(is, "PCAT version");
  require(version == kTrackVersion, Errc::unsupported, "unsupported PCAT version " + std::to_string(version));
  InstanceTrack t;
  t.track_id = binary::get_i64(is, "PCAT track id");
  t.momentum = binary::get_f64(is, "PCAT momentum");
  t.last_seen = binary::get_i64(is, "PCAT last_seen");
  t.fg_protos = read_protos(is);
  t.bg_protos = read_protos(is);
  t.validate();
  return t;
}

void write_track(const std::filesystem::path& path, const InstanceTrack& track) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  write_track(os, track);
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

InstanceTrack read_track(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open for reading: " + path.string());
  return read_track(is);
}

}  // namespace pcan
