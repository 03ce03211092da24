#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "pcan/core.hpp"
#include "pcan/gmm.hpp"
#include "pcan/mask.hpp"

namespace pcan {

inline constexpr std::size_t kDefaultPosProtos = 30;
inline constexpr std::size_t kDefaultNegProtos = 30;
inline constexpr double kDefaultMomentum = 0.2;
inline constexpr double kDefaultBgFactor = 2.0;

// Accumulated foreground/background prototypes of one tracked object.
struct InstanceTrack {
  std::int64_t track_id = 0;
  PrototypeSet fg_protos;
  PrototypeSet bg_protos;
  double momentum = kDefaultMomentum;  // lambda
  std::int64_t last_seen = 0;

  void validate() const;
  bool operator==(const InstanceTrack&) const = default;
};

// Per-pixel soft foreground / background assignment, H x W x 1 each.
struct AttentionPair {
  FeatureMap fg_map;
  FeatureMap bg_map;
};

struct FgBgKeys {
  Matrix fg;
  Matrix bg;
  bool used_fallback = false;  // background came from the whole frame minus the mask
};

// `box` scaled by `factor` about its center, clamped to a height x width grid.
Box scale_box(const Box& box, double factor, std::size_t height, std::size_t width);

// Foreground keys are those under the mask. Background keys come from the
// mask's box scaled by bg_factor, minus the mask; if that region is empty the
// whole frame minus the mask is used instead.
FgBgKeys extract_fg_bg(const FeatureMap& keys, const MaskMap& mask, double bg_factor = kDefaultBgFactor);

struct InstancePrototypes {
  PrototypeSet fg;
  PrototypeSet bg;
};

// Two independent GMM fits. With a warm-start track the EM runs start from the
// track's accumulated means (and use its prototype counts), which keeps
// prototype j referring to the same part of the object across frames. Value
// prototypes are the mass-normalized key averages.
InstancePrototypes fit_instance_protos(const Matrix& fg_keys, const Matrix& bg_keys, const EmConfig& config_pos,
                                       const EmConfig& config_neg, const InstanceTrack* warm_start = nullptr);

enum class PartitionMode {
  joint,     // one softmax over the concatenated fg + bg prototypes
  separate,  // each set is its own uniform mixture; fg_map = p_fg / (p_fg + p_bg)
};

AttentionPair instance_attention_maps(const FeatureMap& keys, const PrototypeSet& fg, const PrototypeSet& bg,
                                      PartitionMode mode = PartitionMode::joint);

// Momentum update of keys and values: acc <- (1 - lambda) acc + lambda current.
InstanceTrack propagate(const InstanceTrack& track, const PrototypeSet& current_fg, const PrototypeSet& current_bg,
                        std::optional<std::int64_t> frame_index = std::nullopt);

// Refined logit a * initial + b * (fg - bg); foreground where sigmoid(logit) >= 0.5.
MaskMap fuse_mask(const FeatureMap& initial_logits, const AttentionPair& attn, double a = 1.0, double b = 2.0);

// PCAT layout: "PCAT", u16 version, i64 track_id, f64 lambda, i64 last_seen,
// then the fg and bg PCAP blocks.
inline constexpr std::uint16_t kTrackVersion = 1;
void write_track(std::ostream& os, const InstanceTrack& track);
InstanceTrack read_track(std::istream& is);
void write_track(const std::filesystem::path& path, const InstanceTrack& track);
InstanceTrack read_track(const std::filesystem::path& path);

}  // namespace pcan
