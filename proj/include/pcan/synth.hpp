#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pcan/core.hpp"
#include "pcan/gmm.hpp"
#include "pcan/instance.hpp"
#include "pcan/mask.hpp"
#include "pcan/pcam.hpp"

namespace pcan {

enum class Shape { disk, rectangle };

using Rgb = std::array<double, 3>;

struct ObjectSpec {
  Shape shape = Shape::disk;
  Rgb color{1.0, 0.0, 0.0};
  double x = 0.0, y = 0.0;  // center at frame 0, pixel units
  double radius = 5.0;      // disk
  double half_width = 5.0;  // rectangle
  double half_height = 5.0; // rectangle
  double vx = 0.0, vy = 0.0;  // pixels per frame

  double extent_x() const { return shape == Shape::disk ? radius : half_width; }
  double extent_y() const { return shape == Shape::disk ? radius : half_height; }
};

// Objects move linearly and reflect off the borders. Later-listed objects are
// drawn on top of earlier ones.
struct SceneConfig {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t n_frames = 20;
  Rgb background{0.5, 0.5, 0.5};
  double noise_sigma = 0.1;
  bool allow_occlusion = true;  // when false, overlapping objects are a config error
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sequence {
  std::vector<FeatureMap> frames;                // RGB, 3 channels
  std::vector<std::vector<MaskMap>> gt_masks;    // [frame][object], visible pixels only
  std::vector<std::int64_t> gt_ids;              // per object
};

// Object center at frame t after border reflection.
std::pair<double, double> object_center(const ObjectSpec& obj, std::size_t t, std::size_t height, std::size_t width);
// Pixels covered by the object at frame t, ignoring occlusion.
MaskMap object_footprint(const ObjectSpec& obj, std::size_t t, std::size_t height, std::size_t width);

Sequence generate_sequence(const SceneConfig& config);

// Two distinct-colored disks whose paths cross mid-sequence; positions,
// speeds and colors vary with the seed.
SceneConfig crossing_scene(std::uint64_t seed, std::size_t n_frames = 20, double noise_sigma = 0.1);

// 9 channels: R, G, B, x / (W - 1), y / (H - 1), then the 3x3 box mean of R, G, B
// (averaged over in-bounds neighbors at the border).
inline constexpr std::size_t kEncodedChannels = 9;
FeatureMap encode_frame(const FeatureMap& rgb);

// Stand-in detector: ground truth degraded by boundary erosion/dilation and
// pixel dropout. The fractions are of the ground-truth area.
struct CorruptionConfig {
  double erosion = 0.2;
  double dilation = 0.0;
  double dropout = 0.0;
  double logit_scale = 1.0;  // initial logit is +scale inside, -scale outside
};

MaskMap corrupt_mask(const MaskMap& gt, const CorruptionConfig& config, RngStream& rng);
FeatureMap mask_logits(const MaskMap& mask, double scale);

struct TrackerConfig {
  // embeddings
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
  std::uint64_t projection_seed = 7;
  double key_scale = 4.0;    // projection gain of the key channels
  double value_scale = 4.0;  // projection gain of the value channels
  // frame-level prototypes and memory
  std::size_t frame_protos = 64;
  std::size_t em_iters = 6;
  double sigma2 = 0.5;
  InitKind frame_init = InitKind::subsample;
  ValueMode frame_value_mode = ValueMode::normalized;
  std::size_t capacity = kDefaultMemoryCapacity;
  // instance-level prototypes
  bool instance_protos = true;
  std::size_t n_pos = kDefaultPosProtos;
  std::size_t n_neg = kDefaultNegProtos;
  double momentum = kDefaultMomentum;
  double bg_factor = kDefaultBgFactor;
  std::size_t instance_em_iters = 6;
  double instance_sigma2 = 0.5;
  PartitionMode partition = PartitionMode::joint;
  double fuse_a = 1.0;
  double fuse_b = 2.0;
  // association
  double iou_threshold = 0.3;
  double appearance_weight = 0.5;  // share of the association score from fg attention
  std::size_t max_age = 10;        // frames a track survives unmatched
  CorruptionConfig corruption;

  void validate() const;
};

using LabeledMask = std::pair<std::int64_t, MaskMap>;

struct FrameTracks {
  std::vector<LabeledMask> tracks;   // (track id, refined mask)
  std::vector<LabeledMask> initial;  // (gt id, initial detection mask)
};

struct TrackMetrics {
  double mean_iou = 0.0;  // over matched (IoU > 0.5) pairs; 0 when nothing matched
  std::size_t id_switches = 0;
  double smotsa = 0.0;    // (sum matched IoU - false positives - id switches) / gt masks
  std::size_t matched = 0;
  std::size_t false_positives = 0;
  std::size_t gt_masks = 0;
};

struct TrackOutput {
  std::vector<FrameTracks> frames;
  TrackMetrics metrics;          // refined track masks vs ground truth
  TrackMetrics initial_metrics;  // initial detections vs ground truth
};

// Greedy one-to-one assignment on a rows x cols score matrix: pairs are taken
// in descending score order (ties by row, then column) while both ends are
// free and the score is >= threshold.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Matrix& scores, double threshold);

TrackOutput run_tracker(const Sequence& sequence, const TrackerConfig& config, std::uint64_t seed);
TrackOutput run_tracker(const SceneConfig& scene, const TrackerConfig& config);

// Per-frame matching at IoU > 0.5; an id switch is counted when a ground-truth
// object is matched to a different prediction id than at its previous match.
TrackMetrics evaluate(const std::vector<std::vector<LabeledMask>>& predictions, const Sequence& gt);

}  // namespace pcan
