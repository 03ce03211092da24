#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "pcan/core.hpp"
#include "pcan/gmm.hpp"

namespace pcan {

// Default temporal length of the memory (frames held, current frame included
// when the online loop pushes before reading).
inline constexpr std::size_t kDefaultMemoryCapacity = 32;

struct MemoryEntry {
  std::int64_t frame_index = 0;
  PrototypeSet protos;
  bool operator==(const MemoryEntry&) const = default;
};

// FIFO store of per-frame prototype sets. Only prototypes are kept, never the
// raw frame features, so memory use is O(capacity * N * (D + C_v)).
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity = kDefaultMemoryCapacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  const std::deque<MemoryEntry>& frames() const noexcept { return frames_; }
  std::optional<std::int64_t> latest_index() const;

  // Appends a frame; the index must exceed every stored index. Evicts the
  // oldest entry when over capacity.
  void push(PrototypeSet protos, std::int64_t frame_index);

  // Entries with frame_index < `index`, oldest first.
  std::vector<const MemoryEntry*> before(std::int64_t index) const;

  bool operator==(const MemoryBank&) const = default;

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> frames_;
};

void push_frame(MemoryBank& bank, PrototypeSet protos, std::int64_t frame_index);

struct ReconstructedFrame {
  FeatureMap y;  // C_v channels, same grid as the query
  std::int64_t source_index = 0;
};

struct AggregationResult {
  FeatureMap y_bar;
  // One channel per reconstruction (in input order) followed by the current
  // frame's weight; each pixel's weights sum to 1.
  FeatureMap weights;
};

FeatureMap attend(const FeatureMap& query_keys, const PrototypeSet& protos);
std::vector<ReconstructedFrame> reconstruct_all(const MemoryBank& bank, const FeatureMap& query_keys);
// Only memory frames strictly older than `current_index` are read.
std::vector<ReconstructedFrame> reconstruct_all(const MemoryBank& bank, const FeatureMap& query_keys,
                                                std::int64_t current_index);
AggregationResult aggregate(const std::vector<ReconstructedFrame>& reconstructions, const FeatureMap& current_values);

struct LevelInput {
  FeatureMap query_keys;
  FeatureMap current_values;
  const MemoryBank* bank = nullptr;
};

// Independent read + aggregation per pyramid level; levels never mix.
std::map<int, AggregationResult> multi_level_aggregate(const std::map<int, LevelInput>& levels);

// Bank snapshot: "PCAB", u16 version, u32 capacity, u32 count, count x i64
// frame indices, then `count` PCAP blocks in the same order.
inline constexpr std::uint16_t kBankVersion = 1;
void write_bank(std::ostream& os, const MemoryBank& bank);
MemoryBank read_bank(std::istream& is);
void write_bank(const std::filesystem::path& path, const MemoryBank& bank);
MemoryBank read_bank(const std::filesystem::path& path);

}  // namespace pcan
