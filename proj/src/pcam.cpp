#include "pcan/pcam.hpp"

#include <fstream>
#include <string>

#include "pcan/detail/binary.hpp"
#include "pcan/detail/kernels.hpp"

namespace pcan {

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, Errc::invalid_argument, "memory capacity must be at least 1");
}

std::optional<std::int64_t> MemoryBank::latest_index() const {
  if (frames_.empty()) return std::nullopt;
  return frames_.back().frame_index;
}

void MemoryBank::push(PrototypeSet protos, std::int64_t frame_index) {
  protos.validate();
  if (!frames_.empty()) {
    require(frame_index > frames_.back().frame_index, Errc::invalid_argument,
            "memory frame index " + std::to_string(frame_index) + " is not after " +
                std::to_string(frames_.back().frame_index));
    const auto& last = frames_.back().protos;
    require(protos.key_dim() == last.key_dim() && protos.value_dim() == last.value_dim(), Errc::dimension_mismatch,
            "memory frame prototype dims differ from the stored frames");
  }
  frames_.push_back({frame_index, std::move(protos)});
  while (frames_.size() > capacity_) frames_.pop_front();
}

std::vector<const MemoryEntry*> MemoryBank::before(std::int64_t index) const {
  std::vector<const MemoryEntry*> out;
  for (const auto& e : frames_)
    if (e.frame_index < index) out.push_back(&e);
  return out;
}

void push_frame(MemoryBank& bank, PrototypeSet protos, std::int64_t frame_index) {
  bank.push(std::move(protos), frame_index);
}

FeatureMap attend(const FeatureMap& query_keys, const PrototypeSet& protos) {
  protos.validate();
  require(query_keys.channels() == protos.key_dim(), Errc::dimension_mismatch,
          "attend: query key channels (" + std::to_string(query_keys.channels()) + ") differ from prototype key dim (" +
              std::to_string(protos.key_dim()) + ")");
  auto y = kernels::attend<double>(query_keys.pixels(), protos.key_means, protos.value_protos, protos.sigma2);
  return FeatureMap(query_keys.height(), query_keys.width(), std::move(y));
}

namespace {

std::vector<ReconstructedFrame> reconstruct(const std::vector<const MemoryEntry*>& entries,
                                            const FeatureMap& query_keys) {
  std::vector<ReconstructedFrame> out;
  out.reserve(entries.size());
  for (const auto* e : entries) out.push_back({attend(query_keys, e->protos), e->frame_index});
  return out;
}

}  // namespace

std::vector<ReconstructedFrame> reconstruct_all(const MemoryBank& bank, const FeatureMap& query_keys) {
  std::vector<const MemoryEntry*> all;
  for (const auto& e : bank.frames()) all.push_back(&e);
  return reconstruct(all, query_keys);
}

std::vector<ReconstructedFrame> reconstruct_all(const MemoryBank& bank, const FeatureMap& query_keys,
                                                std::int64_t current_index) {
  return reconstruct(bank.before(current_index), query_keys);
}

AggregationResult aggregate(const std::vector<ReconstructedFrame>& reconstructions, const FeatureMap& current_values) {
  std::vector<const Matrix*> recons;
  for (const auto& r : reconstructions) {
    require(r.y.same_grid(current_values) && r.y.channels() == current_values.channels(), Errc::dimension_mismatch,
            "aggregate: reconstruction dims differ from the current value map");
    recons.push_back(&r.y.pixels());
  }
  Matrix fused, weights;
  kernels::aggregate<double>(recons, current_values.pixels(), fused, weights);
  return {FeatureMap(current_values.height(), current_values.width(), std::move(fused)),
          FeatureMap(current_values.height(), current_values.width(), std::move(weights))};
}

std::map<int, AggregationResult> multi_level_aggregate(const std::map<int, LevelInput>& levels) {
  require(!levels.empty(), Errc::invalid_argument, "multi_level_aggregate needs at least one level");
  std::map<int, AggregationResult> out;
  for (const auto& [level, in] : levels) {
    require(in.bank != nullptr, Errc::invalid_argument, "level " + std::to_string(level) + " has no memory bank");
    require(in.query_keys.same_grid(in.current_values), Errc::dimension_mismatch,
            "level " + std::to_string(level) + ": key and value grids differ");
    for (const auto& e : in.bank->frames()) {
      require(e.protos.key_dim() == in.query_keys.channels() && e.protos.value_dim() == in.current_values.channels(),
              Errc::dimension_mismatch, "level " + std::to_string(level) + ": bank prototype dims do not match inputs");
    }
    out.emplace(level, aggregate(reconstruct_all(*in.bank, in.query_keys), in.current_values));
  }
  return out;
}

void write_bank(std::ostream& os, const MemoryBank& bank) {
  binary::put_magic(os, "PCAB");
  binary::put_le<std::uint16_t>(os, kBankVersion);
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(bank.capacity()));
  binary::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(bank.size()));
  for (const auto& e : bank.frames()) binary::put_i64(os, e.frame_index);
  for (const auto& e : bank.frames()) write_protos(os, e.protos);
}

MemoryBank read_bank(std::istream& is) {
  binary::expect_magic(is, "PCAB", "memory bank");
  const auto version = binary::get_le<std::uint16_t>(is, "PCAB version");
  require(version == kBankVersion, Errc::unsupported, "unsupported PCAB version " + std::to_string(version));
  const auto capacity = binary::get_le<std::uint32_t>(is, "PCAB capacity");
  const auto count = binary::get_le<std::uint32_t>(is, "PCAB count");
  require(count <= capacity, Errc::invalid_argument, "PCAB holds more frames than its capacity");
  std::vector<std::int64_t> indices(count);
  for (auto& i : indices) i = binary::get_i64(is, "PCAB frame index");
  MemoryBank bank(capacity);
  for (auto i : indices) bank.push(read_protos(is), i);
  return bank;
}

void write_bank(const std::filesystem::path& path, const MemoryBank& bank) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  write_bank(os, bank);
  os.flush();
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

MemoryBank read_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open for reading: " + path.string());
  return read_bank(is);
}

}  // namespace pcan
