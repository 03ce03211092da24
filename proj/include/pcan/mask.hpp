#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace pcan {

// Inclusive pixel rectangle.
struct Box {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t width() const noexcept { return x1 - x0 + 1; }
  std::size_t height() const noexcept { return y1 - y0 + 1; }
  bool contains(std::size_t x, std::size_t y) const noexcept { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const Box&) const = default;
};

// Binary mask with a cached tight bounding box (empty when no pixel is set).
class MaskMap {
 public:
  MaskMap() = default;
  MaskMap(std::size_t height, std::size_t width);
  MaskMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  bool at(std::size_t y, std::size_t x) const { return values_[y * width_ + x] != 0; }
  bool operator[](std::size_t i) const { return values_[i] != 0; }
  void set(std::size_t y, std::size_t x, bool on);
  void set(std::size_t i, bool on) { set(i / width_, i % width_, on); }

  std::size_t area() const noexcept { return area_; }
  bool empty() const noexcept { return area_ == 0; }
  const std::optional<Box>& box() const noexcept { return box_; }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  bool same_grid(const MaskMap& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }
  bool operator==(const MaskMap& o) const { return height_ == o.height_ && width_ == o.width_ && values_ == o.values_; }

 private:
  void recompute();

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;  // 0 or 1
  std::size_t area_ = 0;
  std::optional<Box> box_;
};

double mask_iou(const MaskMap& a, const MaskMap& b);

}  // namespace pcan
