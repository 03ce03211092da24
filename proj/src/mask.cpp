#include "pcan/mask.hpp"

#include <algorithm>

#include "pcan/error.hpp"

namespace pcan {

MaskMap::MaskMap(std::size_t height, std::size_t width) : height_(height), width_(width), values_(height * width, 0) {}

MaskMap::MaskMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  require(values_.size() == height * width, Errc::dimension_mismatch, "mask data length must equal height*width");
  for (auto& v : values_) v = v ? 1 : 0;
  recompute();
}

void MaskMap::set(std::size_t y, std::size_t x, bool on) {
  auto& v = values_[y * width_ + x];
  if ((v != 0) == on) return;
  v = on ? 1 : 0;
  if (on) {
    ++area_;
    if (!box_) {
      box_ = Box{x, y, x, y};
    } else {
      box_->x0 = std::min(box_->x0, x);
      box_->y0 = std::min(box_->y0, y);
      box_->x1 = std::max(box_->x1, x);
      box_->y1 = std::max(box_->y1, y);
    }
  } else {
    recompute();
  }
}

void MaskMap::recompute() {
  area_ = 0;
  box_.reset();
  for (std::size_t y = 0; y < height_; ++y) {
    for (std::size_t x = 0; x < width_; ++x) {
      if (!values_[y * width_ + x]) continue;
      ++area_;
      if (!box_) {
        box_ = Box{x, y, x, y};
      } else {
        box_->x0 = std::min(box_->x0, x);
        box_->y0 = std::min(box_->y0, y);
        box_->x1 = std::max(box_->x1, x);
        box_->y1 = std::max(box_->y1, y);
      }
    }
  }
}

double mask_iou(const MaskMap& a, const MaskMap& b) {
  require(a.same_grid(b), Errc::dimension_mismatch, "mask_iou: grids differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace pcan
