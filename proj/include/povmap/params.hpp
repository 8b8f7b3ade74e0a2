#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "povmap/error.hpp"

namespace povmap {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Named parameter blocks laid out back to back in one flat buffer, so an
// optimizer, a gradient accumulator and a checkpoint all see the same layout.
template <typename T>
class ParamPack {
 public:
  struct Block {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    bool decay = false;  // subject to decoupled weight decay
    bool operator==(const Block&) const = default;
  };

  int add(std::string name, Eigen::Index rows, Eigen::Index cols, bool decay) {
    blocks_.push_back({std::move(name), rows, cols, values_.size(), decay});
    values_.resize(values_.size() + static_cast<std::size_t>(rows * cols), T(0));
    return static_cast<int>(blocks_.size()) - 1;
  }

  Eigen::Map<RowMat<T>> mat(int id) {
    const Block& b = blocks_[id];
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<const RowMat<T>> mat(int id) const {
    const Block& b = blocks_[id];
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<Vec<T>> vec(int id) {
    const Block& b = blocks_[id];
    return {values_.data() + b.offset, b.rows * b.cols};
  }
  Eigen::Map<const Vec<T>> vec(int id) const {
    const Block& b = blocks_[id];
    return {values_.data() + b.offset, b.rows * b.cols};
  }

  std::span<T> flat() { return values_; }
  std::span<const T> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<Block>& blocks() const { return blocks_; }

  ParamPack zeros_like() const {
    ParamPack out = *this;
    std::fill(out.values_.begin(), out.values_.end(), T(0));
    return out;
  }
  void set_zero() { std::fill(values_.begin(), values_.end(), T(0)); }

  ParamPack& operator+=(const ParamPack& other) {
    if (other.values_.size() != values_.size()) throw DomainError("ParamPack size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  template <typename U>
  ParamPack<U> cast() const {
    ParamPack<U> out;
    for (const auto& b : blocks_) out.add(b.name, b.rows, b.cols, b.decay);
    auto dst = out.flat();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<U>(values_[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const ParamPack&) const = default;

 private:
  std::vector<Block> blocks_;
  std::vector<T, Eigen::aligned_allocator<T>> values_;
};

}  // namespace povmap
