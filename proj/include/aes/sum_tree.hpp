#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aes/error.hpp"

namespace aes {

/// Complete binary tree of partial sums over non-negative leaf values.
///
/// Leaves live at [leaf_base, 2 * leaf_base) with leaf_base a power of two;
/// node k has children 2k and 2k + 1 and the root is node 1. Padding leaves
/// hold zero. Parents are recomputed as the sum of their children on every
/// update rather than adjusted by deltas, so an incrementally maintained tree
/// is bitwise identical to one rebuilt from the same leaves.
class SumTree {
 public:
  SumTree() = default;

  explicit SumTree(std::size_t size) : size_(size) {
    while (leaf_base_ < size_) leaf_base_ <<= 1;
    nodes_.assign(2 * leaf_base_, 0.0);
  }

  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] double total() const { return nodes_.size() > 1 ? nodes_[1] : 0.0; }
  [[nodiscard]] double get(std::size_t i) const { return nodes_[leaf_base_ + i]; }

  void set(std::size_t i, double value) {
    if (i >= size_) throw DataError("sum tree index out of range");
    if (!(value >= 0.0)) throw DataError("sum tree values must be non-negative");
    std::size_t k = leaf_base_ + i;
    nodes_[k] = value;
    for (k >>= 1; k >= 1; k >>= 1) nodes_[k] = nodes_[2 * k] + nodes_[2 * k + 1];
  }

  /// Replaces all leaves and recomputes every internal node.
  void assign(std::span<const double> values) {
    if (values.size() != size_) throw DataError("sum tree size mismatch");
    for (std::size_t i = 0; i < size_; ++i) {
      if (!(values[i] >= 0.0)) throw DataError("sum tree values must be non-negative");
      nodes_[leaf_base_ + i] = values[i];
    }
    for (std::size_t k = leaf_base_ - 1; k >= 1; --k) nodes_[k] = nodes_[2 * k] + nodes_[2 * k + 1];
  }

  /// Leaf whose cumulative range contains `mass`, for mass in [0, total()).
  /// Descends left whenever the right subtree is empty so rounding never lands on padding.
  [[nodiscard]] std::size_t find(double mass) const {
    std::size_t k = 1;
    while (k < leaf_base_) {
      const double left = nodes_[2 * k];
      const double right = nodes_[2 * k + 1];
      if (mass < left || right <= 0.0) {
        k = 2 * k;
      } else {
        mass -= left;
        k = 2 * k + 1;
      }
    }
    return k - leaf_base_;
  }

  /// Raw node array (index 0 unused), for consistency checks.
  [[nodiscard]] std::span<const double> nodes() const { return nodes_; }

 private:
  std::size_t size_ = 0;
  std::size_t leaf_base_ = 1;
  std::vector<double> nodes_ = std::vector<double>(2, 0.0);
};

}  // namespace aes
