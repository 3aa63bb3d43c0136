#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "trep/imaging.hpp"

namespace trep {

struct Neighbor {
  std::size_t index = 0;  // position of the stored vector (the payload reference)
  double distance = 0.0;  // Euclidean
};

/// Exact k-d tree over fixed-length real vectors. Results are identical to a
/// brute-force scan: same squared-distance arithmetic, ties broken by index.
class KdTree {
 public:
  KdTree() = default;
  /// Columns of `points` are the stored vectors.
  explicit KdTree(Eigen::MatrixXd points, int leaf_size = 8);

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  Eigen::Index dim() const { return points_.rows(); }
  const Eigen::MatrixXd& points() const { return points_; }

  /// The k nearest stored vectors, ascending by (distance, index).
  std::vector<Neighbor> knn(const Eigen::Ref<const Eigen::VectorXd>& query, std::size_t k) const;

 private:
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    double split_value = 0.0;
    std::int32_t left = -1, right = -1;
    std::uint32_t begin = 0, end = 0;  // leaf range in order_
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k,
              std::vector<std::pair<double, std::size_t>>& best) const;

  Eigen::MatrixXd points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

/// k-d tree over 128-d local descriptors.
class DescriptorIndex {
 public:
  DescriptorIndex() = default;
  explicit DescriptorIndex(std::span<const Descriptor> descriptors);

  std::size_t size() const { return tree_.size(); }
  const KdTree& tree() const { return tree_; }

 private:
  KdTree tree_;
};

struct NearestTwo {
  Neighbor best;
  Neighbor second;
};

/// Exact two nearest neighbors. Throws TooFewCandidates below 2 entries.
NearestTwo nearest_two(const Descriptor& query, const DescriptorIndex& index);

/// Lowe's test: accept iff best < ratio * second.
bool ratio_test(double best_distance, double second_distance, double ratio);

struct Correspondence {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double distance = 0.0;
};

inline constexpr double kDefaultRatio = 0.8;

/// One-directional a -> b matching with the ratio test; at most one
/// correspondence per element of `set_a`, in a-order.
std::vector<Correspondence> match_features(std::span<const Descriptor> set_a,
                                           const DescriptorIndex& index_b, double ratio = kDefaultRatio);
std::vector<Correspondence> match_features(std::span<const Descriptor> set_a,
                                           std::span<const Descriptor> set_b, double ratio = kDefaultRatio);

}  // namespace trep
