#include "trep/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trep/errors.hpp"

namespace trep {
namespace {

double squared_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const double* b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = a(i) - b[i];
    acc += d * d;
  }
  return acc;
}

bool closer(const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
  return a.first < b.first || (a.first == b.first && a.second < b.second);
}

}  // namespace

KdTree::KdTree(Eigen::MatrixXd points, int leaf_size)
    : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), 0u);
  if (!order_.empty()) build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= static_cast<std::uint32_t>(leaf_size_)) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }
  // Split on the dimension with the largest spread.
  int best_dim = 0;
  double best_spread = -1.0;
  for (Eigen::Index d = 0; d < points_.rows(); ++d) {
    double lo = points_(d, order_[begin]), hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      const double v = points_(d, order_[i]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_spread <= 0.0) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double va = points_(best_dim, a), vb = points_(best_dim, b);
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_(best_dim, order_[mid]);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.split_dim = best_dim;
  node.split_value = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Eigen::Ref<const Eigen::VectorXd>& q, std::size_t k,
                    std::vector<std::pair<double, std::size_t>>& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.split_dim < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const std::pair<double, std::size_t> cand{squared_distance(q, points_.col(static_cast<Eigen::Index>(idx)).data()), idx};
      if (best.size() < k) {
        best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
      } else if (closer(cand, best.back())) {
        best.pop_back();
        best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
      }
    }
    return;
  }
  // Points equal to the split value may sit on either side, so both children
  // are bounded by the (signed) plane distance, never skipped on ties.
  const double diff = q(node.split_dim) - node.split_value;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, k, best);
  if (best.size() < k || diff * diff <= best.back().first) search(far, q, k, best);
}

std::vector<Neighbor> KdTree::knn(const Eigen::Ref<const Eigen::VectorXd>& query, std::size_t k) const {
  if (query.size() != points_.rows()) throw ShapeMismatch("query dimension does not match the index");
  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(k + 1);
  if (k > 0 && !nodes_.empty()) search(0, query, k, best);
  std::vector<Neighbor> out;
  out.reserve(best.size());
  for (const auto& [d2, idx] : best) out.push_back({idx, std::sqrt(d2)});
  return out;
}

DescriptorIndex::DescriptorIndex(std::span<const Descriptor> descriptors) {
  Eigen::MatrixXd pts(kDescriptorDim, static_cast<Eigen::Index>(descriptors.size()));
  for (std::size_t i = 0; i < descriptors.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = descriptors[i];
  tree_ = KdTree(std::move(pts));
}

NearestTwo nearest_two(const Descriptor& query, const DescriptorIndex& index) {
  if (index.size() < 2) throw TooFewCandidates("nearest_two needs at least 2 indexed descriptors");
  const auto nn = index.tree().knn(query, 2);
  return {nn[0], nn[1]};
}

bool ratio_test(double best_distance, double second_distance, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("ratio must lie in (0, 1)");
  return best_distance < ratio * second_distance;
}

std::vector<Correspondence> match_features(std::span<const Descriptor> set_a,
                                           const DescriptorIndex& index_b, double ratio) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < set_a.size(); ++i) {
    const NearestTwo nn = nearest_two(set_a[i], index_b);
    if (ratio_test(nn.best.distance, nn.second.distance, ratio))
      out.push_back({i, nn.best.index, nn.best.distance});
  }
  return out;
}

std::vector<Correspondence> match_features(std::span<const Descriptor> set_a,
                                           std::span<const Descriptor> set_b, double ratio) {
  return match_features(set_a, DescriptorIndex(set_b), ratio);
}

}  // namespace trep
