#include "trep/mapsum.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "trep/errors.hpp"

namespace trep {

MapPoint aggregate_point(std::size_t id, const Point3& position, std::span<const PointObservation> observations,
                         std::span<const Eigen::VectorXd> predictions) {
  if (predictions.size() != observations.size()) throw ShapeMismatch("one prediction per observation required");
  MapPoint mp;
  mp.id = id;
  mp.position = position;
  for (const auto& o : observations) mp.observing_images.push_back(o.image);
  std::sort(mp.observing_images.begin(), mp.observing_images.end());
  mp.observing_images.erase(std::unique(mp.observing_images.begin(), mp.observing_images.end()),
                            mp.observing_images.end());
  if (mp.observing_images.size() < 2) throw TooFewObservations("a map point needs at least two images");

  Descriptor d = Descriptor::Zero();
  for (const auto& o : observations) d += o.descriptor;
  const double n = d.norm();
  mp.mean_descriptor = n > 0.0 ? Descriptor(d / n) : observations.front().descriptor;

  mp.mean_repeatability = Eigen::VectorXd::Zero(predictions.front().size());
  for (const auto& p : predictions) {
    if (p.size() != mp.mean_repeatability.size()) throw ShapeMismatch("predictions differ in length");
    mp.mean_repeatability += p;
  }
  mp.mean_repeatability /= static_cast<double>(predictions.size());
  return mp;
}

MapPoint aggregate_point(std::size_t id, const Point3& position, std::span<const PointObservation> observations,
                         const RepeatabilityPredictor& model) {
  std::vector<Eigen::VectorXd> predictions;
  predictions.reserve(observations.size());
  for (const auto& o : observations)
    predictions.push_back(
        predict_repeatability(model, o.keypoint, o.image_width, o.image_height, o.wallclock, o.patch));
  return aggregate_point(id, position, observations, predictions);
}

MapPartition partition_map(std::span<const MapPoint> points, double cell_size) {
  if (!(cell_size > 0.0)) throw InvalidArgument("cell size must be positive");
  MapPartition part;
  part.cell_size = cell_size;
  part.assignment.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CellKey key{static_cast<std::int64_t>(std::floor(points[i].position.x() / cell_size)),
                      static_cast<std::int64_t>(std::floor(points[i].position.y() / cell_size))};
    part.assignment.push_back(key);
    part.cells[key].push_back(i);
  }
  return part;
}

std::string to_string(SummaryMethod m) {
  switch (m) {
    case SummaryMethod::Full: return "full";
    case SummaryMethod::Repeatability: return "rp";
    case SummaryMethod::KCover: return "kcover";
  }
  return "full";
}

SummaryMethod summary_method_from_string(const std::string& name) {
  if (name == "full") return SummaryMethod::Full;
  if (name == "rp") return SummaryMethod::Repeatability;
  if (name == "kcover") return SummaryMethod::KCover;
  throw InvalidArgument("unknown summary method: " + name);
}

std::size_t retained_count(std::size_t n, double prune_ratio) {
  if (n == 0) return 0;
  const auto keep = static_cast<std::size_t>(std::floor((1.0 - prune_ratio) * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(keep, 1, n);
}

SummaryMap summarize(std::span<const MapPoint> points, const MapPartition& partition, int t_index,
                     double prune_ratio) {
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) throw InvalidArgument("prune ratio must lie in [0, 1)");
  if (partition.assignment.size() != points.size()) throw ShapeMismatch("partition does not match the map");
  SummaryMap out;
  out.method = SummaryMethod::Repeatability;
  out.t_index = t_index;
  out.prune_ratio = prune_ratio;
  for (const auto& [key, members] : partition.cells) {
    std::vector<std::size_t> ranked = members;
    for (std::size_t i : ranked) {
      if (t_index < 1 || t_index > points[i].mean_repeatability.size())
        throw InvalidArgument("timestamp index outside the repeatability vector");
    }
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      const double sa = points[a].mean_repeatability(t_index - 1), sb = points[b].mean_repeatability(t_index - 1);
      if (sa != sb) return sa > sb;
      return points[a].id < points[b].id;
    });
    ranked.resize(retained_count(ranked.size(), prune_ratio));
    out.retained.insert(out.retained.end(), ranked.begin(), ranked.end());
  }
  std::sort(out.retained.begin(), out.retained.end());
  return out;
}

MulticoverResult greedy_multicover(const std::vector<std::vector<std::size_t>>& visibility,
                                   std::span<const std::size_t> point_ids, std::size_t image_count, int k) {
  if (k < 1) throw InvalidArgument("K must be at least 1");
  if (point_ids.size() != visibility.size()) throw ShapeMismatch("one id per point required");
  std::vector<int> available(image_count, 0), covered(image_count, 0);
  for (const auto& v : visibility)
    for (std::size_t img : v) {
      if (img >= image_count) throw InvalidArgument("image index out of range");
      ++available[img];
    }

  const auto gain = [&](std::size_t p) {
    int g = 0;
    for (std::size_t img : visibility[p]) g += covered[img] < k ? 1 : 0;
    return g;
  };
  // Max-heap on (gain, -id). Gains only shrink, so stale entries are upper
  // bounds and a popped entry whose gain is still current is the best choice.
  using Entry = std::pair<int, std::size_t>;  // gain, point position
  const auto worse = [&](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first < b.first;
    return point_ids[a.second] > point_ids[b.second];
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (std::size_t p = 0; p < visibility.size(); ++p)
    if (const int g = gain(p); g > 0) heap.push({g, p});

  MulticoverResult out;
  while (!heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    const int g = gain(top.second);
    if (g == 0) continue;
    if (g < top.first) {
      heap.push({g, top.second});
      continue;
    }
    out.order.push_back(top.second);
    for (std::size_t img : visibility[top.second]) ++covered[img];
  }
  for (std::size_t img = 0; img < image_count; ++img)
    if (available[img] < k) out.infeasible_images.push_back(img);
  return out;
}

namespace {

struct CoverInput {
  std::vector<std::vector<std::size_t>> visibility;
  std::vector<std::size_t> ids;
};

CoverInput cover_input(std::span<const MapPoint> points) {
  CoverInput in;
  in.visibility.reserve(points.size());
  in.ids.reserve(points.size());
  for (const auto& p : points) {
    in.visibility.push_back(p.observing_images);
    in.ids.push_back(p.id);
  }
  return in;
}

}  // namespace

SummaryMap kcover_summarize(std::span<const MapPoint> points, std::size_t image_count, int k) {
  const CoverInput in = cover_input(points);
  MulticoverResult r = greedy_multicover(in.visibility, in.ids, image_count, k);
  SummaryMap out;
  out.method = SummaryMethod::KCover;
  out.k = k;
  out.retained = std::move(r.order);
  std::sort(out.retained.begin(), out.retained.end());
  out.infeasible_images = std::move(r.infeasible_images);
  return out;
}

SummaryMap kcover_summarize_ratio(std::span<const MapPoint> points, std::size_t image_count, double prune_ratio) {
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) throw InvalidArgument("prune ratio must lie in [0, 1)");
  SummaryMap out;
  out.method = SummaryMethod::KCover;
  out.prune_ratio = prune_ratio;
  const std::size_t budget = retained_count(points.size(), prune_ratio);
  if (budget == points.size()) {
    out.retained.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out.retained[i] = i;
    return out;
  }
  const CoverInput in = cover_input(points);
  std::size_t max_vis = 0;
  {
    std::vector<std::size_t> count(image_count, 0);
    for (const auto& v : in.visibility)
      for (std::size_t img : v) max_vis = std::max(max_vis, ++count.at(img));
  }
  MulticoverResult r;
  for (int k = 1; k <= static_cast<int>(max_vis); ++k) {
    r = greedy_multicover(in.visibility, in.ids, image_count, k);
    out.k = k;
    if (r.order.size() >= budget) break;
  }
  if (r.order.size() > budget) r.order.resize(budget);
  out.retained = std::move(r.order);
  std::sort(out.retained.begin(), out.retained.end());
  out.infeasible_images = std::move(r.infeasible_images);
  return out;
}

}  // namespace trep
