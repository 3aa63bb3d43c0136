#include "trep/groundtruth.hpp"

#include <algorithm>
#include <cmath>

#include "trep/errors.hpp"
#include "trep/parallel.hpp"

namespace trep {

CorpusLayout layout_corpus(std::span<const Observation> observations, const TimeGrid& grid) {
  CorpusLayout layout;
  layout.timestamps = grid.size();
  for (const auto& o : observations) {
    if (o.cycle < 1) throw InvalidArgument("cycle id must be >= 1: " + o.image_id);
    if (o.timestamp_index < 1 || o.timestamp_index > grid.size())
      throw InvalidArgument("timestamp index out of range: " + o.image_id);
    layout.cycles = std::max(layout.cycles, o.cycle);
  }
  layout.counts = Eigen::MatrixXi::Zero(layout.cycles, layout.timestamps);
  for (const auto& o : observations) ++layout.counts(o.cycle - 1, o.timestamp_index - 1);
  return layout;
}

std::string to_string(MatchMode m) { return m == MatchMode::Geometric ? "GEOMETRIC" : "STATIC"; }

MatchMode match_mode_from_string(const std::string& name) {
  if (name == "GEOMETRIC" || name == "geometric") return MatchMode::Geometric;
  if (name == "STATIC" || name == "static") return MatchMode::Static;
  throw InvalidArgument("unknown match mode: " + name);
}

Corpus::Corpus(std::vector<Observation> observations) : observations_(std::move(observations)) {
  indices_.reserve(observations_.size());
  for (const auto& o : observations_) {
    std::vector<Descriptor> d;
    d.reserve(o.points.size());
    for (const auto& p : o.points) d.push_back(p.descriptor);
    indices_.emplace_back(d);
  }
}

bool accept_match(const Observation& a, const Pixel& pix_a, const Observation& b, const Pixel& pix_b, MatchMode mode,
                  const GroundTruthParams& params) {
  if (mode == MatchMode::Static) {
    const Pixel d = (pix_a - pix_b).cwiseAbs();
    return d.x() < params.static_tau_px && d.y() < params.static_tau_px;
  }
  try {
    if ((a.pose.center() - b.pose.center()).norm() < params.min_baseline_m) {
      const Eigen::Matrix3d k = a.intrinsics.matrix();
      const Eigen::Matrix3d h = k * b.pose.rotation * a.pose.rotation.transpose() * k.inverse();
      const Eigen::Vector3d m = h * pix_a.homogeneous();
      if (!(m.z() > 0.0)) return false;
      return (m.hnormalized() - pix_b).norm() < params.epipolar_tau_px;
    }
    if (!epipolar_check(a.pose, b.pose, pix_a, pix_b, a.intrinsics, params.epipolar_tau_px)) return false;
    const auto tri = triangulate(a.pose, b.pose, pix_a, pix_b, a.intrinsics);
    return tri.max_reprojection_error < params.reprojection_tau_px;
  } catch (const Error&) {
    return false;
  }
}

std::vector<Inlier> match_point_against_corpus(const Corpus& corpus, std::size_t source, std::size_t point,
                                               MatchMode mode, const GroundTruthParams& params) {
  const Observation& src = corpus[source];
  const InterestPoint& x = src.points.at(point);
  const Pixel pix_a(x.keypoint.x, x.keypoint.y);
  std::vector<Inlier> inliers;
  for (std::size_t t = 0; t < corpus.size(); ++t) {
    if (t == source || corpus.index(t).size() < 2) continue;
    const NearestTwo nn = nearest_two(x.descriptor, corpus.index(t));
    if (!ratio_test(nn.best.distance, nn.second.distance, params.ratio)) continue;
    const Keypoint& kb = corpus[t].points[nn.best.index].keypoint;
    if (accept_match(src, pix_a, corpus[t], Pixel(kb.x, kb.y), mode, params)) inliers.push_back({t, nn.best.index});
  }
  return inliers;
}

RepeatabilityTarget repeatability_vector(int own_timestamp, std::span<const InlierSlot> inliers,
                                         const CorpusLayout& layout) {
  const int t = layout.timestamps;
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(t);
  for (const auto& s : inliers) {
    if (s.timestamp_index < 1 || s.timestamp_index > t) throw InvalidArgument("inlier slot out of range");
    hits(s.timestamp_index - 1) += 1.0;
  }
  if (own_timestamp >= 1 && own_timestamp <= t) hits(own_timestamp - 1) += 1.0;
  RepeatabilityTarget out{Eigen::VectorXd::Zero(t), Eigen::VectorXd::Zero(t)};
  for (int j = 1; j <= t; ++j) {
    const int den = layout.slot_total(j);
    if (den <= 0) continue;
    out.scores(j - 1) = std::min(1.0, hits(j - 1) / den);
    out.mask(j - 1) = 1.0;
  }
  return out;
}

std::vector<GroundTruthSample> build_training_set(const Corpus& corpus, const TimeGrid& grid, MatchMode mode,
                                                  const GroundTruthParams& params, const RetainFn& retain) {
  if (corpus.size() == 0) throw EmptyDataset("corpus has no images");
  const CorpusLayout layout = layout_corpus(corpus.observations(), grid);

  struct Job {
    std::size_t image, point;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t p = 0; p < corpus[i].points.size(); ++p)
      if (!retain || retain(i, p)) jobs.push_back({i, p});

  std::vector<GroundTruthSample> samples(jobs.size());
  parallel_for(jobs.size(), params.threads, [&](std::size_t n) {
    const auto [i, p] = jobs[n];
    const Observation& o = corpus[i];
    std::vector<InlierSlot> slots;
    for (const auto& in : match_point_against_corpus(corpus, i, p, mode, params))
      slots.push_back({corpus[in.image].cycle, corpus[in.image].timestamp_index});
    RepeatabilityTarget y = repeatability_vector(o.timestamp_index, slots, layout);
    GroundTruthSample& s = samples[n];
    s.image_id = o.image_id;
    s.point_index = p;
    s.keypoint = o.points[p].keypoint;
    s.wallclock = o.wallclock;
    s.timestamp_index = o.timestamp_index;
    s.image_width = o.width;
    s.image_height = o.height;
    s.patch = o.points[p].patch;
    s.descriptor = o.points[p].descriptor;
    s.y = std::move(y.scores);
    s.mask = std::move(y.mask);
  });
  return samples;
}

}  // namespace trep
