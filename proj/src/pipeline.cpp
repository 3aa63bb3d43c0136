#include "trep/pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "trep/errors.hpp"
#include "trep/parallel.hpp"

namespace trep {

FeatureSet extract_dataset_features(const Dataset& dataset, const PipelineParams& params) {
  FeatureSet features(dataset.images.size());
  parallel_for(dataset.images.size(), params.threads, [&](std::size_t i) {
    features[i] = extract_interest_points(dataset.images[i], params.max_keypoints, params.nms_radius);
  });
  return features;
}

std::vector<std::vector<std::int64_t>> associate_features(const Dataset& dataset, const FeatureSet& features,
                                                          double radius) {
  std::vector<std::vector<std::int64_t>> ids(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    ids[i].assign(features[i].size(), -1);
    for (std::size_t p = 0; p < features[i].size(); ++p) {
      const Pixel kp(features[i][p].keypoint.x, features[i][p].keypoint.y);
      double best = radius;
      for (const auto& e : dataset.renders.at(i)) {
        const double d = (e.center - kp).norm();
        if (d < best) {
          best = d;
          ids[i][p] = static_cast<std::int64_t>(e.point_id);
        }
      }
    }
  }
  return ids;
}

namespace {

Observation observation_header(const Dataset& dataset, std::size_t i) {
  const ImageRecord& r = dataset.records[i];
  Observation o;
  o.image_id = r.id;
  o.cycle = r.cycle;
  o.timestamp_index = r.slot;
  o.wallclock = r.wallclock;
  o.pose = r.pose;
  o.intrinsics = r.intrinsics;
  o.width = r.width;
  o.height = r.height;
  return o;
}

}  // namespace

TrainingSet build_dataset_ground_truth(const Dataset& dataset, const FeatureSet& features,
                                       const PipelineParams& params) {
  const auto assoc = associate_features(dataset, features, params.association_px);
  std::map<std::size_t, int> category_of;
  for (const auto& p : dataset.points) category_of[p.id] = static_cast<int>(p.category);

  TrainingSet set;
  set.grid = dataset.grid;
  set.mode = params.mode;
  set.params = params.gt;
  set.params.threads = params.threads;
  const auto database = dataset.database_images();
  std::vector<std::pair<std::size_t, GroundTruthSample>> keyed;
  for (int v = 0; v < dataset.viewpoint_count(); ++v) {
    std::vector<std::size_t> members;
    for (std::size_t i : database)
      if (dataset.records[i].viewpoint == v) members.push_back(i);
    if (members.empty()) continue;
    std::vector<Observation> obs;
    for (std::size_t i : members) {
      obs.push_back(observation_header(dataset, i));
      obs.back().points = features[i];
    }
    const Corpus corpus(std::move(obs));
    set.layouts.push_back(layout_corpus(corpus.observations(), dataset.grid));
    const RetainFn retain = [&](std::size_t image, std::size_t point) { return assoc[members[image]][point] >= 0; };
    auto samples = build_training_set(corpus, dataset.grid, params.mode, set.params, retain);
    std::size_t local = 0;
    for (auto& s : samples) {
      while (corpus[local].image_id != s.image_id) ++local;
      const std::size_t global = members[local];
      s.point_id = assoc[global][s.point_index];
      s.category = category_of.at(static_cast<std::size_t>(s.point_id));
      keyed.emplace_back(global, std::move(s));
    }
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second.point_index < b.second.point_index;
  });
  set.samples.reserve(keyed.size());
  for (auto& [global, s] : keyed) set.samples.push_back(std::move(s));
  return set;
}

TrainingData make_training_data(std::span<const GroundTruthSample> samples, TimeEncoding encoding) {
  if (samples.empty()) throw EmptyDataset("no samples");
  const auto t = samples.front().y.size();
  TrainingData data;
  data.inputs.resize(input_dim_for(encoding_dim(encoding)), static_cast<Eigen::Index>(samples.size()));
  data.targets.resize(t, static_cast<Eigen::Index>(samples.size()));
  data.masks.resize(t, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& s = samples[n];
    if (s.y.size() != t || s.mask.size() != t) throw ShapeMismatch("samples differ in length");
    const auto c = static_cast<Eigen::Index>(n);
    data.inputs.col(c) = build_input(s.keypoint.x, s.keypoint.y, s.image_width, s.image_height,
                                     encode_time(s.wallclock, encoding), s.patch);
    data.targets.col(c) = s.y;
    data.masks.col(c) = s.mask;
  }
  return data;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::optional<Triangulation<double>> triangulate_members(const Dataset& dataset, const FeatureSet& features,
                                                         const std::vector<std::pair<std::size_t, std::size_t>>& m) {
  std::vector<Pose> poses;
  std::vector<Pixel> pixels;
  for (const auto& [img, p] : m) {
    poses.push_back(dataset.records[img].pose);
    pixels.emplace_back(features[img][p].keypoint.x, features[img][p].keypoint.y);
  }
  try {
    return triangulate_multiview(poses, pixels, dataset.records[m.front().first].intrinsics);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<Track> build_tracks(const Dataset& dataset, const FeatureSet& features, const PipelineParams& params) {
  const auto database = dataset.database_images();
  std::vector<DescriptorIndex> indices(database.size());
  std::vector<std::vector<Descriptor>> descriptors(database.size());
  std::vector<Observation> headers;
  std::vector<std::size_t> offset(database.size() + 1, 0);
  for (std::size_t d = 0; d < database.size(); ++d) {
    for (const auto& ip : features[database[d]]) descriptors[d].push_back(ip.descriptor);
    indices[d] = DescriptorIndex(descriptors[d]);
    headers.push_back(observation_header(dataset, database[d]));
    offset[d + 1] = offset[d] + descriptors[d].size();
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < database.size(); ++a)
    for (std::size_t b = a + 1; b < database.size(); ++b) pairs.emplace_back(a, b);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(pairs.size());
  parallel_for(pairs.size(), params.threads, [&](std::size_t n) {
    const auto [a, b] = pairs[n];
    if (indices[a].size() < 2 || indices[b].size() < 2) return;
    const auto ab = match_features(descriptors[a], indices[b], params.gt.ratio);
    const auto ba = match_features(descriptors[b], indices[a], params.gt.ratio);
    std::vector<std::int64_t> back(descriptors[b].size(), -1);
    for (const auto& c : ba) back[c.index_a] = static_cast<std::int64_t>(c.index_b);
    const auto& fa = features[database[a]];
    const auto& fb = features[database[b]];
    for (const auto& c : ab) {
      if (back[c.index_b] != static_cast<std::int64_t>(c.index_a)) continue;
      const Pixel pa(fa[c.index_a].keypoint.x, fa[c.index_a].keypoint.y);
      const Pixel pb(fb[c.index_b].keypoint.x, fb[c.index_b].keypoint.y);
      if (accept_match(headers[a], pa, headers[b], pb, MatchMode::Geometric, params.gt))
        edges[n].emplace_back(offset[a] + c.index_a, offset[b] + c.index_b);
    }
  });

  DisjointSets sets(offset.back());
  for (const auto& list : edges)
    for (const auto& [u, v] : list) sets.unite(u, v);

  std::map<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>> groups;
  for (std::size_t d = 0; d < database.size(); ++d)
    for (std::size_t p = 0; p < descriptors[d].size(); ++p) groups[sets.find(offset[d] + p)].emplace_back(database[d], p);

  std::vector<Track> tracks;
  for (auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    // An image contributing two keypoints means the group merged distinct
    // points; such images are dropped from the track.
    std::map<std::size_t, int> per_image;
    for (const auto& m : members) ++per_image[m.first];
    std::erase_if(members, [&](const auto& m) { return per_image[m.first] > 1; });
    if (members.size() < 2) continue;
    auto tri = triangulate_members(dataset, features, members);
    if (!tri) continue;
    if (tri->max_reprojection_error >= params.map_reprojection_px) {
      std::erase_if(members, [&](const auto& m) {
        const Keypoint& kp = features[m.first][m.second].keypoint;
        try {
          return (project(dataset.records[m.first].pose, dataset.records[m.first].intrinsics, tri->point) -
                  Pixel(kp.x, kp.y)).norm() >= params.map_reprojection_px;
        } catch (const Error&) {
          return true;
        }
      });
      if (members.size() < 2) continue;
      tri = triangulate_members(dataset, features, members);
      if (!tri || tri->max_reprojection_error >= params.map_reprojection_px) continue;
    }
    tracks.push_back({members, tri->point});
  }
  std::sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) { return a.members < b.members; });
  return tracks;
}

std::vector<MapPoint> build_map(const Dataset& dataset, const FeatureSet& features, std::span<const Track> tracks,
                                const RepeatabilityPredictor* model) {
  const auto database = dataset.database_images();
  std::vector<std::int64_t> position(dataset.records.size(), -1);
  for (std::size_t d = 0; d < database.size(); ++d) position[database[d]] = static_cast<std::int64_t>(d);

  std::vector<MapPoint> map;
  map.reserve(tracks.size());
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    std::vector<PointObservation> obs;
    std::vector<Eigen::VectorXd> predictions;
    for (const auto& [img, p] : tracks[t].members) {
      if (position[img] < 0) throw InvalidArgument("track member is not a database image");
      const ImageRecord& r = dataset.records[img];
      const InterestPoint& ip = features[img][p];
      PointObservation o;
      o.image = static_cast<std::size_t>(position[img]);
      o.keypoint = ip.keypoint;
      o.wallclock = r.wallclock;
      o.image_width = r.width;
      o.image_height = r.height;
      o.descriptor = ip.descriptor;
      predictions.push_back(model ? predict_repeatability(*model, ip.keypoint, r.width, r.height, r.wallclock, ip.patch)
                                  : Eigen::VectorXd::Zero(dataset.grid.size()));
      obs.push_back(std::move(o));
    }
    map.push_back(aggregate_point(t, tracks[t].position, obs, predictions));
  }
  return map;
}

DatabaseIndex make_database_index(const Dataset& dataset, const FeatureSet& features, std::span<const MapPoint> map) {
  std::vector<std::vector<Descriptor>> local;
  for (std::size_t i : dataset.database_images()) {
    local.emplace_back();
    for (const auto& ip : features[i]) local.back().push_back(ip.descriptor);
  }
  return build_database_index(local, map);
}

std::vector<QueryCase> make_queries(const Dataset& dataset, const FeatureSet& features) {
  std::vector<QueryCase> out;
  for (std::size_t i : dataset.query_images()) {
    const ImageRecord& r = dataset.records[i];
    out.push_back({r.id, features[i], r.intrinsics, r.pose, dataset.grid.index(r.wallclock)});
  }
  return out;
}

namespace {

std::vector<CategoryCurve> curves(std::span<const GroundTruthSample> samples, const Eigen::MatrixXd& predictions,
                                  bool aligned) {
  if (predictions.cols() != static_cast<Eigen::Index>(samples.size())) throw ShapeMismatch("one prediction per sample");
  if (samples.empty()) return {};
  const Eigen::Index t = samples.front().y.size();
  struct Acc {
    std::size_t count = 0;
    Eigen::VectorXd truth, predicted, weight;
  };
  std::map<int, Acc> acc;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& s = samples[n];
    std::vector<int> keys = {-1};
    if (s.category >= 0) keys.push_back(s.category);
    for (int key : keys) {
      Acc& a = acc[key];
      if (a.count == 0) {
        a.truth = a.predicted = a.weight = Eigen::VectorXd::Zero(t);
      }
      ++a.count;
      for (Eigen::Index j = 0; j < t; ++j) {
        const Eigen::Index dst = aligned ? (j - (s.timestamp_index - 1) + t) % t : j;
        a.truth(dst) += s.mask(j) * s.y(j);
        a.predicted(dst) += s.mask(j) * predictions(j, static_cast<Eigen::Index>(n));
        a.weight(dst) += s.mask(j);
      }
    }
  }
  std::vector<CategoryCurve> out;
  for (auto& [key, a] : acc) {
    CategoryCurve c;
    c.category = key;
    c.count = a.count;
    const Eigen::VectorXd w = a.weight.cwiseMax(1.0);
    c.truth = a.truth.cwiseQuotient(w);
    c.predicted = a.predicted.cwiseQuotient(w);
    c.mae = (c.truth - c.predicted).cwiseAbs().mean();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<CategoryCurve> category_curves(std::span<const GroundTruthSample> samples,
                                           const Eigen::MatrixXd& predictions) {
  return curves(samples, predictions, false);
}

std::vector<CategoryCurve> aligned_category_curves(std::span<const GroundTruthSample> samples,
                                                   const Eigen::MatrixXd& predictions) {
  return curves(samples, predictions, true);
}

Eigen::VectorXd masked_mean_target(const TrainingData& data) {
  const Eigen::VectorXd weight = data.masks.rowwise().sum().cwiseMax(1.0);
  return data.targets.cwiseProduct(data.masks).rowwise().sum().cwiseQuotient(weight);
}

}  // namespace trep
