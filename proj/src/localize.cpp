#include "trep/localize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "trep/errors.hpp"
#include "trep/parallel.hpp"

namespace trep {

Eigen::VectorXd global_descriptor(std::span<const Descriptor> local) {
  if (local.empty()) throw NoDescriptors("global descriptor needs at least one local descriptor");
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(kDescriptorDim);
  for (const auto& d : local) acc += d.array().max(0.0).pow(kGlobalGemP);
  Eigen::VectorXd g = (acc / static_cast<double>(local.size())).pow(1.0 / kGlobalGemP).matrix();
  const double n = g.norm();
  if (n > 0.0) g /= n;
  return g;
}

DatabaseIndex::DatabaseIndex(std::vector<Eigen::VectorXd> global, std::vector<std::vector<std::size_t>> visibility)
    : visibility_(std::move(visibility)) {
  if (global.size() != visibility_.size()) throw ShapeMismatch("one visibility list per database image required");
  Eigen::MatrixXd m(kDescriptorDim, static_cast<Eigen::Index>(global.size()));
  for (std::size_t i = 0; i < global.size(); ++i) {
    if (global[i].size() != kDescriptorDim) throw ShapeMismatch("global descriptors must have 128 entries");
    m.col(static_cast<Eigen::Index>(i)) = global[i];
  }
  tree_ = KdTree(std::move(m));
}

DatabaseIndex build_database_index(const std::vector<std::vector<Descriptor>>& image_descriptors,
                                   std::span<const MapPoint> map) {
  std::vector<Eigen::VectorXd> global;
  global.reserve(image_descriptors.size());
  for (const auto& d : image_descriptors)
    global.push_back(d.empty() ? Eigen::VectorXd::Zero(kDescriptorDim) : global_descriptor(d));
  std::vector<std::vector<std::size_t>> visibility(image_descriptors.size());
  for (std::size_t p = 0; p < map.size(); ++p)
    for (std::size_t img : map[p].observing_images) visibility.at(img).push_back(p);
  return DatabaseIndex(std::move(global), std::move(visibility));
}

std::vector<std::size_t> retrieve_k_nearest(const Eigen::VectorXd& query, const DatabaseIndex& index, std::size_t k) {
  if (k > index.size()) throw KTooLarge("K exceeds the database size");
  std::vector<std::size_t> ids;
  ids.reserve(k);
  for (const auto& n : index.tree().knn(query, k)) ids.push_back(n.index);
  return ids;
}

std::string to_string(LocalizationStatus s) {
  switch (s) {
    case LocalizationStatus::Ok: return "OK";
    case LocalizationStatus::RetrievalEmpty: return "RETRIEVAL_EMPTY";
    case LocalizationStatus::MatchFail: return "MATCH_FAIL";
    case LocalizationStatus::PoseFail: return "POSE_FAIL";
  }
  return "POSE_FAIL";
}

LocalizationResult localize(std::span<const InterestPoint> query, const Camera& intrinsics,
                            std::span<const MapPoint> map, const SummaryMap& summary, const DatabaseIndex& index,
                            const LocalizeParams& params) {
  LocalizationResult result;
  if (query.empty() || index.size() == 0) return result;
  std::vector<Descriptor> local;
  local.reserve(query.size());
  for (const auto& ip : query) local.push_back(ip.descriptor);
  result.retrieved = retrieve_k_nearest(global_descriptor(local), index, std::min(params.retrieve_k, index.size()));

  std::vector<std::size_t> candidates;
  for (std::size_t img : result.retrieved)
    for (std::size_t p : index.visible_points(img))
      if (std::binary_search(summary.retained.begin(), summary.retained.end(), p)) candidates.push_back(p);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) return result;

  result.status = LocalizationStatus::MatchFail;
  if (candidates.size() < 2) return result;
  std::vector<Descriptor> cand_desc;
  cand_desc.reserve(candidates.size());
  for (std::size_t p : candidates) cand_desc.push_back(map[p].mean_descriptor);
  const DescriptorIndex cand_index(cand_desc);

  std::vector<Correspondence2D3D> corr;
  for (const auto& ip : query) {
    const NearestTwo nn = nearest_two(ip.descriptor, cand_index);
    if (!ratio_test(nn.best.distance, nn.second.distance, params.ratio)) continue;
    corr.push_back({Pixel(ip.keypoint.x, ip.keypoint.y), map[candidates[nn.best.index]].position});
  }
  result.matches = corr.size();
  if (corr.size() < static_cast<std::size_t>(kPnpMinimalSample)) return result;

  result.status = LocalizationStatus::PoseFail;
  try {
    const PnpResult pnp = pnp_ransac(corr, intrinsics, params.ransac);
    result.pose = pnp.pose;
    result.inliers = pnp.inliers.size();
    result.status = LocalizationStatus::Ok;
  } catch (const Error&) {
  }
  return result;
}

LocalizationResult localize(const Image& image, const Camera& intrinsics, std::span<const MapPoint> map,
                            const SummaryMap& summary, const DatabaseIndex& index, const LocalizeParams& params) {
  const std::vector<InterestPoint> query = extract_interest_points(image);
  return localize(query, intrinsics, map, summary, index, params);
}

std::vector<SuccessThreshold> default_thresholds() { return {{"5m_10deg", 5.0, 10.0}, {"0.5m_2deg", 0.5, 2.0}}; }

std::vector<BenchmarkRow> benchmark(std::span<const QueryCase> queries, std::span<const MapPoint> map,
                                    std::size_t database_images, const DatabaseIndex& index,
                                    const BenchmarkConfig& config) {
  const MapPartition partition = partition_map(map, config.cell_size);
  SummaryMap full;
  full.retained.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) full.retained[i] = i;

  std::vector<BenchmarkRow> rows;
  for (SummaryMethod method : config.methods) {
    for (double ratio : config.prune_ratios) {
      std::map<int, SummaryMap> by_time;
      std::vector<const SummaryMap*> per_query(queries.size(), nullptr);
      if (method == SummaryMethod::Repeatability) {
        for (const auto& q : queries)
          if (!by_time.count(q.t_index)) by_time.emplace(q.t_index, summarize(map, partition, q.t_index, ratio));
        for (std::size_t i = 0; i < queries.size(); ++i) per_query[i] = &by_time.at(queries[i].t_index);
      } else {
        by_time.emplace(0, method == SummaryMethod::KCover ? kcover_summarize_ratio(map, database_images, ratio)
                                                           : full);
        for (auto& p : per_query) p = &by_time.at(0);
      }
      double retained = 0.0;
      for (const auto* s : per_query) retained += static_cast<double>(s->retained.size());

      std::vector<LocalizationResult> results(queries.size());
      parallel_for(queries.size(), config.threads, [&](std::size_t i) {
        LocalizeParams lp = config.localize;
        lp.ransac.seed = config.localize.ransac.seed + i;
        results[i] = localize(queries[i].features, queries[i].intrinsics, map, *per_query[i], index, lp);
      });

      for (const auto& th : config.thresholds) {
        BenchmarkRow row;
        row.method = method;
        row.prune_ratio = ratio;
        row.threshold = th;
        row.n_queries = queries.size();
        row.map_points = queries.empty() ? 0 : static_cast<std::size_t>(std::lround(retained / queries.size()));
        std::size_t success = 0, localized = 0;
        double pos = 0.0, ang = 0.0;
        for (std::size_t i = 0; i < queries.size(); ++i) {
          if (results[i].status != LocalizationStatus::Ok) continue;
          const PoseError e = pose_error(*results[i].pose, queries[i].truth);
          ++localized;
          pos += e.position_m;
          ang += e.angle_deg;
          if (e.position_m < th.position_m && e.angle_deg < th.angle_deg) ++success;
        }
        row.accuracy = queries.empty() ? 0.0 : static_cast<double>(success) / static_cast<double>(queries.size());
        row.mean_position_error = localized ? pos / localized : std::numeric_limits<double>::quiet_NaN();
        row.mean_angle_error = localized ? ang / localized : std::numeric_limits<double>::quiet_NaN();
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_benchmark_csv(std::span<const BenchmarkRow> rows, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os << "method,prune_ratio,threshold,accuracy,mean_position_error,mean_angle_error,n_queries,retained_points\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%s,%.6f,%.6f,%.6f,%zu,%zu\n", to_string(r.method).c_str(), r.prune_ratio,
                  r.threshold.name.c_str(), r.accuracy, r.mean_position_error, r.mean_angle_error, r.n_queries,
                  r.map_points);
    os << buf;
  }
  if (!os) throw Error("failed writing " + path.string());
}

}  // namespace trep
