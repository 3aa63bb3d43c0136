// Acceptance checks: one PASS/FAIL line per criterion.
//
//   trep_acceptance                 run every criterion
//   trep_acceptance --criterion N   run criterion N only

#include <CLI11.hpp>

#include <Eigen/Geometry>
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gradcheck.hpp"
#include "trep/dataset.hpp"
#include "trep/pipeline.hpp"
#include "trep/random.hpp"

using namespace trep;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

PipelineParams pipeline_params() {
  PipelineParams pp;
  pp.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return pp;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome gradient_check() {
  SplitMix64 rng(2024);
  double worst = 0.0;
  Eigen::Index checked = 0;
  for (int pair = 0; pair < 20; ++pair) {
    const int outputs = 2 + static_cast<int>(rng.below(11));
    const TimeEncoding enc = pair % 2 ? TimeEncoding::Full : TimeEncoding::DayOfYear;
    const int in_dim = input_dim_for(encoding_dim(enc));
    Network net = Network::initialize(in_dim, outputs, rng.next());
    for (int l = 0; l < kLayerCount; ++l)
      for (Eigen::Index i = 0; i < net.layer(l).bias.size(); ++i) net.layer(l).bias(i) = rng.uniform(-0.1, 0.1);
    net.set_p(rng.uniform(1.5, 8.0));
    Eigen::MatrixXd input(in_dim, 1), target(outputs, 1), mask(outputs, 1);
    for (Eigen::Index i = 0; i < in_dim; ++i) input(i) = i < 2 + encoding_dim(enc) ? rng.uniform() : rng.normal();
    for (Eigen::Index j = 0; j < outputs; ++j) {
      target(j) = rng.uniform();
      mask(j) = rng.bernoulli(0.85) ? 1.0 : 0.0;
    }
    const auto r = testing::check_gradient(net, input, target, mask, 1e-5);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }
  return {worst < 1e-4, format("20 pairs, %ld parameters checked, worst relative error %.2e (tolerance 1e-4)",
                               static_cast<long>(checked), worst)};
}

// ---------------------------------------------------------------------------
// 2. Pooling limits

Outcome pooling_limits() {
  SplitMix64 rng(7);
  double worst_mean = 0.0, worst_max = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::ArrayXXd a(1, 1), b(1, 1), c(1, 1);
    const double scale = std::pow(10.0, rng.uniform(-2, 2));
    a << scale * rng.uniform();
    b << scale * rng.uniform();
    c << scale * rng.uniform();
    const double mean = (a(0, 0) + b(0, 0) + c(0, 0)) / 3.0;
    const double mx = std::max({a(0, 0), b(0, 0), c(0, 0)});
    worst_mean = std::max(worst_mean, std::abs(gem_pool(a, b, c, 1.0)(0, 0) - mean));
    worst_max = std::max(worst_max, std::abs(gem_pool(a, b, c, 64.0)(0, 0) - mx) / mx);
  }
  const bool pass = worst_mean <= 3 * kGemEpsilon && worst_max <= 0.05;
  return {pass, format("1000 triples: |p=1 - mean| <= %.2e (bound %.0e), p=64 within %.2f%% of max (bound 5%%)",
                       worst_mean, 3 * kGemEpsilon, 100.0 * worst_max)};
}

// ---------------------------------------------------------------------------
// 3. Geometry oracles

Eigen::Matrix3d random_rotation(SplitMix64& rng, double max_deg) {
  const Eigen::Vector3d axis = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
  return Eigen::AngleAxisd(rng.uniform(-max_deg, max_deg) * std::numbers::pi / 180.0, axis).toRotationMatrix();
}

Outcome geometry_oracles() {
  const Camera cam{500.0, 500.0, 320.0, 240.0};
  SplitMix64 rng(99);
  double worst_tri = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose a = Pose::from_center(random_rotation(rng, 10), {rng.uniform(-2, 2), rng.uniform(-1, 1), 0.0});
    const Pose b = Pose::from_center(random_rotation(rng, 10), {rng.uniform(-2, 2), rng.uniform(-1, 1), 0.0});
    if ((a.center() - b.center()).norm() < 0.3) continue;
    const Point3 x(rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(5, 15));
    const auto t = triangulate(a, b, project(a, cam, x), project(b, cam, x), cam);
    worst_tri = std::max(worst_tri, (t.point - x).norm());
  }

  double worst_pos = 0.0, worst_ang = 0.0, worst_recall = 1.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SplitMix64 r(seed);
    const Pose truth = Pose::from_center(random_rotation(r, 15), {r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 0)});
    std::vector<Correspondence2D3D> corr;
    while (corr.size() < 30) {
      const Point3 x(r.uniform(-4, 4), r.uniform(-3, 3), r.uniform(6, 14));
      const Pixel p = project(truth, cam, x);
      if (p.x() < 0 || p.y() < 0 || p.x() > 640 || p.y() > 480) continue;
      corr.push_back({p + Pixel(r.normal(0, 0.2), r.normal(0, 0.2)), x});
    }
    for (int i = 0; i < 30; ++i)
      corr.push_back({Pixel(r.uniform(0, 640), r.uniform(0, 480)),
                      Point3(r.uniform(-4, 4), r.uniform(-3, 3), r.uniform(6, 14))});
    const PnpResult res = pnp_ransac(corr, cam, {1000, 2.0, seed});
    const PoseError e = pose_error(res.pose, truth);
    const auto true_inliers = std::count_if(res.inliers.begin(), res.inliers.end(), [](std::size_t i) { return i < 30; });
    worst_pos = std::max(worst_pos, e.position_m);
    worst_ang = std::max(worst_ang, e.angle_deg);
    worst_recall = std::min(worst_recall, static_cast<double>(true_inliers) / 30.0);
  }
  const bool pass = worst_tri < 1e-6 && worst_pos < 0.05 && worst_ang < 0.5 && worst_recall >= 0.9;
  return {pass, format("triangulation error %.1e m; PnP over 20 seeds: worst %.4f m, %.4f deg, recall %.2f",
                       worst_tri, worst_pos, worst_ang, worst_recall)};
}

// ---------------------------------------------------------------------------
// 4. Ground-truth fidelity

Outcome groundtruth_fidelity() {
  const PipelineParams pp = pipeline_params();
  const Dataset ds = make_synthetic_dataset(WorldSpec::default_spec(1), pp.threads);
  const FeatureSet features = extract_dataset_features(ds, pp);
  const TrainingSet set = build_dataset_ground_truth(ds, features, pp);

  bool self_count = true, in_range = true;
  for (const auto& s : set.samples) {
    in_range = in_range && is_valid_repeatability(s.y);
    self_count = self_count && s.y(s.timestamp_index - 1) * 3.0 >= 1.0 - 1e-12;
  }
  const int t = ds.grid.size();
  std::string detail = format("%zu samples;", set.samples.size());
  bool fidelity = true;
  for (int c = 0; c < kCategoryCount; ++c) {
    Eigen::VectorXd est = Eigen::VectorXd::Zero(t), planted = Eigen::VectorXd::Zero(t);
    std::size_t n = 0;
    for (const auto& s : set.samples) {
      if (s.category != c) continue;
      est += s.y;
      planted += ds.points[static_cast<std::size_t>(s.point_id)].profile;
      ++n;
    }
    const double mae = n ? (est - planted).cwiseAbs().mean() / static_cast<double>(n) : 1.0;
    fidelity = fidelity && mae < 0.1;
    detail += format(" %s MAE %.3f", to_string(static_cast<Category>(c)).c_str(), mae);
  }
  detail += format("; self-count %s, scores in [0,1] %s", self_count ? "exact" : "VIOLATED", in_range ? "yes" : "NO");
  return {fidelity && self_count && in_range, detail};
}

// ---------------------------------------------------------------------------
// 5. Learning signal

struct TrainedModel {
  RepeatabilityPredictor model;
  TrainingData train;
};

std::optional<TrainedModel>& model_cache() {
  static std::optional<TrainedModel> cache;
  return cache;
}

std::vector<GroundTruthSample> seed_samples(std::uint64_t seed) {
  const PipelineParams pp = pipeline_params();
  const Dataset ds = make_synthetic_dataset(WorldSpec::default_spec(seed), pp.threads);
  const FeatureSet features = extract_dataset_features(ds, pp);
  return build_dataset_ground_truth(ds, features, pp).samples;
}

// Predictor trained on synthworld seeds 1-3.
const TrainedModel& trained_model() {
  auto& cache = model_cache();
  if (cache) return *cache;
  std::vector<GroundTruthSample> samples;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (auto& s : seed_samples(seed)) samples.push_back(std::move(s));
  const TimeGrid grid = WorldSpec::cmu_grid();
  const TimeEncoding enc = grid.natural_encoding();
  TrainingData data = make_training_data(samples, enc);
  TrainingConfig cfg;
  cfg.seed = 1;
  const TrainResult r = train(Network::initialize(static_cast<int>(data.inputs.rows()), grid.size(), 1), data, cfg);
  cache = TrainedModel{{r.network, grid, enc}, std::move(data)};
  return *cache;
}

double mean_over(const Eigen::VectorXd& v, int first, int last) {  // 1-based, inclusive
  return v.segment(first - 1, last - first + 1).mean();
}

Outcome learning_signal() {
  const TrainedModel& tm = trained_model();
  const auto test_samples = seed_samples(4);
  const TrainingData test = make_training_data(test_samples, tm.model.encoding);
  const Eigen::MatrixXd pred = tm.model.network.predict(test.inputs);
  const Eigen::VectorXd mean = masked_mean_target(tm.train);
  const double model_mse = mse_loss<double>(pred, test.targets, test.masks);
  const double base_mse = mse_loss<double>(mean.replicate(1, test.size()), test.targets, test.masks);
  const double ratio = model_mse / base_mse;

  const auto curves = category_curves(test_samples, pred);
  const auto aligned = aligned_category_curves(test_samples, pred);
  const auto find = [](const std::vector<CategoryCurve>& cs, Category c) -> const CategoryCurve& {
    for (const auto& cc : cs)
      if (cc.category == static_cast<int>(c)) return cc;
    throw Error("category missing from the test set");
  };
  const ProfileParams pp;
  const Eigen::VectorXd& building = find(curves, Category::Building).predicted;
  const Eigen::VectorXd& tree = find(curves, Category::Tree).predicted;
  const Eigen::VectorXd& dynamic = find(aligned, Category::Dynamic).predicted;
  const double winter_dip = mean_over(building, 1, pp.winter_begin - 1) - mean_over(building, pp.winter_begin, 12);
  const double tree_drop = mean_over(tree, 1, pp.tree_cut) - mean_over(tree, pp.tree_cut + 1, 12);
  const double peak = dynamic(0) - mean_over(dynamic, 2, 12);
  const bool pass = ratio <= 0.7 && winter_dip > 0.0 && tree_drop > 0.0 && peak > 0.0;
  return {pass, format("test MSE %.4f vs global-mean %.4f (ratio %.3f, bound 0.7); BUILDING winter dip %+.3f, "
                       "TREE post-cut drop %+.3f, DYNAMIC own-slot peak %+.3f",
                       model_mse, base_mse, ratio, winter_dip, tree_drop, peak)};
}

// ---------------------------------------------------------------------------
// 6. Map-summarization benefit

Outcome summarization_benefit() {
  const TrainedModel& tm = trained_model();
  const PipelineParams pp = pipeline_params();
  const std::vector<double> ratios = {0.0, 0.5, 0.7, 0.9};
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(ratios.size()));
  bool exact_at_zero = true;
  std::size_t queries_per_seed = 0;
  for (std::uint64_t seed = 4; seed <= 6; ++seed) {
    const Dataset ds = make_synthetic_dataset(WorldSpec::default_spec(seed), pp.threads);
    const FeatureSet features = extract_dataset_features(ds, pp);
    const auto tracks = build_tracks(ds, features, pp);
    const auto map = build_map(ds, features, tracks, &tm.model);
    const DatabaseIndex index = make_database_index(ds, features, map);
    const auto queries = make_queries(ds, features);
    queries_per_seed = queries.size();
    BenchmarkConfig cfg;
    cfg.prune_ratios = ratios;
    cfg.thresholds = {{"0.5m_2deg", 0.5, 2.0}};
    cfg.threads = pp.threads;
    const auto rows = benchmark(queries, map, ds.database_count(), index, cfg);
    for (const auto& r : rows) {
      const Eigen::Index m = r.method == SummaryMethod::Repeatability ? 0 : 1;
      const auto k = std::find(ratios.begin(), ratios.end(), r.prune_ratio) - ratios.begin();
      acc(m, k) += r.accuracy / 3.0;
    }
    exact_at_zero = exact_at_zero && rows[0].accuracy == rows[ratios.size()].accuracy &&
                    rows[0].mean_position_error == rows[ratios.size()].mean_position_error;
  }
  bool pass = exact_at_zero && queries_per_seed >= 60;
  std::string detail = format("%zu queries/seed, 3 seeds, accuracy at 0.5m_2deg rp/kcover:", queries_per_seed);
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const double rp = acc(0, static_cast<Eigen::Index>(k)), kc = acc(1, static_cast<Eigen::Index>(k));
    detail += format(" r=%.1f %.3f/%.3f", ratios[k], rp, kc);
    if (ratios[k] >= 0.5) pass = pass && rp >= kc;
    if (ratios[k] == 0.9) pass = pass && rp > kc;
  }
  detail += exact_at_zero ? "; identical at r=0" : "; DIFFER at r=0";
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 7. Determinism and serialization

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Synthesize, label, train and benchmark into `dir`; returns the files written.
std::vector<fs::path> full_run(const fs::path& dir, int threads) {
  fs::remove_all(dir);
  WorldSpec spec = WorldSpec::default_spec(17);
  spec.counts = {10, 10, 10, 10};
  spec.cycles = 2;
  spec.query_cycles = 1;
  PipelineParams pp;
  pp.threads = threads;
  save_dataset(make_synthetic_dataset(spec, threads), dir / "dataset");
  const Dataset ds = load_dataset(dir / "dataset");
  const FeatureSet features = extract_dataset_features(ds, pp);
  const TrainingSet set = build_dataset_ground_truth(ds, features, pp);
  save_training_set(set, dir / "train.rts");
  const TrainingData data = make_training_data(set.samples, ds.grid.natural_encoding());
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 5;
  const TrainResult r =
      train(Network::initialize(static_cast<int>(data.inputs.rows()), ds.grid.size(), 5), data, cfg);
  save_model({r.network, ds.grid, ds.grid.natural_encoding()}, dir / "model.rpm");
  const RepeatabilityPredictor model = load_model(dir / "model.rpm");
  const auto map = build_map(ds, features, build_tracks(ds, features, pp), &model);
  BenchmarkConfig bc;
  bc.prune_ratios = {0.0, 0.5, 0.9};
  bc.threads = threads;
  const auto rows =
      benchmark(make_queries(ds, features), map, ds.database_count(), make_database_index(ds, features, map), bc);
  write_benchmark_csv(rows, dir / "benchmark.csv");

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "trep_acceptance_determinism";
  const auto files_a = full_run(root / "a", 1);
  const auto files_b = full_run(root / "b", 2);
  std::size_t differing = 0;
  for (const auto& f : files_a)
    if (slurp(root / "a" / f) != slurp(root / "b" / f)) ++differing;

  const RepeatabilityPredictor model = load_model(root / "a" / "model.rpm");
  save_model(model, root / "resaved.rpm");
  const bool model_round_trip = slurp(root / "a" / "model.rpm") == slurp(root / "resaved.rpm");
  const RepeatabilityPredictor again = load_model(root / "resaved.rpm");
  const bool weights_equal = again.network.flatten() == model.network.flatten();
  fs::remove_all(root);

  const bool pass = files_a == files_b && differing == 0 && model_round_trip && weights_equal;
  return {pass, format("%zu files (dataset, training set, model, benchmark CSV) from two runs with 1 and 2 threads, "
                       "%zu differ; model save/load %s",
                       files_a.size(), differing, model_round_trip && weights_equal ? "bit-exact" : "NOT bit-exact")};
}

// ---------------------------------------------------------------------------
// 8. K-cover contract

// Size of the smallest subset in which every image sees min(K, its visibility) points.
std::size_t optimal_cover_size(const std::vector<std::vector<std::size_t>>& vis, std::size_t images, int k) {
  std::vector<int> need(images, 0);
  for (const auto& v : vis)
    for (std::size_t img : v) ++need[img];
  for (int& n : need) n = std::min(n, k);
  const std::size_t n = vis.size();
  std::size_t best = n;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    if (size >= best) continue;
    std::vector<int> have(images, 0);
    for (std::size_t p = 0; p < n; ++p)
      if (mask & (1u << p))
        for (std::size_t img : vis[p]) ++have[img];
    bool ok = true;
    for (std::size_t img = 0; img < images && ok; ++img) ok = have[img] >= need[img];
    if (ok) best = size;
  }
  return best;
}

Outcome kcover_contract() {
  SplitMix64 rng(8);
  constexpr int kInstances = 500;
  int contract_violations = 0, suboptimal = 0, excess = 0;
  std::string smallest_gap;
  std::size_t smallest_points = 99;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::size_t points = 3 + rng.below(10);
    const std::size_t images = 2 + rng.below(7);
    const int k = 1 + static_cast<int>(rng.below(3));
    const double density = rng.uniform(0.2, 0.7);
    std::vector<std::vector<std::size_t>> vis(points);
    std::vector<std::size_t> ids(points);
    for (std::size_t p = 0; p < points; ++p) {
      ids[p] = p;
      for (std::size_t img = 0; img < images; ++img)
        if (rng.bernoulli(density)) vis[p].push_back(img);
    }
    const MulticoverResult greedy = greedy_multicover(vis, ids, images, k);
    std::vector<int> have(images, 0), avail(images, 0);
    for (std::size_t p : greedy.order)
      for (std::size_t img : vis[p]) ++have[img];
    for (const auto& v : vis)
      for (std::size_t img : v) ++avail[img];
    for (std::size_t img = 0; img < images; ++img)
      if (avail[img] >= k && have[img] < k) ++contract_violations;
    const std::size_t opt = optimal_cover_size(vis, images, k);
    if (greedy.order.size() != opt) {
      ++suboptimal;
      excess += static_cast<int>(greedy.order.size() - opt);
      if (points < smallest_points) {
        smallest_points = points;
        smallest_gap = format("; smallest gap: %zu points, %zu images, K=%d, greedy %zu vs optimum %zu", points,
                              images, k, greedy.order.size(), opt);
      }
    }
  }
  const bool pass = contract_violations == 0 && suboptimal == 0;
  return {pass, format("%d random instances (<= 12 points): %d coverage violations; greedy size equals the "
                       "exhaustive optimum on %d, exceeds it on %d (by %d points in total)",
                       kInstances, contract_violations, kInstances - suboptimal, suboptimal, excess) +
                    smallest_gap};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_check},
      {2, "pooling limits", pooling_limits},
      {3, "geometry oracles", geometry_oracles},
      {4, "ground-truth fidelity", groundtruth_fidelity},
      {5, "learning signal", learning_signal},
      {6, "map-summarization benefit", summarization_benefit},
      {7, "determinism and serialization", determinism},
      {8, "K-cover contract", kcover_contract},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (only && c.number != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.number, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
