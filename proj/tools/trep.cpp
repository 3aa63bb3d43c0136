#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "trep/dataset.hpp"
#include "trep/errors.hpp"
#include "trep/localize.hpp"
#include "trep/mapsum.hpp"
#include "trep/pipeline.hpp"
#include "trep/plot.hpp"
#include "trep/predictor.hpp"

namespace fs = std::filesystem;
using namespace trep;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw InvalidArgument(std::string(what) + " not found: " + path);
}

void require_dataset(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / "manifest.json")) throw InvalidArgument("not a dataset directory: " + dir);
}

void prepare_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string category_name(int c) { return c < 0 ? "ALL" : to_string(static_cast<Category>(c)); }

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  Common common;
  int cycles = 3;
  int query_cycles = 2;
  int per_category = 40;
  int images_per_slot = 1;
};

int run_synth(const SynthArgs& a) {
  WorldSpec spec = WorldSpec::default_spec(a.common.seed);
  spec.cycles = a.cycles;
  spec.query_cycles = a.query_cycles;
  spec.images_per_slot = a.images_per_slot;
  spec.counts = {a.per_category, a.per_category, a.per_category, a.per_category};
  const Dataset ds = make_synthetic_dataset(spec, a.common.threads);
  save_dataset(ds, a.common.out);
  std::cout << "dataset " << a.common.out << ": " << ds.database_count() << " database images, "
            << ds.query_images().size() << " query images, " << ds.points.size() << " points, T=" << ds.grid.size()
            << ", M=" << ds.cycles << ", viewpoints=" << ds.viewpoint_count() << '\n';
  return 0;
}

// --- groundtruth -------------------------------------------------------------

struct GroundTruthArgs {
  Common common;
  std::string dataset;
  std::string mode = "geometric";
  double ratio = kDefaultRatio;
};

int run_groundtruth(const GroundTruthArgs& a) {
  require_dataset(a.dataset);
  prepare_parent(a.common.out);
  PipelineParams pp;
  pp.mode = match_mode_from_string(a.mode);
  pp.gt.ratio = a.ratio;
  pp.threads = a.common.threads;
  const Dataset ds = load_dataset(a.dataset);
  const FeatureSet features = extract_dataset_features(ds, pp);
  const TrainingSet set = build_dataset_ground_truth(ds, features, pp);
  if (set.samples.empty()) throw EmptyDataset("no interest points could be labelled");
  save_training_set(set, a.common.out);
  std::cout << "samples " << set.samples.size() << " (" << to_string(set.mode) << ")\n";
  for (std::size_t c = 0; c < set.layouts.size(); ++c) {
    std::cout << "corpus " << c << " denominators:";
    for (int j = 1; j <= set.layouts[c].timestamps; ++j) std::cout << ' ' << set.layouts[c].slot_total(j);
    std::cout << '\n';
  }
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::vector<std::string> trainsets;
  std::string encoding;
  std::string loss_csv;
  TrainingConfig config;
};

int run_train(TrainArgs a) {
  for (const auto& t : a.trainsets) require_file(t, "training set");
  prepare_parent(a.common.out);
  std::vector<GroundTruthSample> samples;
  TimeGrid grid = WorldSpec::cmu_grid();
  for (std::size_t i = 0; i < a.trainsets.size(); ++i) {
    TrainingSet set = load_training_set(a.trainsets[i]);
    if (i == 0) grid = set.grid;
    else if (!(set.grid == grid)) throw InvalidArgument("training sets use different time grids");
    for (auto& s : set.samples) samples.push_back(std::move(s));
  }
  if (samples.empty()) throw EmptyDataset("training sets contain no samples");
  const TimeEncoding encoding = a.encoding.empty() ? grid.natural_encoding() : time_encoding_from_string(a.encoding);
  const TrainingData data = make_training_data(samples, encoding);
  samples.clear();
  a.config.seed = a.common.seed;
  const Network init = Network::initialize(static_cast<int>(data.inputs.rows()), grid.size(), a.common.seed);
  const TrainResult result = train(init, data, a.config);
  save_model({result.network, grid, encoding}, a.common.out);

  const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.common.out + ".loss.csv") : fs::path(a.loss_csv);
  prepare_parent(loss_path);
  std::ofstream os(loss_path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + loss_path.string());
  os << "epoch,loss\n0," << fixed(result.initial_loss, 9) << '\n';
  for (std::size_t e = 0; e < result.loss_history.size(); ++e)
    os << e + 1 << ',' << fixed(result.loss_history[e], 9) << '\n';

  const Eigen::VectorXd mean = masked_mean_target(data);
  const double baseline = mse_loss<double>(mean.replicate(1, data.targets.cols()), data.targets, data.masks);
  const double final_loss = result.loss_history.empty() ? result.initial_loss : result.loss_history.back();
  std::cout << "samples " << data.size() << ", epochs " << a.config.epochs << ", loss " << fixed(result.initial_loss)
            << " -> " << fixed(final_loss) << " (global-mean baseline " << fixed(baseline) << "), p "
            << fixed(result.network.p(), 3) << '\n';
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model;
  std::string testset;
};

int run_eval(const EvalArgs& a) {
  require_file(a.model, "model");
  require_file(a.testset, "test set");
  fs::create_directories(a.common.out);
  const RepeatabilityPredictor model = load_model(a.model);
  const TrainingSet set = load_training_set(a.testset);
  if (!(set.grid == model.grid)) throw InvalidArgument("model and test set use different time grids");
  if (set.samples.empty()) throw EmptyDataset("test set contains no samples");
  const TrainingData data = make_training_data(set.samples, model.encoding);
  const Eigen::MatrixXd predictions = model.network.predict(data.inputs);
  const auto curves = category_curves(set.samples, predictions);

  const fs::path dir(a.common.out);
  std::ofstream csv(dir / "curves.csv", std::ios::binary);
  csv << "category,slot,count,ground_truth,predicted\n";
  std::ofstream mae(dir / "mae.csv", std::ios::binary);
  mae << "category,count,mae\n";
  for (const auto& c : curves) {
    for (Eigen::Index j = 0; j < c.truth.size(); ++j)
      csv << category_name(c.category) << ',' << j + 1 << ',' << c.count << ',' << fixed(c.truth(j)) << ','
          << fixed(c.predicted(j)) << '\n';
    mae << category_name(c.category) << ',' << c.count << ',' << fixed(c.mae) << '\n';
    Series truth{"ground truth", {}, {}, false}, pred{"predicted", {}, {}, true};
    for (Eigen::Index j = 0; j < c.truth.size(); ++j) {
      truth.x.push_back(static_cast<double>(j + 1));
      truth.y.push_back(c.truth(j));
      pred.x.push_back(static_cast<double>(j + 1));
      pred.y.push_back(c.predicted(j));
    }
    const std::vector<Series> series = {truth, pred};
    PlotOptions opt;
    opt.title = "Average repeatability, " + category_name(c.category);
    opt.x_label = "timestamp index";
    opt.y_label = "repeatability";
    write_svg_line_plot(series, opt, dir / ("curve_" + category_name(c.category) + ".svg"));
  }
  const double mse = dataset_loss(model.network, data);
  std::cout << "test samples " << data.size() << ", mse " << fixed(mse) << '\n';
  std::cout << "category     count  mae\n";
  for (const auto& c : curves) {
    char line[96];
    std::snprintf(line, sizeof line, "%-11s %6zu  %.4f\n", category_name(c.category).c_str(), c.count, c.mae);
    std::cout << line;
  }
  return 0;
}

// --- map building shared by summarize and benchmark ----------------------------

struct MapContext {
  Dataset dataset;
  FeatureSet features;
  std::vector<MapPoint> map;
};

MapContext build_context(const std::string& dataset_dir, const RepeatabilityPredictor* model, int threads) {
  MapContext ctx;
  ctx.dataset = load_dataset(dataset_dir);
  if (model && !(model->grid == ctx.dataset.grid)) throw InvalidArgument("model and dataset use different time grids");
  PipelineParams pp;
  pp.threads = threads;
  ctx.features = extract_dataset_features(ctx.dataset, pp);
  const auto tracks = build_tracks(ctx.dataset, ctx.features, pp);
  ctx.map = build_map(ctx.dataset, ctx.features, tracks, model);
  return ctx;
}

// --- summarize ---------------------------------------------------------------

struct SummarizeArgs {
  Common common;
  std::string dataset;
  std::string model;
  std::string method = "rp";
  double ratio = 0.5;
  int t_index = 1;
  int k = 0;
  double cell_size = kDefaultCellSize;
};

int run_summarize(const SummarizeArgs& a) {
  require_dataset(a.dataset);
  const SummaryMethod method = summary_method_from_string(a.method);
  if (method == SummaryMethod::Repeatability && a.model.empty()) throw InvalidArgument("method rp needs --model");
  if (!a.model.empty()) require_file(a.model, "model");
  if (!(a.ratio >= 0.0 && a.ratio < 1.0)) throw InvalidArgument("--ratio must lie in [0, 1)");
  prepare_parent(a.common.out);
  std::optional<RepeatabilityPredictor> model;
  if (!a.model.empty()) model = load_model(a.model);
  if (method == SummaryMethod::Repeatability && (a.t_index < 1 || a.t_index > model->grid.size()))
    throw InvalidArgument("--t-index outside the model's grid");
  const MapContext ctx = build_context(a.dataset, model ? &*model : nullptr, a.common.threads);
  SummaryMap summary;
  switch (method) {
    case SummaryMethod::Repeatability:
      summary = summarize(ctx.map, partition_map(ctx.map, a.cell_size), a.t_index, a.ratio);
      break;
    case SummaryMethod::KCover:
      summary = a.k > 0 ? kcover_summarize(ctx.map, ctx.dataset.database_count(), a.k)
                        : kcover_summarize_ratio(ctx.map, ctx.dataset.database_count(), a.ratio);
      break;
    case SummaryMethod::Full:
      for (std::size_t i = 0; i < ctx.map.size(); ++i) summary.retained.push_back(i);
      break;
  }
  save_summary_map(ctx.map, summary, a.common.out);
  std::cout << "map points " << ctx.map.size() << ", retained " << summary.retained.size() << " (" << a.method;
  if (summary.k > 0) std::cout << ", K=" << summary.k << ", infeasible images " << summary.infeasible_images.size();
  std::cout << ")\n";
  return 0;
}

// --- benchmark ---------------------------------------------------------------

struct BenchmarkArgs {
  Common common;
  std::string dataset;
  std::string model;
  std::vector<std::string> methods = {"rp", "kcover"};
  std::vector<double> ratios = {0.0, 0.3, 0.5, 0.7, 0.9};
  double cell_size = kDefaultCellSize;
  std::size_t retrieve_k = 5;
};

int run_benchmark(const BenchmarkArgs& a) {
  require_dataset(a.dataset);
  BenchmarkConfig config;
  config.methods.clear();
  for (const auto& m : a.methods) config.methods.push_back(summary_method_from_string(m));
  for (double r : a.ratios)
    if (!(r >= 0.0 && r < 1.0)) throw InvalidArgument("prune ratios must lie in [0, 1)");
  const bool needs_model = std::count(config.methods.begin(), config.methods.end(), SummaryMethod::Repeatability) > 0;
  if (needs_model && a.model.empty()) throw InvalidArgument("method rp needs --model");
  if (!a.model.empty()) require_file(a.model, "model");
  fs::create_directories(a.common.out);

  std::optional<RepeatabilityPredictor> model;
  if (!a.model.empty()) model = load_model(a.model);
  const MapContext ctx = build_context(a.dataset, model ? &*model : nullptr, a.common.threads);
  const DatabaseIndex index = make_database_index(ctx.dataset, ctx.features, ctx.map);
  const auto queries = make_queries(ctx.dataset, ctx.features);
  config.prune_ratios = a.ratios;
  config.cell_size = a.cell_size;
  config.threads = a.common.threads;
  config.localize.retrieve_k = a.retrieve_k;
  config.localize.ransac.seed = a.common.seed;
  const auto rows = benchmark(queries, ctx.map, ctx.dataset.database_count(), index, config);
  const fs::path dir(a.common.out);
  write_benchmark_csv(rows, dir / "benchmark.csv");

  for (const auto& th : config.thresholds) {
    std::vector<Series> series;
    for (SummaryMethod m : config.methods) {
      Series s{to_string(m), {}, {}, m == SummaryMethod::KCover};
      for (const auto& r : rows)
        if (r.method == m && r.threshold.name == th.name) {
          s.x.push_back(r.prune_ratio);
          s.y.push_back(r.accuracy);
        }
      series.push_back(std::move(s));
    }
    PlotOptions opt;
    opt.title = "Localization accuracy (" + th.name + ")";
    opt.x_label = "prune ratio";
    opt.y_label = "accuracy";
    write_svg_line_plot(series, opt, dir / ("accuracy_" + th.name + ".svg"));
  }
  std::cout << "map points " << ctx.map.size() << ", queries " << queries.size() << '\n';
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-7s ratio %.2f  %-10s accuracy %.3f\n", to_string(r.method).c_str(),
                  r.prune_ratio, r.threshold.name.c_str(), r.accuracy);
    std::cout << line;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal repeatability prediction and map summarization"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a synthetic dataset");
  add_common(c_synth, synth.common);
  c_synth->add_option("--cycles", synth.cycles, "Database cycles")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--query-cycles", synth.query_cycles, "Query cycles")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_synth->add_option("--per-category", synth.per_category, "Points per category")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_synth->add_option("--images-per-slot", synth.images_per_slot, "Images per slot and viewpoint")
      ->check(CLI::PositiveNumber)->capture_default_str();

  GroundTruthArgs gt;
  auto* c_gt = app.add_subcommand("groundtruth", "Build a ground-truth training set from a dataset");
  add_common(c_gt, gt.common);
  c_gt->add_option("--dataset", gt.dataset, "Dataset directory")->required();
  c_gt->add_option("--mode", gt.mode, "geometric or static")->capture_default_str();
  c_gt->add_option("--ratio", gt.ratio, "Ratio-test threshold")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the repeatability predictor");
  add_common(c_train, tr.common);
  c_train->add_option("--trainset", tr.trainsets, "Training set file (repeatable)")->required();
  c_train->add_option("--epochs", tr.config.epochs, "Epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  c_train->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
  c_train->add_option("--batch", tr.config.batch_size, "Mini-batch size")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_train->add_option("--encoding", tr.encoding, "TIME_OF_DAY, DAY_OF_YEAR or FULL (default: from the grid)");
  c_train->add_option("--loss-csv", tr.loss_csv, "Loss history CSV (default: <out>.loss.csv)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Compare predicted and ground-truth repeatability curves");
  add_common(c_eval, ev.common);
  c_eval->add_option("--model", ev.model, "Model file")->required();
  c_eval->add_option("--testset", ev.testset, "Test set file")->required();

  SummarizeArgs sm;
  auto* c_sum = app.add_subcommand("summarize", "Build the map and write a summary map");
  add_common(c_sum, sm.common);
  c_sum->add_option("--dataset", sm.dataset, "Dataset directory")->required();
  c_sum->add_option("--model", sm.model, "Model file");
  c_sum->add_option("--method", sm.method, "rp, kcover or full")->capture_default_str();
  c_sum->add_option("--ratio", sm.ratio, "Prune ratio")->capture_default_str();
  c_sum->add_option("--t-index", sm.t_index, "Timestamp index for rp")->capture_default_str();
  c_sum->add_option("--k", sm.k, "Explicit K for kcover (overrides --ratio)")->capture_default_str();
  c_sum->add_option("--cell-size", sm.cell_size, "Partition cell size in meters")->capture_default_str();

  BenchmarkArgs bm;
  auto* c_bench = app.add_subcommand("benchmark", "Localization accuracy against pruned maps");
  add_common(c_bench, bm.common);
  c_bench->add_option("--dataset", bm.dataset, "Dataset directory")->required();
  c_bench->add_option("--model", bm.model, "Model file");
  c_bench->add_option("--methods", bm.methods, "Methods")->delimiter(',')->capture_default_str();
  c_bench->add_option("--ratios", bm.ratios, "Prune ratios")->delimiter(',')->capture_default_str();
  c_bench->add_option("--cell-size", bm.cell_size, "Partition cell size in meters")->capture_default_str();
  c_bench->add_option("--retrieve-k", bm.retrieve_k, "Retrieved database images")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_gt) return run_groundtruth(gt);
    if (*c_train) return run_train(tr);
    if (*c_eval) return run_eval(ev);
    if (*c_sum) return run_summarize(sm);
    if (*c_bench) return run_benchmark(bm);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
