#include "trep/predictor.hpp"

#include <fstream>
#include <numeric>

#include "trep/binio.hpp"

namespace trep {

Eigen::VectorXd patch_feature(const Patch& patch) {
  const Eigen::MatrixXd g = patch.gray();
  constexpr int block = kPatchSize / kPatchFeatureSide;
  Eigen::VectorXd f(kPatchFeatureDim);
  for (int r = 0; r < kPatchFeatureSide; ++r)
    for (int c = 0; c < kPatchFeatureSide; ++c)
      f(r * kPatchFeatureSide + c) = g.block(r * block, c * block, block, block).mean();
  const double mean = f.mean();
  f.array() -= mean;
  const double sd = std::sqrt(f.squaredNorm() / static_cast<double>(f.size()));
  if (!(sd > 1e-9)) return Eigen::VectorXd::Zero(kPatchFeatureDim);
  return f / sd;
}

Eigen::VectorXd build_input(double x, double y, int image_width, int image_height,
                            const Eigen::VectorXd& time_encoding, const Eigen::VectorXd& feature) {
  if (feature.size() != kPatchFeatureDim) throw ShapeMismatch("patch feature must have 256 entries");
  Eigen::VectorXd in(2 + time_encoding.size() + kPatchFeatureDim);
  in << x / image_width, y / image_height, time_encoding, feature;
  return in;
}

Eigen::VectorXd build_input(double x, double y, int image_width, int image_height,
                            const Eigen::VectorXd& time_encoding, const Patch& patch) {
  return build_input(x, y, image_width, image_height, time_encoding, patch_feature(patch));
}

Eigen::VectorXd predict_repeatability(const RepeatabilityPredictor& model, const Keypoint& keypoint,
                                      int image_width, int image_height, const Wallclock& wallclock,
                                      const Patch& patch) {
  return model.network.predict(
      build_input(keypoint.x, keypoint.y, image_width, image_height, encode_time(wallclock, model.encoding), patch));
}

double dataset_loss(const Network& net, const TrainingData& data) {
  if (data.size() == 0) return 0.0;
  constexpr Eigen::Index chunk = 1024;
  double total = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += chunk) {
    const Eigen::Index len = std::min(chunk, data.size() - start);
    const Eigen::MatrixXd pred = net.predict(Eigen::MatrixXd(data.inputs.middleCols(start, len)));
    total += (data.masks.middleCols(start, len).array() * (data.targets.middleCols(start, len) - pred).array())
                 .square()
                 .sum();
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(const Network& initial, const TrainingData& data, const TrainingConfig& config) {
  if (data.size() == 0) throw EmptyDataset("training set is empty");
  if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
  if (config.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (data.inputs.rows() != initial.input_dim() || data.targets.rows() != initial.output_dim() ||
      data.masks.rows() != data.targets.rows() || data.targets.cols() != data.size() || data.masks.cols() != data.size())
    throw ShapeMismatch("training data does not match the network");

  TrainResult result;
  result.network = initial;
  result.initial_loss = dataset_loss(initial, data);

  Network& net = result.network;
  Eigen::VectorXd params = net.flatten();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
  const Eigen::Index p_index = params.size() - 1;
  SplitMix64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      Eigen::MatrixXd x(data.inputs.rows(), static_cast<Eigen::Index>(len));
      Eigen::MatrixXd y(data.targets.rows(), static_cast<Eigen::Index>(len));
      Eigen::MatrixXd mask(data.masks.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t i = 0; i < len; ++i) {
        const Eigen::Index src = order[start + i];
        x.col(static_cast<Eigen::Index>(i)) = data.inputs.col(src);
        y.col(static_cast<Eigen::Index>(i)) = data.targets.col(src);
        mask.col(static_cast<Eigen::Index>(i)) = data.masks.col(src);
      }
      const auto cache = net.forward(x);
      const Eigen::VectorXd grad = net.backward(cache, y, mask).flatten();

      ++step;
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      params.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.epsilon);
      params(p_index) = std::clamp(params(p_index), kGemPMin, kGemPMax);
      net.unflatten(params);
    }
    result.loss_history.push_back(dataset_loss(net, data));
  }
  return result;
}

namespace {

constexpr char kModelMagic[5] = "RPM1";
constexpr std::uint8_t kModelVersion = 1;

}  // namespace

void save_model(const RepeatabilityPredictor& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  binio::write_magic(os, kModelMagic, kModelVersion);
  write_grid(os, model.grid);
  binio::write<std::uint8_t>(os, static_cast<std::uint8_t>(model.encoding));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(model.network.input_dim()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(kLayerCount));
  for (int l = 0; l < kLayerCount; ++l) {
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(model.network.layer(l).outputs()));
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(model.network.layer(l).inputs()));
  }
  for (int l = 0; l < kLayerCount; ++l) {
    const auto& layer = model.network.layer(l);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) binio::write<double>(os, layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) binio::write<double>(os, layer.bias(r));
  }
  binio::write<double>(os, model.network.p());
  if (!os) throw Error("failed writing " + path.string());
}

RepeatabilityPredictor load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  binio::expect_magic(is, kModelMagic, kModelVersion);
  TimeGrid grid = read_grid(is);
  const auto enc = binio::read<std::uint8_t>(is);
  if (enc > 2) throw CorruptFile("bad time encoding");
  const auto encoding = static_cast<TimeEncoding>(enc);
  const auto input_dim = binio::read<std::uint32_t>(is);
  const auto layers = binio::read<std::uint32_t>(is);
  if (layers != kLayerCount) throw CorruptFile("unexpected layer count");
  if (input_dim != static_cast<std::uint32_t>(input_dim_for(encoding_dim(encoding))))
    throw CorruptFile("input width does not match the time encoding");

  std::array<std::pair<std::uint32_t, std::uint32_t>, kLayerCount> shapes;
  std::uint32_t expect_in = input_dim;
  for (int l = 0; l < kLayerCount; ++l) {
    const auto out = binio::read<std::uint32_t>(is);
    const auto in = binio::read<std::uint32_t>(is);
    const std::uint32_t expect_out =
        l < kLayerCount - 1 ? static_cast<std::uint32_t>(kHiddenWidths[static_cast<std::size_t>(l)])
                            : static_cast<std::uint32_t>(grid.size());
    if (in != expect_in || out != expect_out) throw CorruptFile("layer shapes are inconsistent");
    shapes[static_cast<std::size_t>(l)] = {out, in};
    expect_in = out;
  }
  Network net = Network::zeros(static_cast<int>(input_dim), grid.size());
  for (int l = 0; l < kLayerCount; ++l) {
    auto& layer = net.layer(l);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = binio::read<double>(is);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = binio::read<double>(is);
  }
  const double p = binio::read<double>(is);
  if (!(p >= kGemPMin && p <= kGemPMax)) throw CorruptFile("pooling exponent out of range");
  net.set_p(p);
  if (is.peek() != std::char_traits<char>::eof()) throw CorruptFile("trailing bytes after model");
  return {std::move(net), std::move(grid), encoding};
}

}  // namespace trep
