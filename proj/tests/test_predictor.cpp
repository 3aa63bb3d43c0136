#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "gradcheck.hpp"
#include "trep/errors.hpp"
#include "trep/predictor.hpp"
#include "trep/random.hpp"

using namespace trep;

namespace {

Eigen::MatrixXd random_matrix(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Targets from a fixed smooth function of the first inputs.
TrainingData toy_data(int n, int input_dim, int outputs, std::uint64_t seed) {
  SplitMix64 rng(seed);
  TrainingData d;
  d.inputs = random_matrix(rng, input_dim, n, -1.0, 1.0);
  d.targets.resize(outputs, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < outputs; ++j)
      d.targets(j, i) = 1.0 / (1.0 + std::exp(-2.0 * (d.inputs(j % input_dim, i) - 0.5 * d.inputs((j + 1) % input_dim, i))));
  d.masks = Eigen::MatrixXd::Ones(outputs, n);
  return d;
}

const std::filesystem::path kTmp = std::filesystem::temp_directory_path() / "trep_predictor_test";

}  // namespace

TEST_CASE("input vector layout") {
  Patch flat;
  for (float& v : flat.data()) v = 0.3f;
  const Eigen::VectorXd in = build_input(320.0, 240.0, 640, 480, Eigen::Vector2d(0.1, 0.2), flat);
  REQUIRE(in.size() == 260);
  CHECK(in.size() == input_dim_for(2));
  CHECK(in(0) == doctest::Approx(0.5));
  CHECK(in(1) == doctest::Approx(0.5));
  CHECK(in(2) == 0.1);
  CHECK(in.tail(256).isZero());

  SplitMix64 rng(1);
  Patch noisy;
  for (float& v : noisy.data()) v = static_cast<float>(rng.uniform());
  const Eigen::VectorXd f = patch_feature(noisy);
  CHECK(f.mean() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(f.squaredNorm() / 256.0 == doctest::Approx(1.0));
}

TEST_CASE("generalized mean pooling") {
  Eigen::ArrayXXd a(1, 1), b(1, 1), c(1, 1);
  a << 1.0;
  b << 0.1;
  c << 0.1;
  CHECK(std::abs(gem_pool(a, b, c, 1.0)(0, 0) - 0.4) <= 3 * kGemEpsilon);
  const double z50 = gem_pool(a, b, c, 50.0)(0, 0);
  CHECK(std::abs(z50 - std::pow(1.0 / 3.0, 1.0 / 50.0)) < 0.02 * z50);
  CHECK(gem_pool(a, b, c, 64.0)(0, 0) > gem_pool(a, b, c, 8.0)(0, 0));

  SplitMix64 rng(2);
  for (int i = 0; i < 200; ++i) {
    Eigen::ArrayXXd x(1, 1), y(1, 1), z(1, 1);
    x << rng.uniform(0, 3);
    y << rng.uniform(0, 3);
    z << rng.uniform(0, 3);
    const double p = rng.uniform(1, 64);
    const double g = gem_pool(x, y, z, p)(0, 0);
    const double lo = std::min({x(0, 0), y(0, 0), z(0, 0)});
    const double hi = std::max({x(0, 0), y(0, 0), z(0, 0)});
    CHECK(g >= lo);
    CHECK(g <= hi + 3 * kGemEpsilon);
    CHECK(gem_pool(x, x, x, p)(0, 0) == doctest::Approx(x(0, 0) + kGemEpsilon));
    Eigen::ArrayXXd bigger = x + 0.1;
    CHECK(gem_pool(bigger, y, z, p)(0, 0) >= g);
  }
}

TEST_CASE("forward pass") {
  const Network zero = Network::zeros(input_dim_for(2), 12);
  SplitMix64 rng(3);
  const Eigen::MatrixXd in = random_matrix(rng, input_dim_for(2), 5, -1, 1);
  CHECK(zero.predict(in).isApprox(Eigen::MatrixXd::Constant(12, 5, 0.5)));

  const Network net = Network::initialize(input_dim_for(2), 12, 7);
  const Network same = Network::initialize(input_dim_for(2), 12, 7);
  const Eigen::MatrixXd a = net.predict(in), b = same.predict(in);
  CHECK(a == b);
  CHECK(a.minCoeff() > 0.0);
  CHECK(a.maxCoeff() < 1.0);
  CHECK_THROWS_AS(net.predict(Eigen::MatrixXd(Eigen::MatrixXd::Zero(10, 1))), ShapeMismatch);
}

TEST_CASE("masked MSE") {
  Eigen::MatrixXd y(2, 1), yh(2, 1), m = Eigen::MatrixXd::Ones(2, 1);
  y << 1, 0;
  yh << 0.5, 0.5;
  CHECK(mse_loss<double>(yh, y, m) == doctest::Approx(0.5));
  CHECK(mse_loss<double>(y, y, m) == 0.0);
  Eigen::MatrixXd yh2 = y;
  yh2(0, 0) = 0.3;
  m(0, 0) = 0.0;
  CHECK(mse_loss<double>(yh2, y, m) == 0.0);
  CHECK_THROWS_AS(mse_loss<double>(Eigen::MatrixXd::Zero(3, 1), y, m), ShapeMismatch);
}

TEST_CASE("backward matches finite differences") {
  SplitMix64 rng(4);
  Network net = Network::initialize(input_dim_for(2), 6, 11);
  net.set_p(2.5);
  const Eigen::MatrixXd in = random_matrix(rng, input_dim_for(2), 3, -1, 1);
  const Eigen::MatrixXd t = random_matrix(rng, 6, 3, 0, 1);
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(6, 3);
  m(2, 1) = 0.0;
  const auto r = testing::check_gradient(net, in, t, m, 1e-5, 7);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("fully masked batch has zero gradient") {
  SplitMix64 rng(5);
  const Network net = Network::initialize(input_dim_for(4), 5, 1);
  const Eigen::MatrixXd in = random_matrix(rng, input_dim_for(4), 4, -1, 1);
  const Eigen::MatrixXd t = random_matrix(rng, 5, 4, 0, 1);
  const auto g = net.backward(net.forward(in), t, Eigen::MatrixXd::Zero(5, 4)).flatten();
  CHECK(g.isZero());
}

TEST_CASE("duplicated batch has the same mean gradient") {
  SplitMix64 rng(6);
  const Network net = Network::initialize(input_dim_for(2), 4, 2);
  const Eigen::MatrixXd in = random_matrix(rng, input_dim_for(2), 3, -1, 1);
  const Eigen::MatrixXd t = random_matrix(rng, 4, 3, 0, 1);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Ones(4, 3);
  Eigen::MatrixXd in2(in.rows(), 6), t2(4, 6), m2(4, 6);
  in2 << in, in;
  t2 << t, t;
  m2 << m, m;
  const auto g1 = net.backward(net.forward(in), t, m).flatten();
  const auto g2 = net.backward(net.forward(in2), t2, m2).flatten();
  CHECK((g1 - g2).norm() < 1e-12 * std::max(1.0, g1.norm()));
}

TEST_CASE("training reduces the loss") {
  const TrainingData data = toy_data(100, input_dim_for(2), 4, 8);
  const Network init = Network::initialize(input_dim_for(2), 4, 3);
  TrainingConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.seed = 1;
  const TrainResult r = train(init, data, cfg);
  REQUIRE(r.loss_history.size() == 200);
  CHECK(r.loss_history.back() < 0.5 * r.initial_loss);
  CHECK(r.network.p() >= kGemPMin);

  const TrainResult again = train(init, data, cfg);
  CHECK(again.loss_history == r.loss_history);
}

TEST_CASE("zero learning rate leaves the model unchanged") {
  const TrainingData data = toy_data(40, input_dim_for(2), 3, 9);
  const Network init = Network::initialize(input_dim_for(2), 3, 4);
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  const TrainResult r = train(init, data, cfg);
  CHECK(r.network.flatten() == init.flatten());
  for (double l : r.loss_history) CHECK(l == r.initial_loss);
  CHECK_THROWS_AS(train(init, TrainingData{}, cfg), EmptyDataset);
}

TEST_CASE("model file round trip") {
  std::filesystem::create_directories(kTmp);
  const RepeatabilityPredictor model{Network::initialize(input_dim_for(2), 6, 5),
                                     TimeGrid::regular(CycleKind::Day, 6, 60), TimeEncoding::TimeOfDay};
  const auto path = kTmp / "m.bin";
  save_model(model, path);
  const RepeatabilityPredictor back = load_model(path);
  CHECK(back.grid == model.grid);
  CHECK(back.encoding == model.encoding);
  CHECK(back.network.flatten() == model.network.flatten());
  SplitMix64 rng(1);
  const Eigen::MatrixXd in = random_matrix(rng, input_dim_for(2), 4, -1, 1);
  CHECK(back.network.predict(in) == model.network.predict(in));

  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  {
    std::ofstream os(kTmp / "short.bin", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_model(kTmp / "short.bin"), CorruptFile);
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream os(kTmp / "magic.bin", std::ios::binary);
    os << bad;
  }
  CHECK_THROWS_AS(load_model(kTmp / "magic.bin"), VersionMismatch);
  std::filesystem::remove_all(kTmp);
}
