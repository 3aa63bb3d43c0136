#include "trep/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "trep/binio.hpp"
#include "trep/errors.hpp"

namespace trep {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

// Spatial weighting of gradient samples in the descriptor window.
constexpr double kDescriptorSigma = 8.0;
constexpr double kDescriptorClamp = 0.2;

Eigen::VectorXd gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Eigen::VectorXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
  return k / k.sum();
}

// Separable convolution with clamp-to-edge borders.
Eigen::MatrixXd blur(const Eigen::MatrixXd& src, const Eigen::VectorXd& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const Eigen::Index rows = src.rows(), cols = src.cols();
  Eigen::MatrixXd tmp(rows, cols), out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index cc = std::clamp<Eigen::Index>(c + i, 0, cols - 1);
        acc += kernel(i + radius) * src(r, cc);
      }
      tmp(r, c) = acc;
    }
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index rr = std::clamp<Eigen::Index>(r + i, 0, rows - 1);
        acc += kernel(i + radius) * tmp(rr, c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

double parabola_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (std::abs(denom) < 1e-300) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

Image::Image(int width, int height, float fill, std::string id)
    : width_(width),
      height_(height),
      pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill),
      id_(std::move(id)) {
  if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
}

Eigen::MatrixXd Image::gray() const {
  Eigen::MatrixXd g(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      g(y, x) = kLumaR * at(x, y, 0) + kLumaG * at(x, y, 1) + kLumaB * at(x, y, 2);
  return g;
}

void Image::clamp() {
  for (float& v : pixels_) v = std::clamp(v, 0.0f, 1.0f);
}

Eigen::MatrixXd Patch::gray() const {
  Eigen::MatrixXd g(kPatchSize, kPatchSize);
  for (int r = 0; r < kPatchSize; ++r)
    for (int c = 0; c < kPatchSize; ++c)
      g(r, c) = kLumaR * at(r, c, 0) + kLumaG * at(r, c, 1) + kLumaB * at(r, c, 2);
  return g;
}

Eigen::MatrixXd harris_response(const Eigen::MatrixXd& gray, const HarrisParams& params) {
  const Eigen::Index rows = gray.rows(), cols = gray.cols();
  Eigen::MatrixXd ix = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd iy = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index r = 1; r + 1 < rows; ++r) {
    for (Eigen::Index c = 1; c + 1 < cols; ++c) {
      ix(r, c) = ((gray(r - 1, c + 1) + 2.0 * gray(r, c + 1) + gray(r + 1, c + 1)) -
                  (gray(r - 1, c - 1) + 2.0 * gray(r, c - 1) + gray(r + 1, c - 1))) / 8.0;
      iy(r, c) = ((gray(r + 1, c - 1) + 2.0 * gray(r + 1, c) + gray(r + 1, c + 1)) -
                  (gray(r - 1, c - 1) + 2.0 * gray(r - 1, c) + gray(r - 1, c + 1))) / 8.0;
    }
  }
  const Eigen::VectorXd kernel = gaussian_kernel(params.window_sigma);
  const Eigen::MatrixXd sxx = blur(ix.cwiseProduct(ix), kernel);
  const Eigen::MatrixXd syy = blur(iy.cwiseProduct(iy), kernel);
  const Eigen::MatrixXd sxy = blur(ix.cwiseProduct(iy), kernel);
  const Eigen::ArrayXXd trace = (sxx + syy).array();
  return (sxx.array() * syy.array() - sxy.array().square() - params.k * trace.square()).matrix();
}

std::vector<InterestPoint> extract_interest_points(const Image& image, int max_n, double nms_radius,
                                                   const HarrisParams& params) {
  std::vector<InterestPoint> out;
  for (const Keypoint& kp : detect_keypoints(image, max_n, nms_radius, params)) {
    InterestPoint ip;
    ip.keypoint = kp;
    ip.patch = extract_patch(image, kp);
    ip.descriptor = compute_descriptor(ip.patch);
    out.push_back(std::move(ip));
  }
  return out;
}

bool patch_fits(const Image& image, double x, double y) {
  return x >= kPatchHalf && y >= kPatchHalf && x < image.width() - kPatchHalf &&
         y < image.height() - kPatchHalf;
}

std::vector<Keypoint> detect_keypoints(const Image& image, int max_n, double nms_radius,
                                       const HarrisParams& params) {
  if (max_n < 1) throw InvalidArgument("max_n must be >= 1");
  if (image.width() <= 2 * kPatchHalf || image.height() <= 2 * kPatchHalf) return {};
  const Eigen::MatrixXd response = harris_response(image.gray(), params);

  const int x0 = kPatchHalf, x1 = image.width() - kPatchHalf - 1;
  const int y0 = kPatchHalf, y1 = image.height() - kPatchHalf - 1;
  double peak = 0.0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) peak = std::max(peak, response(y, x));
  const double threshold = std::max(params.absolute_threshold, params.relative_threshold * peak);
  if (peak <= threshold) return {};

  std::vector<Keypoint> candidates;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double v = response(y, x);
      if (v < threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if ((dx || dy) && response(y + dy, x + dx) > v) {
            is_max = false;
            break;
          }
      if (!is_max) continue;
      const double sx = x + parabola_offset(response(y, x - 1), v, response(y, x + 1));
      const double sy = y + parabola_offset(response(y - 1, x), v, response(y + 1, x));
      if (!patch_fits(image, sx, sy)) continue;
      candidates.push_back({sx, sy, v});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Keypoint> kept;
  const double r2 = nms_radius * nms_radius;
  for (const Keypoint& c : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Keypoint& k) {
      const double dx = k.x - c.x, dy = k.y - c.y;
      return dx * dx + dy * dy < r2;
    });
    if (suppressed) continue;
    kept.push_back(c);
    if (static_cast<int>(kept.size()) == max_n) break;
  }
  return kept;
}

Patch extract_patch(const Image& image, const Keypoint& kp) {
  if (!patch_fits(image, kp.x, kp.y)) throw BorderViolation("patch window leaves the image");
  Patch patch;
  for (int r = 0; r < kPatchSize; ++r) {
    const double sy = kp.y - kPatchHalf + r;
    const int iy = static_cast<int>(std::floor(sy));
    const double fy = sy - iy;
    const int iy1 = std::min(iy + 1, image.height() - 1);
    for (int c = 0; c < kPatchSize; ++c) {
      const double sx = kp.x - kPatchHalf + c;
      const int ix = static_cast<int>(std::floor(sx));
      const double fx = sx - ix;
      const int ix1 = std::min(ix + 1, image.width() - 1);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - fx) * image.at(ix, iy, ch) + fx * image.at(ix1, iy, ch);
        const double bottom = (1.0 - fx) * image.at(ix, iy1, ch) + fx * image.at(ix1, iy1, ch);
        patch.at(r, c, ch) = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return patch;
}

Descriptor compute_descriptor(const Patch& patch) {
  const Eigen::MatrixXd g = patch.gray();
  constexpr int kCells = 4;
  constexpr int kBins = 8;
  constexpr double kCellSize = static_cast<double>(kPatchSize) / kCells;
  double hist[kCells][kCells][kBins] = {};

  for (int r = 1; r + 1 < kPatchSize; ++r) {
    for (int c = 1; c + 1 < kPatchSize; ++c) {
      const double gx = 0.5 * (g(r, c + 1) - g(r, c - 1));
      const double gy = 0.5 * (g(r + 1, c) - g(r - 1, c));
      const double mag = std::hypot(gx, gy);
      if (mag <= 0.0) continue;
      const double dr = r - kPatchHalf, dc = c - kPatchHalf;
      const double w = mag * std::exp(-(dr * dr + dc * dc) / (2.0 * kDescriptorSigma * kDescriptorSigma));

      double angle = std::atan2(gy, gx);
      if (angle < 0.0) angle += 2.0 * std::numbers::pi;
      const double ob = angle / (2.0 * std::numbers::pi) * kBins;
      const int o0 = static_cast<int>(std::floor(ob)) % kBins;
      const int o1 = (o0 + 1) % kBins;
      const double fo = ob - std::floor(ob);

      // Cell centers sit at 8, 24, 40, 56.
      const double rb = (r + 0.5) / kCellSize - 0.5;
      const double cb = (c + 0.5) / kCellSize - 0.5;
      const int r0 = static_cast<int>(std::floor(rb));
      const int c0 = static_cast<int>(std::floor(cb));
      const double fr = rb - r0, fc = cb - c0;
      for (int i = 0; i < 2; ++i) {
        const int ri = r0 + i;
        if (ri < 0 || ri >= kCells) continue;
        const double wr = i ? fr : 1.0 - fr;
        for (int j = 0; j < 2; ++j) {
          const int cj = c0 + j;
          if (cj < 0 || cj >= kCells) continue;
          const double wc = j ? fc : 1.0 - fc;
          hist[ri][cj][o0] += w * wr * wc * (1.0 - fo);
          hist[ri][cj][o1] += w * wr * wc * fo;
        }
      }
    }
  }

  Descriptor d;
  for (int i = 0; i < kCells; ++i)
    for (int j = 0; j < kCells; ++j)
      for (int o = 0; o < kBins; ++o) d((i * kCells + j) * kBins + o) = hist[i][j][o];

  const double norm = d.norm();
  if (!(norm > 1e-12)) return Descriptor::Constant(1.0 / std::sqrt(static_cast<double>(kDescriptorDim)));
  d /= norm;
  d = d.cwiseMin(kDescriptorClamp);
  return d.normalized();
}

void quantize_8bit(Image& image) {
  for (float& v : image.pixels()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels().size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels()[i], 0.0f, 1.0f) * 255.0f));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw CorruptFile("not a binary PPM: " + path.string());
  auto next_int = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    int v = -1;
    is >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (!is || w <= 0 || h <= 0 || maxval != 255) throw CorruptFile("unsupported PPM header: " + path.string());
  is.get();
  Image image(w, h, 0.0f, path.stem().string());
  std::vector<unsigned char> bytes(image.pixels().size());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    throw CorruptFile("truncated PPM: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels()[i] = bytes[i] / 255.0f;
  return image;
}

void write_float_tensor(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  os.write("TRF1", 4);
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(image.width()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(image.height()));
  binio::write<std::uint32_t>(os, 3u);
  for (float v : image.pixels()) binio::write<float>(os, v);
}

Image read_float_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TRF1") throw VersionMismatch("not a float tensor file");
  const auto w = binio::read<std::uint32_t>(is);
  const auto h = binio::read<std::uint32_t>(is);
  const auto c = binio::read<std::uint32_t>(is);
  if (c != 3 || w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw CorruptFile("bad tensor shape");
  Image image(static_cast<int>(w), static_cast<int>(h), 0.0f, path.stem().string());
  for (float& v : image.pixels()) v = binio::read<float>(is);
  return image;
}

}  // namespace trep
