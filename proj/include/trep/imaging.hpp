#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace trep {

/// Row-major interleaved RGB image with channels in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f, std::string id = {});

  int width() const { return width_; }
  int height() const { return height_; }
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  float& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
  float at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

  const std::vector<float>& pixels() const { return pixels_; }
  std::vector<float>& pixels() { return pixels_; }

  /// Luminance image (rows = height, cols = width).
  Eigen::MatrixXd gray() const;

  void clamp();

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
  std::string id_;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

inline constexpr int kPatchSize = 64;
inline constexpr int kPatchHalf = kPatchSize / 2;
inline constexpr int kDescriptorDim = 128;

/// 64x64x3 window sampled around an interest point, values in [0, 1].
class Patch {
 public:
  Patch() : data_(static_cast<std::size_t>(kPatchSize * kPatchSize * 3), 0.0f) {}

  float& at(int row, int col, int c) { return data_[index(row, col, c)]; }
  float at(int row, int col, int c) const { return data_[index(row, col, c)]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  /// Luminance of the patch, 64x64.
  Eigen::MatrixXd gray() const;

 private:
  static std::size_t index(int row, int col, int c) {
    return (static_cast<std::size_t>(row) * kPatchSize + static_cast<std::size_t>(col)) * 3 +
           static_cast<std::size_t>(c);
  }
  std::vector<float> data_;
};

using Descriptor = Eigen::Matrix<double, kDescriptorDim, 1>;

struct HarrisParams {
  double k = 0.04;
  double window_sigma = 1.5;
  /// Responses below this fraction of the strongest response are dropped.
  double relative_threshold = 0.01;
  /// Absolute floor; a flat image has zero response everywhere.
  double absolute_threshold = 1e-10;
};

/// Harris response map (rows = height, cols = width), Sobel gradients and a
/// Gaussian-weighted structure tensor.
Eigen::MatrixXd harris_response(const Eigen::MatrixXd& gray, const HarrisParams& params = {});

/// Harris corners, greedily non-max suppressed within `nms_radius`, refined
/// to sub-pixel accuracy and restricted to positions whose 64x64 patch fits.
/// Ordered by score (descending), then y, then x.
std::vector<Keypoint> detect_keypoints(const Image& image, int max_n, double nms_radius,
                                       const HarrisParams& params = {});

/// A detected keypoint with its patch and descriptor.
struct InterestPoint {
  Keypoint keypoint;
  Patch patch;
  Descriptor descriptor = Descriptor::Zero();
};

inline constexpr int kDefaultMaxKeypoints = 400;
inline constexpr double kDefaultNmsRadius = 12.0;

/// detect_keypoints followed by patch extraction and description.
std::vector<InterestPoint> extract_interest_points(const Image& image, int max_n = kDefaultMaxKeypoints,
                                                   double nms_radius = kDefaultNmsRadius,
                                                   const HarrisParams& params = {});

/// True when a patch centered at (x, y) lies inside the image.
bool patch_fits(const Image& image, double x, double y);

/// Bilinear 64x64 window centered at the keypoint. Throws BorderViolation.
Patch extract_patch(const Image& image, const Keypoint& kp);

/// Gradient-orientation histogram: 4x4 cells x 8 bins, clamped at 0.2 and
/// renormalized. A patch without gradient maps to the uniform unit vector.
Descriptor compute_descriptor(const Patch& patch);

/// Rounds every channel to the 8-bit level a PPM round trip produces.
void quantize_8bit(Image& image);

/// Binary PPM (P6, 8 bit).
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Raw float32 tensor: magic "TRF1", u32 width, u32 height, u32 channels,
/// then width*height*channels little-endian floats.
void write_float_tensor(const Image& image, const std::filesystem::path& path);
Image read_float_tensor(const std::filesystem::path& path);

}  // namespace trep
