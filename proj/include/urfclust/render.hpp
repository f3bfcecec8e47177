#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "urfclust/dataset.hpp"
#include "urfclust/proximity.hpp"

namespace urfclust {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Piecewise-linear colour ramp over [0, 1].
class Colormap {
 public:
  struct Anchor {
    double t;
    Rgb color;
  };

  explicit Colormap(std::vector<Anchor> anchors);
  /// Blue -> green -> orange -> yellow ramp in the style of parula.
  static Colormap parula();

  Rgb map(double t) const;
  const std::vector<Anchor>& anchors() const { return anchors_; }

 private:
  std::vector<Anchor> anchors_;
};

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, Rgb fill = {});
  Rgb pixel(std::size_t x, std::size_t y) const {
    const std::uint8_t* p = rgb.data() + 3 * (y * width + x);
    return {p[0], p[1], p[2]};
  }
  void set(std::size_t x, std::size_t y, Rgb c) {
    std::uint8_t* p = rgb.data() + 3 * (y * width + x);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  bool operator==(const Image&) const = default;
};

enum class Reducer { mean, max };

struct StripSpec {
  std::string feature;
  std::string group;  // strips sharing a non-empty group share one (min, max)
};

struct BoxSpec {
  std::size_t lo = 0;  // ordered-index range [lo, hi) on the diagonal
  std::size_t hi = 0;
  std::string label;
};

struct RenderSpec {
  std::size_t max_pixels = 4096;
  Reducer downsample = Reducer::mean;
  std::vector<StripSpec> strips;
  std::vector<BoxSpec> boxes;
  bool type_row = true;
  std::size_t strip_height = 8;
  Colormap colormap = Colormap::parula();

  /// All schema columns as strips, grouped by their display group.
  static RenderSpec defaults(const FeatureSchema& schema);
  static RenderSpec from_json(const nlohmann::json& j, const FeatureSchema& schema);
  nlohmann::json to_json() const;
};

/// Half-open rectangle of ordered indices: columns [x0, x1), rows [y0, y1).
struct Window {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Smallest integer block side that fits extent into max_pixels.
std::size_t downsample_factor(std::size_t extent, std::size_t max_pixels);

/// Colours a window of the ordered matrix P[order[y]][order[x]]. Pixel u
/// covers indices [x0 + u*f, min(x0 + (u+1)*f, x1)) for factor f chosen from
/// the larger window side and max_side.
Image render_window(const ProximityMatrix& p, std::span<const std::size_t> order, Window window,
                    std::size_t max_side, Reducer reducer, const Colormap& colormap);

/// Whole ordered matrix, boxes drawn on top.
Image render_matrix(const ProximityMatrix& p, std::span<const std::size_t> order, const RenderSpec& spec);

/// Feature rows under the matrix at the same horizontal scale. Calibration
/// always spans all rows; columns optionally restricts output to ordered
/// indices [lo, hi), laid out on the same grid as a matrix window of that
/// width. Throws std::invalid_argument for a strip naming an unknown feature
/// and std::out_of_range for a bad column window.
Image render_strips(const FeatureMatrix& matrix, std::span<const std::size_t> order, const RenderSpec& spec,
                    std::optional<std::pair<std::size_t, std::size_t>> columns = std::nullopt);

/// Per-strip normalisation bounds after group calibration.
std::vector<std::pair<double, double>> strip_calibration(const FeatureMatrix& matrix, const RenderSpec& spec);

Rgb scenery_color(Scenery s);

/// Outlines diagonal boxes (index space, scaled by factor) and writes their
/// labels. Throws std::out_of_range for a box outside [0, matrix_size).
void draw_boxes(Image& image, std::span<const BoxSpec> boxes, std::size_t matrix_size, std::size_t factor);

void draw_text(Image& image, std::size_t x, std::size_t y, std::string_view text, Rgb color, std::size_t scale = 1);

/// Images side by side, top-aligned, separated by gap columns.
Image contact_sheet(std::span<const Image> images, std::size_t gap = 8, Rgb background = {255, 255, 255});

std::string encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);

namespace reference {
Image render_window_serial(const ProximityMatrix& p, std::span<const std::size_t> order, Window window,
                           std::size_t max_side, Reducer reducer, const Colormap& colormap);
}  // namespace reference

}  // namespace urfclust
