#include "urfclust/render.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace urfclust {

// --- colormap --------------------------------------------------------------

Colormap::Colormap(std::vector<Anchor> anchors) : anchors_(std::move(anchors)) {
  if (anchors_.size() < 2) throw std::invalid_argument("colormap: need at least two anchors");
  if (anchors_.front().t != 0.0 || anchors_.back().t != 1.0)
    throw std::invalid_argument("colormap: anchors must start at 0 and end at 1");
  for (std::size_t i = 1; i < anchors_.size(); ++i)
    if (!(anchors_[i].t > anchors_[i - 1].t)) throw std::invalid_argument("colormap: anchors must increase");
}

Colormap Colormap::parula() {
  return Colormap({{0.000, {53, 42, 135}},
                   {0.125, {15, 92, 221}},
                   {0.250, {18, 125, 216}},
                   {0.375, {7, 156, 207}},
                   {0.500, {21, 177, 180}},
                   {0.625, {89, 189, 140}},
                   {0.750, {165, 190, 107}},
                   {0.875, {225, 185, 82}},
                   {1.000, {249, 251, 14}}});
}

Rgb Colormap::map(double t) const {
  if (!(t > 0.0)) return anchors_.front().color;
  if (t >= 1.0) return anchors_.back().color;
  std::size_t k = 1;
  while (anchors_[k].t < t) ++k;
  const Anchor& a = anchors_[k - 1];
  const Anchor& b = anchors_[k];
  const double s = (t - a.t) / (b.t - a.t);
  auto lerp = [s](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + s * (static_cast<double>(y) - x)));
  };
  return {lerp(a.color.r, b.color.r), lerp(a.color.g, b.color.g), lerp(a.color.b, b.color.b)};
}

Image::Image(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), rgb(3 * w * h) {
  for (std::size_t i = 0; i < w * h; ++i) {
    rgb[3 * i] = fill.r;
    rgb[3 * i + 1] = fill.g;
    rgb[3 * i + 2] = fill.b;
  }
}

// --- render spec -----------------------------------------------------------

RenderSpec RenderSpec::defaults(const FeatureSchema& schema) {
  RenderSpec spec;
  for (const auto& c : schema.columns()) spec.strips.push_back({c.name, c.display_group});
  return spec;
}

RenderSpec RenderSpec::from_json(const nlohmann::json& j, const FeatureSchema& schema) {
  RenderSpec spec = defaults(schema);
  if (j.contains("max_pixels")) spec.max_pixels = j.at("max_pixels").get<std::size_t>();
  if (spec.max_pixels < 1) throw std::invalid_argument("render spec: max_pixels must be >= 1");
  if (j.contains("downsample")) {
    const auto name = j.at("downsample").get<std::string>();
    if (name == "mean") spec.downsample = Reducer::mean;
    else if (name == "max") spec.downsample = Reducer::max;
    else throw std::invalid_argument("render spec: downsample must be 'mean' or 'max'");
  }
  if (j.contains("strips")) {
    spec.strips.clear();
    for (const auto& s : j.at("strips")) {
      if (s.is_string()) spec.strips.push_back({s.get<std::string>(), ""});
      else spec.strips.push_back({s.at("feature").get<std::string>(), s.value("group", std::string())});
    }
  }
  if (j.contains("boxes"))
    for (const auto& b : j.at("boxes"))
      spec.boxes.push_back({b.at("lo").get<std::size_t>(), b.at("hi").get<std::size_t>(), b.value("label", std::string())});
  if (j.contains("type_row")) spec.type_row = j.at("type_row").get<bool>();
  if (j.contains("strip_height")) spec.strip_height = std::max<std::size_t>(1, j.at("strip_height").get<std::size_t>());
  if (j.contains("colormap")) {
    std::vector<Colormap::Anchor> anchors;
    for (const auto& a : j.at("colormap"))
      anchors.push_back({a.at(0).get<double>(),
                         {a.at(1).get<std::uint8_t>(), a.at(2).get<std::uint8_t>(), a.at(3).get<std::uint8_t>()}});
    spec.colormap = Colormap(std::move(anchors));
  }
  return spec;
}

nlohmann::json RenderSpec::to_json() const {
  nlohmann::json strips_j = nlohmann::json::array();
  for (const auto& s : strips) strips_j.push_back({{"feature", s.feature}, {"group", s.group}});
  nlohmann::json boxes_j = nlohmann::json::array();
  for (const auto& b : boxes) boxes_j.push_back({{"lo", b.lo}, {"hi", b.hi}, {"label", b.label}});
  nlohmann::json cmap = nlohmann::json::array();
  for (const auto& a : colormap.anchors()) cmap.push_back({a.t, a.color.r, a.color.g, a.color.b});
  return {{"max_pixels", max_pixels},
          {"downsample", downsample == Reducer::mean ? "mean" : "max"},
          {"strips", strips_j},
          {"boxes", boxes_j},
          {"type_row", type_row},
          {"strip_height", strip_height},
          {"colormap", cmap}};
}

// --- matrix ----------------------------------------------------------------

std::size_t downsample_factor(std::size_t extent, std::size_t max_pixels) {
  if (max_pixels == 0) throw std::invalid_argument("downsample: max_pixels must be >= 1");
  return std::max<std::size_t>(1, (extent + max_pixels - 1) / max_pixels);
}

namespace {

struct WindowGeometry {
  std::size_t factor, width, height;
};

WindowGeometry check_window(const ProximityMatrix& p, std::span<const std::size_t> order, Window w,
                            std::size_t max_side) {
  if (order.size() != p.size()) throw std::invalid_argument("render: order size does not match matrix");
  if (!(w.x0 < w.x1 && w.y0 < w.y1 && w.x1 <= p.size() && w.y1 <= p.size()))
    throw std::out_of_range("render: window outside matrix");
  const std::size_t f = downsample_factor(std::max(w.x1 - w.x0, w.y1 - w.y0), max_side);
  return {f, (w.x1 - w.x0 + f - 1) / f, (w.y1 - w.y0 + f - 1) / f};
}

void render_row(const ProximityMatrix& p, std::span<const std::size_t> order, Window w,
                const WindowGeometry& g, Reducer reducer, const Colormap& cmap, std::size_t v, Image& img) {
  const std::size_t ya = w.y0 + v * g.factor;
  const std::size_t yb = std::min(ya + g.factor, w.y1);
  const double trees = static_cast<double>(p.tree_count());
  for (std::size_t u = 0; u < g.width; ++u) {
    const std::size_t xa = w.x0 + u * g.factor;
    const std::size_t xb = std::min(xa + g.factor, w.x1);
    std::uint64_t acc = 0;
    for (std::size_t y = ya; y < yb; ++y) {
      const std::size_t oy = order[y];
      for (std::size_t x = xa; x < xb; ++x) {
        const std::uint32_t c = p.count(oy, order[x]);
        acc = reducer == Reducer::max ? std::max<std::uint64_t>(acc, c) : acc + c;
      }
    }
    const double cells = reducer == Reducer::max ? 1.0 : static_cast<double>((yb - ya) * (xb - xa));
    img.set(u, v, cmap.map(static_cast<double>(acc) / (cells * trees)));
  }
}

}  // namespace

Image render_window(const ProximityMatrix& p, std::span<const std::size_t> order, Window w,
                    std::size_t max_side, Reducer reducer, const Colormap& cmap) {
  const WindowGeometry g = check_window(p, order, w, max_side);
  Image img(g.width, g.height);
  const long rows = static_cast<long>(g.height);
#pragma omp parallel for schedule(dynamic, 8)
  for (long v = 0; v < rows; ++v) render_row(p, order, w, g, reducer, cmap, static_cast<std::size_t>(v), img);
  return img;
}

namespace reference {

Image render_window_serial(const ProximityMatrix& p, std::span<const std::size_t> order, Window w,
                           std::size_t max_side, Reducer reducer, const Colormap& cmap) {
  const WindowGeometry g = check_window(p, order, w, max_side);
  Image img(g.width, g.height);
  for (std::size_t v = 0; v < g.height; ++v) render_row(p, order, w, g, reducer, cmap, v, img);
  return img;
}

}  // namespace reference

Image render_matrix(const ProximityMatrix& p, std::span<const std::size_t> order, const RenderSpec& spec) {
  const std::size_t m = p.size();
  Image img = render_window(p, order, {0, 0, m, m}, spec.max_pixels, spec.downsample, spec.colormap);
  draw_boxes(img, spec.boxes, m, downsample_factor(m, spec.max_pixels));
  return img;
}

// --- strips ----------------------------------------------------------------

Rgb scenery_color(Scenery s) {
  switch (s) {
    case Scenery::highway: return {220, 30, 30};
    case Scenery::crossing: return {30, 170, 50};
    case Scenery::roundabout: return {30, 60, 220};
  }
  return {128, 128, 128};
}

std::vector<std::pair<double, double>> strip_calibration(const FeatureMatrix& m, const RenderSpec& spec) {
  std::vector<std::size_t> cols;
  for (const auto& s : spec.strips) {
    auto c = m.schema().index_of(s.feature);
    if (!c) throw std::invalid_argument("render: strip feature '" + s.feature + "' not in schema");
    cols.push_back(*c);
  }
  auto column_range = [&](std::size_t c) {
    std::pair<double, double> r{m.at(0, c), m.at(0, c)};
    for (std::size_t i = 1; i < m.rows(); ++i) {
      r.first = std::min(r.first, m.at(i, c));
      r.second = std::max(r.second, m.at(i, c));
    }
    return r;
  };
  std::vector<std::pair<double, double>> ranges;
  std::map<std::string, std::pair<double, double>> groups;
  for (std::size_t s = 0; s < cols.size(); ++s) {
    auto r = m.rows() ? column_range(cols[s]) : std::pair{0.0, 0.0};
    ranges.push_back(r);
    const auto& g = spec.strips[s].group;
    if (g.empty()) continue;
    auto [it, inserted] = groups.try_emplace(g, r);
    if (!inserted) it->second = {std::min(it->second.first, r.first), std::max(it->second.second, r.second)};
  }
  for (std::size_t s = 0; s < cols.size(); ++s)
    if (!spec.strips[s].group.empty()) ranges[s] = groups.at(spec.strips[s].group);
  return ranges;
}

Image render_strips(const FeatureMatrix& m, std::span<const std::size_t> order, const RenderSpec& spec,
                    std::optional<std::pair<std::size_t, std::size_t>> columns) {
  if (order.size() != m.rows()) throw std::invalid_argument("render: order size does not match feature rows");
  const auto ranges = strip_calibration(m, spec);
  const auto [lo, n] = columns.value_or(std::pair<std::size_t, std::size_t>{0, m.rows()});
  if (!(lo < n && n <= m.rows())) throw std::out_of_range("render: strip window outside matrix");
  const std::size_t f = downsample_factor(n - lo, spec.max_pixels);
  const std::size_t width = (n - lo + f - 1) / f;
  const bool with_type = spec.type_row && m.has_labels();
  constexpr std::size_t kGap = 2;
  const std::size_t rows = spec.strips.size() + (with_type ? 1 : 0);
  if (rows == 0 || width == 0) return Image(width, 0);
  const std::size_t height = rows * spec.strip_height + (rows - 1) * kGap + (with_type ? kGap : 0);
  Image img(width, height, {255, 255, 255});

  std::size_t top = 0;
  for (std::size_t s = 0; s < spec.strips.size(); ++s) {
    const std::size_t col = *m.schema().index_of(spec.strips[s].feature);
    const auto [cmin, cmax] = ranges[s];
    for (std::size_t u = 0; u < width; ++u) {
      const std::size_t a = lo + u * f, b = std::min(a + f, n);
      double acc = 0.0;
      for (std::size_t i = a; i < b; ++i) {
        const double v = m.at(order[i], col);
        const double t = cmax > cmin ? (v - cmin) / (cmax - cmin) : 0.5;
        acc = spec.downsample == Reducer::max ? std::max(acc, t) : acc + t;
      }
      const double t = spec.downsample == Reducer::max ? acc : acc / static_cast<double>(b - a);
      const Rgb c = spec.colormap.map(t);
      for (std::size_t y = 0; y < spec.strip_height; ++y) img.set(u, top + y, c);
    }
    top += spec.strip_height + kGap;
  }
  if (with_type) {
    top += kGap;
    for (std::size_t u = 0; u < width; ++u) {
      const std::size_t a = lo + u * f, b = std::min(a + f, n);
      std::array<std::size_t, 3> votes{};
      for (std::size_t i = a; i < b; ++i) ++votes[static_cast<std::size_t>(m.labels()[order[i]])];
      const auto winner = static_cast<Scenery>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      for (std::size_t y = 0; y < spec.strip_height; ++y) img.set(u, top + y, scenery_color(winner));
    }
  }
  return img;
}

// --- annotation ------------------------------------------------------------

namespace {

// 3x5 glyphs, one 3-bit row per entry, MSB on the left.
const std::map<char, std::array<std::uint8_t, 5>>& glyphs() {
  static const std::map<char, std::array<std::uint8_t, 5>> table = {
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
      {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
      {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'A', {2, 5, 7, 5, 5}}, {'B', {6, 5, 6, 5, 6}},
      {'C', {3, 4, 4, 4, 3}}, {'D', {6, 5, 5, 5, 6}}, {'E', {7, 4, 6, 4, 7}}, {'F', {7, 4, 6, 4, 4}},
      {'G', {3, 4, 5, 5, 3}}, {'H', {5, 5, 7, 5, 5}}, {'I', {7, 2, 2, 2, 7}}, {'J', {1, 1, 1, 5, 2}},
      {'K', {5, 5, 6, 5, 5}}, {'L', {4, 4, 4, 4, 7}}, {'M', {5, 7, 7, 5, 5}}, {'N', {6, 5, 5, 5, 5}},
      {'O', {2, 5, 5, 5, 2}}, {'P', {6, 5, 6, 4, 4}}, {'Q', {2, 5, 5, 6, 3}}, {'R', {6, 5, 6, 5, 5}},
      {'S', {3, 4, 2, 1, 6}}, {'T', {7, 2, 2, 2, 2}}, {'U', {5, 5, 5, 5, 7}}, {'V', {5, 5, 5, 5, 2}},
      {'W', {5, 5, 7, 7, 5}}, {'X', {5, 5, 2, 5, 5}}, {'Y', {5, 5, 2, 2, 2}}, {'Z', {7, 1, 2, 4, 7}},
      {'-', {0, 0, 7, 0, 0}}, {'.', {0, 0, 0, 0, 2}}, {' ', {0, 0, 0, 0, 0}}};
  return table;
}

void set_clipped(Image& img, std::size_t x, std::size_t y, Rgb c) {
  if (x < img.width && y < img.height) img.set(x, y, c);
}

}  // namespace

void draw_text(Image& img, std::size_t x, std::size_t y, std::string_view text, Rgb color, std::size_t scale) {
  for (char ch : text) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    auto it = glyphs().find(up);
    if (it != glyphs().end()) {
      for (std::size_t row = 0; row < 5; ++row)
        for (std::size_t col = 0; col < 3; ++col)
          if (it->second[row] & (4 >> col))
            for (std::size_t dy = 0; dy < scale; ++dy)
              for (std::size_t dx = 0; dx < scale; ++dx)
                set_clipped(img, x + col * scale + dx, y + row * scale + dy, color);
    }
    x += 4 * scale;
  }
}

void draw_boxes(Image& img, std::span<const BoxSpec> boxes, std::size_t matrix_size, std::size_t factor) {
  constexpr Rgb kWhite{255, 255, 255};
  for (const auto& box : boxes) {
    if (!(box.lo < box.hi && box.hi <= matrix_size)) throw std::out_of_range("draw_boxes: box outside matrix");
    const std::size_t a = box.lo / factor;
    const std::size_t b = (box.hi - 1) / factor;
    for (std::size_t t = a; t <= b; ++t) {
      set_clipped(img, t, a, kWhite);
      set_clipped(img, t, b, kWhite);
      set_clipped(img, a, t, kWhite);
      set_clipped(img, b, t, kWhite);
    }
    if (!box.label.empty()) {
      const std::size_t scale = std::max<std::size_t>(1, img.width / 256);
      draw_text(img, a + 2, b + 2 + 5 * scale <= img.height ? b + 2 : a + 2, box.label, kWhite, scale);
    }
  }
}

Image contact_sheet(std::span<const Image> images, std::size_t gap, Rgb background) {
  std::size_t width = 0, height = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    width += images[i].width + (i ? gap : 0);
    height = std::max(height, images[i].height);
  }
  Image sheet(width, height, background);
  std::size_t x0 = 0;
  for (const auto& img : images) {
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) sheet.set(x0 + x, y, img.pixel(x, y));
    x0 += img.width + gap;
  }
  return sheet;
}

// --- PNG -------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string encode_png(const Image& img) {
  if (img.width == 0 || img.height == 0) throw std::invalid_argument("png: empty image");
  std::string raw;
  raw.reserve((3 * img.width + 1) * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(img.rgb.data() + 3 * y * img.width), 3 * img.width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string z(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  z.resize(bound);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", "");
  return out;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string data = encode_png(img);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace urfclust
