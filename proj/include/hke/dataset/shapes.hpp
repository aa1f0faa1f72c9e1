#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/dataset/latent.hpp"

namespace hke {

// Rendering conventions for the synthetic shape set. None of these values are
// prescribed anywhere; they are chosen so the three factors stay visible at
// 32x32.
namespace shapes {

inline constexpr int kCanvas = 32;
inline constexpr int kSupersample = 4;
inline constexpr double kBaseHalfSize = 9.0;  // pixels
inline constexpr double kStretch = 1.35;

inline constexpr std::array<std::string_view, 3> kShapes{"triangle", "circle", "rectangle"};
inline constexpr std::array<std::string_view, 3> kDeformations{"none", "vstretch", "hstretch"};
inline constexpr std::array<std::string_view, 5> kColors{"red", "green", "blue", "yellow", "purple"};
inline constexpr std::array<std::string_view, 3> kThicknesses{"thin", "medium", "thick"};

struct Rgb {
  double r, g, b;
};

inline Rgb color_value(std::string_view name) {
  if (name == "red") return {0.85, 0.12, 0.12};
  if (name == "green") return {0.15, 0.65, 0.20};
  if (name == "blue") return {0.15, 0.25, 0.85};
  if (name == "yellow") return {0.95, 0.80, 0.10};
  if (name == "purple") return {0.55, 0.20, 0.70};
  throw ValidationError("unknown color '" + std::string(name) + "'");
}

inline const char* color_hex(std::string_view name) {
  if (name == "red") return "#d91f1f";
  if (name == "green") return "#26a633";
  if (name == "blue") return "#2640d9";
  if (name == "yellow") return "#f2cc1a";
  if (name == "purple") return "#8c33b3";
  throw ValidationError("unknown color '" + std::string(name) + "'");
}

/// Stroke width in raster pixels.
inline double stroke_width(std::string_view thickness) {
  if (thickness == "thin") return 1.0;
  if (thickness == "medium") return 2.2;
  if (thickness == "thick") return 3.6;
  throw ValidationError("unknown thickness '" + std::string(thickness) + "'");
}

/// Half extents (x, y) of the shape's bounding box in raster pixels.
inline std::array<double, 2> half_extents(std::string_view deformation) {
  if (deformation == "none") return {kBaseHalfSize, kBaseHalfSize};
  if (deformation == "vstretch") return {kBaseHalfSize / kStretch, kBaseHalfSize * kStretch};
  if (deformation == "hstretch") return {kBaseHalfSize * kStretch, kBaseHalfSize / kStretch};
  throw ValidationError("unknown deformation '" + std::string(deformation) + "'");
}

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

/// Unsigned distance from (x, y), relative to the shape center, to the outline.
inline double outline_distance(std::string_view shape, double hx, double hy, double x, double y) {
  if (shape == "circle") {
    const double u = x / hx, v = y / hy;
    const double r = std::sqrt(u * u + v * v);
    if (r == 0.0) return std::min(hx, hy);
    const double gx = u / (hx * r), gy = v / (hy * r);
    return std::abs(r - 1.0) / std::sqrt(gx * gx + gy * gy);
  }
  if (shape == "rectangle") {
    const double dx = std::abs(x) - hx, dy = std::abs(y) - hy;
    if (dx > 0 || dy > 0) return std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
    return std::min(-dx, -dy);
  }
  if (shape == "triangle") {
    // apex up, base at the bottom (raster y grows downward)
    const double ax = 0, ay = -hy, bx = -hx, by = hy, cx = hx, cy = hy;
    return std::min({segment_distance(x, y, ax, ay, bx, by), segment_distance(x, y, bx, by, cx, cy),
                     segment_distance(x, y, cx, cy, ax, ay)});
  }
  throw ValidationError("unknown shape '" + std::string(shape) + "'");
}

/// Renders a stimulus to a kCanvas x kCanvas RGB raster, white background,
/// channel-interleaved, values in [0, 1]. `offset` shifts the shape center.
inline std::vector<double> rasterize(const Stimulus& s, double offset_x = 0.0, double offset_y = 0.0) {
  const auto [hx, hy] = half_extents(s.deformation);
  const double half_width = stroke_width(s.thickness) / 2.0;
  const Rgb ink = color_value(s.color);
  const double center = kCanvas / 2.0;
  std::vector<double> out(static_cast<std::size_t>(kCanvas * kCanvas * 3));
  for (int py = 0; py < kCanvas; ++py) {
    for (int px = 0; px < kCanvas; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double x = px + (sx + 0.5) / kSupersample - center - offset_x;
          const double y = py + (sy + 0.5) / kSupersample - center - offset_y;
          if (outline_distance(s.shape, hx, hy, x, y) <= half_width) ++hits;
        }
      }
      const double cover = static_cast<double>(hits) / (kSupersample * kSupersample);
      const std::size_t base = static_cast<std::size_t>((py * kCanvas + px) * 3);
      out[base + 0] = 1.0 - cover * (1.0 - ink.r);
      out[base + 1] = 1.0 - cover * (1.0 - ink.g);
      out[base + 2] = 1.0 - cover * (1.0 - ink.b);
    }
  }
  return out;
}

inline ConceptNode ground_truth_tree() {
  ConceptNode root{"shapes", {}};
  for (auto shape : kShapes) {
    ConceptNode s{std::string(shape), {}};
    for (auto deformation : kDeformations) {
      ConceptNode d{std::string(deformation), {}};
      for (auto thickness : kThicknesses) d.children.push_back({std::string(thickness), {}});
      s.children.push_back(std::move(d));
    }
    root.children.push_back(std::move(s));
  }
  return root;
}

}  // namespace shapes

struct ShapeSet {
  Dataset dataset;
  LatentHierarchy hierarchy;
};

/// 3 shapes x 3 deformations x 5 colors x 3 thicknesses = 135 items. Labels
/// follow the shape-bias ground truth shape -> deformation -> thickness
/// (color deliberately absent). The seed only jitters each item's position
/// by up to one pixel.
inline ShapeSet generate_shapes(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::vector<Item> items;
  ItemId next = 0;
  for (auto shape : shapes::kShapes) {
    for (auto deformation : shapes::kDeformations) {
      for (auto color : shapes::kColors) {
        for (auto thickness : shapes::kThicknesses) {
          Item item;
          item.id = next++;
          item.stimulus = Stimulus{std::string(shape), std::string(deformation), std::string(color),
                                   std::string(thickness), {}};
          item.label_path = {std::string(shape), std::string(deformation), std::string(thickness)};
          const double ox = jitter(rng);
          const double oy = jitter(rng);
          item.features = shapes::rasterize(*item.stimulus, ox, oy);
          items.push_back(std::move(item));
        }
      }
    }
  }
  const std::size_t dim = static_cast<std::size_t>(shapes::kCanvas * shapes::kCanvas * 3);
  return {Dataset("shapes", dim, std::move(items)), LatentHierarchy(shapes::ground_truth_tree())};
}

namespace detail {
inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace detail

/// Standalone SVG for an item. Shape items are drawn on a 100x100 view box;
/// anything else becomes a placeholder glyph showing the item id.
inline std::string render_stimulus(const Item& item) {
  using detail::svg_num;
  const double scale = 100.0 / shapes::kCanvas;
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"160\" height=\"160\" viewBox=\"0 0 100 100\">"
      "<rect x=\"0\" y=\"0\" width=\"100\" height=\"100\" fill=\"#ffffff\"/>";
  if (!item.stimulus || !item.stimulus->is_shape()) {
    svg += "<rect x=\"5\" y=\"5\" width=\"90\" height=\"90\" fill=\"#eeeeee\" stroke=\"#999999\"/>";
    svg += "<text x=\"50\" y=\"56\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">#" +
           std::to_string(item.id) + "</text></svg>";
    return svg;
  }
  const Stimulus& s = *item.stimulus;
  const auto [hx_px, hy_px] = shapes::half_extents(s.deformation);
  const double hx = hx_px * scale, hy = hy_px * scale;
  const std::string stroke = std::string("fill=\"none\" stroke=\"") + shapes::color_hex(s.color) +
                             "\" stroke-width=\"" + svg_num(shapes::stroke_width(s.thickness) * scale) + "\"";
  if (s.shape == "circle") {
    svg += "<ellipse cx=\"50.00\" cy=\"50.00\" rx=\"" + svg_num(hx) + "\" ry=\"" + svg_num(hy) + "\" " + stroke + "/>";
  } else if (s.shape == "rectangle") {
    svg += "<rect x=\"" + svg_num(50 - hx) + "\" y=\"" + svg_num(50 - hy) + "\" width=\"" + svg_num(2 * hx) +
           "\" height=\"" + svg_num(2 * hy) + "\" " + stroke + "/>";
  } else if (s.shape == "triangle") {
    svg += "<polygon points=\"" + svg_num(50) + "," + svg_num(50 - hy) + " " + svg_num(50 - hx) + "," +
           svg_num(50 + hy) + " " + svg_num(50 + hx) + "," + svg_num(50 + hy) + "\" " + stroke + "/>";
  } else {
    throw ValidationError("unknown shape '" + s.shape + "'");
  }
  svg += "</svg>";
  return svg;
}

}  // namespace hke
