#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gdml/error.hpp"
#include "gdml/evaluation.hpp"

namespace gdml {

namespace {

constexpr std::array<std::array<double, 3>, 5> kRamp{{
    {68, 1, 84},
    {59, 82, 139},
    {33, 145, 140},
    {94, 201, 98},
    {253, 231, 37},
}};

constexpr double kRadius = 10.0;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string heat_color(double t) {
  t = std::clamp(std::isnan(t) ? 0.0 : t, 0.0, 1.0);
  const double x = t * static_cast<double>(kRamp.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), kRamp.size() - 2);
  const double f = x - static_cast<double>(i);
  std::array<int, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    rgb[c] = static_cast<int>(std::lround(kRamp[i][c] + f * (kRamp[i + 1][c] - kRamp[i][c])));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

std::vector<double> normalize_unit(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.5);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

std::string render_heatmap_svg(std::span<const std::array<int, 2>> coords, std::span<const double> values,
                               std::span<const std::string> spot_ids, const std::string& title) {
  if (coords.size() != values.size() || spot_ids.size() != values.size()) {
    throw ContractError(fmt::format("heatmap: {} coords, {} values, {} ids", coords.size(), values.size(), spot_ids.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("heatmap: non-finite value");
  }
  const auto t = normalize_unit(values);
  const double w = std::sqrt(3.0) * kRadius;
  auto centre = [&](const std::array<int, 2>& rc) {
    const double x = w * (rc[1] + ((rc[0] % 2 != 0) ? 0.5 : 0.0));
    const double y = 1.5 * kRadius * rc[0];
    return std::array<double, 2>{x, y};
  };

  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto [x, y] = centre(coords[i]);
    if (i == 0 || x < min_x) min_x = x;
    if (i == 0 || y < min_y) min_y = y;
    if (i == 0 || x > max_x) max_x = x;
    if (i == 0 || y > max_y) max_y = y;
  }
  const double pad = kRadius * 1.5;
  const double width = max_x - min_x + 2 * pad, height = max_y - min_y + 2 * pad + 20.0;

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.1f}\" height=\"{1:.1f}\" viewBox=\"0 0 {0:.1f} {1:.1f}\">\n"
      "<title>{2}</title>\n<text x=\"{3:.1f}\" y=\"14\" font-family=\"sans-serif\" font-size=\"12\">{2}</text>\n",
      width, height, escape(title), pad);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto [cx0, cy0] = centre(coords[i]);
    const double cx = cx0 - min_x + pad, cy = cy0 - min_y + pad + 20.0;
    std::string points;
    for (int k = 0; k < 6; ++k) {
      const double a = std::numbers::pi / 180.0 * (60.0 * k - 30.0);
      points += fmt::format("{}{:.2f},{:.2f}", k ? " " : "", cx + kRadius * std::cos(a), cy + kRadius * std::sin(a));
    }
    svg += fmt::format(
        "<polygon class=\"spot\" data-id=\"{}\" data-row=\"{}\" data-col=\"{}\" data-value=\"{:.17g}\" fill=\"{}\" "
        "points=\"{}\"/>\n",
        escape(spot_ids[i]), coords[i][0], coords[i][1], t[i], heat_color(t[i]), points);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace gdml
