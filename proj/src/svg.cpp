// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "sapphire/error.hpp"
#include "sapphire/pipeline.hpp"

namespace sapphire {

namespace {

constexpr double kWidth = 1000.0;
constexpr double kPlotHeight = 300.0;
constexpr double kStripHeight = 18.0;
constexpr double kMargin = 40.0;
constexpr std::size_t kColumns = 1000;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
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

// Blue-to-red ramp for continuous annotations.
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 200 * t));
  const int g = static_cast<int>(std::lround(80 + 60 * (1.0 - std::abs(2 * t - 1))));
  const int b = static_cast<int>(std::lround(240 - 200 * t));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void emit_sapphire_svg(const ProgressTable& table, const std::filesystem::path& path) {
  const std::size_t n = table.size();
  if (n < 2) fail(ErrorCode::invalid_argument, "plot needs at least 2 rows");
  const double strips_top = kMargin + kPlotHeight + 10.0;
  const double height =
      strips_top + static_cast<double>(table.annotations.size()) * (kStripHeight + 4.0) + kMargin;
  const double total_width = kWidth + 2 * kMargin;

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(total_width)
      << "\" height=\"" << fmt(height) << "\" viewBox=\"0 0 " << fmt(total_width) << ' '
      << fmt(height) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  auto x_of = [&](double p) { return kMargin + kWidth * p / static_cast<double>(n - 1); };

  // Cut curve on log10(c + 1) so zero cuts stay on the axis.
  std::uint64_t cmax = 1;
  for (std::size_t p = 1; p < n; ++p) cmax = std::max(cmax, table.cut[p].value_or(0));
  const double lmax = std::log10(static_cast<double>(cmax) + 1.0);
  auto y_of = [&](std::uint64_t c) {
    return kMargin + kPlotHeight * (1.0 - std::log10(static_cast<double>(c) + 1.0) / lmax);
  };
  out << "<rect class=\"frame\" x=\"" << fmt(kMargin) << "\" y=\"" << fmt(kMargin)
      << "\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kPlotHeight)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << fmt(kMargin) << "\" y=\"" << fmt(kMargin - 8)
      << "\" font-size=\"12\">cut count (log scale, max " << cmax << "), N = " << n
      << "</text>\n";
  out << "<polyline class=\"cut\" fill=\"none\" stroke=\"#111\" stroke-width=\"1\" points=\"";
  // With more splits than columns, keep the minimum per column so barriers survive.
  const std::size_t splits = n - 1;
  const std::size_t step = std::max<std::size_t>(1, splits / (2 * kColumns));
  for (std::size_t p = 1; p < n; p += step) {
    std::uint64_t c = table.cut[p].value_or(0);
    std::size_t best = p;
    for (std::size_t q = p + 1; q < std::min(n, p + step); ++q)
      if (table.cut[q].value_or(0) < c) {
        c = table.cut[q].value_or(0);
        best = q;
      }
    out << fmt(x_of(static_cast<double>(best))) << ',' << fmt(y_of(c)) << ' ';
  }
  out << "\"/>\n";

  for (std::size_t a = 0; a < table.annotations.size(); ++a) {
    const auto& column = table.annotations[a];
    const std::string& name = table.annotation_names[a];
    const bool categorical = name == "label";
    const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    const double y = strips_top + static_cast<double>(a) * (kStripHeight + 4.0);
    out << "<g class=\"strip\" data-name=\"" << escape(name) << "\">\n";
    out << "<text x=\"2\" y=\"" << fmt(y + kStripHeight - 4)
        << "\" font-size=\"10\">" << escape(name) << "</text>\n";

    const std::size_t bins = std::min(kColumns, n);
    auto colour_at = [&](std::size_t bin) {
      const std::size_t p0 = bin * n / bins;
      const std::size_t p1 = std::max(p0 + 1, (bin + 1) * n / bins);
      if (categorical) {
        const auto label = static_cast<long long>(std::llround(column[p0]));
        const auto idx = static_cast<std::size_t>(((label % 10) + 10) % 10);
        return std::string(kPalette[idx]);
      }
      double sum = 0.0;
      for (std::size_t p = p0; p < std::min(p1, n); ++p) sum += column[p];
      const double mean = sum / static_cast<double>(std::min(p1, n) - p0);
      return ramp(span > 0.0 ? (mean - lo) / span : 0.5);
    };

    std::size_t run_start = 0;
    std::string run_colour = colour_at(0);
    for (std::size_t bin = 1; bin <= bins; ++bin) {
      const std::string c = bin < bins ? colour_at(bin) : std::string();
      if (bin < bins && c == run_colour) continue;
      const double x0 = kMargin + kWidth * static_cast<double>(run_start) / static_cast<double>(bins);
      const double x1 = kMargin + kWidth * static_cast<double>(bin) / static_cast<double>(bins);
      out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(x1 - x0)
          << "\" height=\"" << fmt(kStripHeight) << "\" fill=\"" << run_colour << "\"/>\n";
      run_start = bin;
      run_colour = c;
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  if (!out) fail(ErrorCode::io, "write failed on " + path.string());
}

}  // namespace sapphire
