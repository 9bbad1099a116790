#include "faultforge/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ff {

namespace {

constexpr int kWidth = 760;
constexpr int kPanelHeight = 220;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 34;
constexpr int kMarginBottom = 40;

const char* kPhaseColor[3] = {"#d62728", "#2ca02c", "#1f77b4"};
const char* kQColor[3] = {"#ff9896", "#98df8a", "#aec7e8"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Panel {
  std::string title;
  std::string y_label;
  // One polyline per series; x in ohms, y in the panel's unit.
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
};

void render_panel(std::ostringstream& out, const Panel& panel, int top,
                  const std::vector<double>& infeasible_x) {
  const int plot_w = kWidth - kMarginLeft - kMarginRight;
  const int plot_h = kPanelHeight - kMarginTop - kMarginBottom;
  const int x0 = kMarginLeft, y0 = top + kMarginTop;

  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& [_, pts] : panel.series)
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax <= xmin) { xmin = 1e-3; xmax = 1.0; }
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double pad = 0.06 * (ymax - ymin);
  ymax += pad;
  if (ymin < 0.0) ymin -= pad;

  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax);
  auto px = [&](double x) { return x0 + (std::log10(x) - lx0) / (lx1 - lx0) * plot_w; };
  auto py = [&](double y) { return y0 + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  out << "<rect x='" << x0 << "' y='" << y0 << "' width='" << plot_w << "' height='"
      << plot_h << "' fill='white' stroke='#444'/>\n";
  out << "<text x='" << x0 << "' y='" << top + 18 << "' font-size='13' fill='#222'>"
      << panel.title << "</text>\n";

  // Decade grid on x, four ticks on y.
  for (int d = static_cast<int>(std::ceil(lx0)); d <= static_cast<int>(std::floor(lx1)); ++d) {
    const double x = std::pow(10.0, d);
    out << "<line x1='" << fmt(px(x)) << "' y1='" << y0 << "' x2='" << fmt(px(x)) << "' y2='"
        << y0 + plot_h << "' stroke='#ddd'/>\n";
    out << "<text x='" << fmt(px(x)) << "' y='" << y0 + plot_h + 16
        << "' font-size='10' text-anchor='middle'>1e" << d << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4;
    out << "<line x1='" << x0 << "' y1='" << fmt(py(y)) << "' x2='" << x0 + plot_w << "' y2='"
        << fmt(py(y)) << "' stroke='#eee'/>\n";
    out << "<text x='" << x0 - 6 << "' y='" << fmt(py(y) + 3)
        << "' font-size='10' text-anchor='end'>" << fmt(y) << "</text>\n";
  }
  out << "<text x='" << x0 - 52 << "' y='" << y0 + plot_h / 2
      << "' font-size='11' transform='rotate(-90 " << x0 - 52 << " " << y0 + plot_h / 2
      << ")' text-anchor='middle'>" << panel.y_label << "</text>\n";
  out << "<text x='" << x0 + plot_w / 2 << "' y='" << y0 + plot_h + 30
      << "' font-size='11' text-anchor='middle'>fault resistance (ohm)</text>\n";

  int color_idx = 0;
  int legend_x = x0 + 8;
  for (const auto& [label, pts] : panel.series) {
    const char* color = panel.series.size() > 3 && color_idx >= 3
                            ? kQColor[color_idx - 3]
                            : kPhaseColor[color_idx % 3];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : pts) out << fmt(px(x)) << "," << fmt(py(y)) << " ";
    out << "'/>\n";
    out << "<text x='" << legend_x << "' y='" << y0 + 14 << "' font-size='10' fill='" << color
        << "'>" << label << "</text>\n";
    legend_x += 12 * static_cast<int>(label.size()) / 2 + 18;
    ++color_idx;
  }

  for (double x : infeasible_x)
    out << "<line x1='" << fmt(px(x)) << "' y1='" << y0 << "' x2='" << fmt(px(x)) << "' y2='"
        << y0 + 10 << "' stroke='#d62728' stroke-width='3'/>\n";
}

}  // namespace

std::string sweep_to_svg(const SweepResult& result, const std::string& title) {
  std::vector<double> infeasible_x;
  for (const SweepRow& row : result.rows)
    if (row.status != SolveStatus::Feasible) infeasible_x.push_back(row.r_fault_ohm);

  auto series_of = [&](const PhaseMap<double> SweepRow::* member, const char* prefix) {
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> out;
    for (Phase p : kAllPhases) {
      std::vector<std::pair<double, double>> pts;
      for (const SweepRow& row : result.rows) {
        const auto& m = row.*member;
        auto it = m.find(p);
        if (it != m.end()) pts.emplace_back(row.r_fault_ohm, it->second);
      }
      if (!pts.empty())
        out.emplace_back(std::string(prefix) + phase_label(p), std::move(pts));
    }
    return out;
  };

  Panel current{"Fault current vs fault resistance", "current (A)",
                series_of(&SweepRow::fault_current_a, "If_")};
  Panel voltage{"Faulted-bus voltage vs fault resistance", "voltage (pu)",
                series_of(&SweepRow::faulted_bus_v_pu, "V_")};
  Panel power{"Inverter power vs fault resistance", "power (pu)",
              series_of(&SweepRow::inverter_p_pu, "P_")};
  for (auto& s : series_of(&SweepRow::inverter_q_pu, "Q_")) power.series.push_back(std::move(s));

  std::ostringstream out;
  const int total_h = 3 * kPanelHeight + 28;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << total_h
      << "' font-family='sans-serif'>\n";
  out << "<rect width='100%' height='100%' fill='#fafafa'/>\n";
  out << "<text x='" << kWidth / 2 << "' y='18' font-size='15' text-anchor='middle'>" << title
      << "</text>\n";
  render_panel(out, current, 28, infeasible_x);
  render_panel(out, voltage, 28 + kPanelHeight, infeasible_x);
  render_panel(out, power, 28 + 2 * kPanelHeight, infeasible_x);
  out << "</svg>\n";
  return out.str();
}

}  // namespace ff
