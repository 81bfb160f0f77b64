#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ochoice/dataset.hpp"
#include "ochoice/econ.hpp"
#include "ochoice/evaluation.hpp"
#include "ochoice/jenks.hpp"

namespace ochoice {

namespace report_detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace report_detail

/// Coefficient table with t-stats in parentheses, followed by the summary
/// rows (observations, parameter count, log-likelihood, AIC, accuracy).
/// absolute_ll prints |LL| for side-by-side reading against tables that
/// drop the sign; the stored value is always the true (negative) one.
inline std::string render_fit_report_text(const FitReport& r,
                                          bool absolute_ll = false) {
  using report_detail::fixed;
  using report_detail::pad;
  const double ll_display =
      absolute_ll ? std::abs(r.log_likelihood) : r.log_likelihood;
  const double choice_ll_display =
      absolute_ll ? std::abs(r.choice_log_likelihood)
                  : r.choice_log_likelihood;
  std::size_t name_w = 31;  // widest footer label
  for (const auto& row : r.rows) name_w = std::max(name_w, row.name.size());
  name_w += 2;

  std::ostringstream os;
  os << "Model: " << r.model_kind << "\n";
  os << pad("Variable", name_w) << pad("Value", 12) << "t-stats*\n";
  os << std::string(name_w + 20, '-') << "\n";
  for (const auto& row : r.rows) {
    os << pad(row.name, name_w) << pad(fixed(row.value, 3), 12);
    os << (row.has_t ? "(" + fixed(row.t_stat, 3) + ")" : "-");
    os << "\n";
  }
  os << std::string(name_w + 20, '-') << "\n";
  os << pad("No. observation", name_w) << r.n_observations << "\n";
  os << pad("No. parameters", name_w) << r.n_params << "\n";
  if (r.model_kind == "ordinal_reslogit") {
    os << pad("Log-likelihood (binary tasks)", name_w)
       << fixed(ll_display, 2) << "\n";
    os << pad("Log-likelihood (choice)", name_w)
       << fixed(choice_ll_display, 2) << "\n";
  } else {
    os << pad("Log-likelihood", name_w) << fixed(ll_display, 2) << "\n";
  }
  os << pad("AIC", name_w) << fixed(r.aic, 2) << "\n";
  os << pad("Validation accuracy", name_w)
     << fixed(100.0 * r.validation_accuracy, 2) << "%\n";
  os << "* t-stats are outlined in the parenthesis\n";
  if (!r.caveat.empty()) os << "Note: " << r.caveat << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV emitters. Numeric cells use round-trip formatting.
// ---------------------------------------------------------------------------

inline std::string market_share_csv(const Eigen::VectorXd& shares,
                                    const std::string& mode) {
  std::ostringstream os;
  os << "category,share,mode\n";
  for (long k = 0; k < shares.size(); ++k)
    os << (k + 1) << ',' << detail::format_double(shares[k]) << ',' << mode
       << "\n";
  return os.str();
}

inline std::string substitution_curve_csv(const SubstitutionCurve& c) {
  std::ostringstream os;
  os << c.variable;
  for (long k = 0; k < c.shares.cols(); ++k) os << ",category" << (k + 1);
  os << "\n";
  for (std::size_t g = 0; g < c.grid.size(); ++g) {
    os << detail::format_double(c.grid[g]);
    for (long k = 0; k < c.shares.cols(); ++k)
      os << ',' << detail::format_double(c.shares(static_cast<long>(g), k));
    os << "\n";
  }
  return os.str();
}

inline std::string elasticity_csv(const std::vector<ElasticityResult>& rows) {
  std::ostringstream os;
  os << "variable,category,elasticity,excluded_observations\n";
  for (const auto& e : rows)
    for (long k = 0; k < e.aggregate.size(); ++k)
      os << e.variable << ',' << (k + 1) << ','
         << detail::format_double(e.aggregate[k]) << ',' << e.excluded << "\n";
  return os.str();
}

inline std::string binary_effect_csv(const BinaryEffect& b) {
  std::ostringstream os;
  os << "variable,category,mean_change,mean_change_from0,mean_change_from1\n";
  for (long k = 0; k < b.mean_change.size(); ++k)
    os << b.variable << ',' << (k + 1) << ','
       << detail::format_double(b.mean_change[k]) << ','
       << detail::format_double(b.mean_change_from0[k]) << ','
       << detail::format_double(b.mean_change_from1[k]) << "\n";
  os << b.variable << ",expected_value_delta,"
     << detail::format_double(b.expected_value_delta) << ",,\n";
  return os.str();
}

inline std::string category_summary_csv(const Breaks& b) {
  std::ostringstream os;
  os << "category,lower,upper,count,share\n";
  const int k = b.n_classes();
  for (int c = 0; c < k; ++c) {
    const double lo = c == 0 ? b.lower_bound
                             : b.thresholds[static_cast<std::size_t>(c - 1)];
    const double hi = c == k - 1 ? b.upper_bound
                                 : b.thresholds[static_cast<std::size_t>(c)];
    os << (c + 1) << ',' << detail::format_double(lo) << ','
       << detail::format_double(hi) << ','
       << b.category_counts[static_cast<std::size_t>(c)] << ','
       << detail::format_double(b.category_shares[static_cast<std::size_t>(c)])
       << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Static SVG line charts for substitution curves: one series per category.
// ---------------------------------------------------------------------------

inline std::string substitution_curve_svg(const SubstitutionCurve& c) {
  static const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c",
                                   "#8f2d56", "#e09f3e", "#335c67",
                                   "#6d597a", "#99582a"};
  const int width = 760, height = 480;
  const int ml = 70, mr = 160, mt = 50, mb = 60;
  const double plot_w = width - ml - mr;
  const double plot_h = height - mt - mb;

  const double x_min = c.grid.front();
  const double x_max = c.grid.back();
  const double x_span = x_max > x_min ? x_max - x_min : 1.0;
  const double y_max = std::max(1e-9, c.shares.maxCoeff());

  auto px = [&](double x) { return ml + (x - x_min) / x_span * plot_w; };
  auto py = [&](double y) { return mt + (1.0 - y / y_max) * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"16\">Substitution pattern: "
     << c.variable << "</text>\n";

  // Axes with five ticks each.
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\""
     << ml + plot_w << "\" y2=\"" << mt + plot_h
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_min + x_span * t / 4.0;
    const double yv = y_max * t / 4.0;
    os << "<line x1=\"" << px(xv) << "\" y1=\"" << mt + plot_h << "\" x2=\""
       << px(xv) << "\" y2=\"" << mt + plot_h + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << mt + plot_h + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << report_detail::fixed(xv, 2) << "</text>\n";
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml
       << "\" y2=\"" << py(yv) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 9 << "\" y=\"" << py(yv) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << report_detail::fixed(yv, 2) << "</text>\n";
  }
  os << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 14
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\">"
     << c.variable << "</text>\n";
  os << "<text x=\"18\" y=\"" << mt + plot_h / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\" transform=\"rotate(-90 18 "
     << mt + plot_h / 2 << ")\">choice probability</text>\n";

  for (long k = 0; k < c.shares.cols(); ++k) {
    const char* color = kPalette[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t g = 0; g < c.grid.size(); ++g)
      os << px(c.grid[g]) << ',' << py(c.shares(static_cast<long>(g), k))
         << ' ';
    os << "\"/>\n";
    const double ly = mt + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << ml + plot_w + 12 << "\" y1=\"" << ly + 10
       << "\" x2=\"" << ml + plot_w + 34 << "\" y2=\"" << ly + 10
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + plot_w + 40 << "\" y=\"" << ly + 14
       << "\" font-family=\"sans-serif\" font-size=\"12\">category " << (k + 1)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ochoice
