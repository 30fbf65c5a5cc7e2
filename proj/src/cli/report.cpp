#include "xmixup/report.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "xmixup/errors.hpp"
#include "xmixup/format.hpp"

namespace xmixup {

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::vector<StrategySummary> summarize(const std::vector<RunMetrics>& runs) {
  std::map<std::string, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) groups[r.strategy].push_back(&r);
  std::vector<StrategySummary> out;
  for (const auto& [name, group] : groups) {
    auto collect = [&](double RunMetrics::*field) {
      std::vector<double> v;
      for (const RunMetrics* r : group) v.push_back(r->*field);
      return mean_std(v);
    };
    out.push_back({name, group.size(), collect(&RunMetrics::accuracy), collect(&RunMetrics::forgetting_aux),
                   collect(&RunMetrics::forgetting_aba), collect(&RunMetrics::spectrum_tail_mean)});
  }
  return out;
}

void write_comparison_csv(std::vector<RunMetrics> runs, std::ostream& out) {
  std::sort(runs.begin(), runs.end(), [](const RunMetrics& a, const RunMetrics& b) {
    return a.strategy != b.strategy ? a.strategy < b.strategy : a.seed < b.seed;
  });
  out << "strategy,seed,accuracy,forgetting_aux,forgetting_aba,spectrum_tail_mean\n";
  for (const auto& r : runs) {
    out << r.strategy << ',' << r.seed << ',' << format_double(r.accuracy) << ',' << format_double(r.forgetting_aux)
        << ',' << format_double(r.forgetting_aba) << ',' << format_double(r.spectrum_tail_mean) << '\n';
  }
}

std::vector<RunMetrics> read_comparison_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  std::vector<RunMetrics> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_fields(line);
    RunMetrics m;
    long long seed = 0;
    if (f.size() != 6 || !parse_int(f[1], seed) || !parse_double(f[2], m.accuracy) ||
        !parse_double(f[3], m.forgetting_aux) || !parse_double(f[4], m.forgetting_aba) ||
        !parse_double(f[5], m.spectrum_tail_mean)) {
      throw ParseError("malformed comparison row", lineno);
    }
    m.strategy = std::string(f[0]);
    m.seed = static_cast<std::uint64_t>(seed);
    out.push_back(std::move(m));
  }
  return out;
}

void write_summary_csv(const std::vector<StrategySummary>& rows, std::ostream& out) {
  out << "strategy,runs,accuracy_mean,accuracy_std,forgetting_aux_mean,forgetting_aux_std,"
         "forgetting_aba_mean,forgetting_aba_std,spectrum_tail_mean_mean,spectrum_tail_mean_std\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.runs;
    for (const MeanStd* m : {&r.accuracy, &r.forgetting_aux, &r.forgetting_aba, &r.spectrum_tail_mean}) {
      out << ',' << format_double(m->mean) << ',' << format_double(m->std);
    }
    out << '\n';
  }
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

}  // namespace

std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, left = 70, right = 160, top = 40, bottom = 60;
  auto tx = [&](double x) { return spec.log2_x ? std::log2(x) : x; };

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, tx(x));
      x1 = std::max(x1, tx(x));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.05, y1 += 0.05;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(W / 2 - right / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(spec.title) + "</text>\n";
  svg += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" + fixed(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    svg += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(yv) + 4) + "\" text-anchor=\"end\">" + fixed(yv, 3) +
           "</text>\n";
    const double xpos = left + (xv - x0) / (x1 - x0) * pw;
    svg += "<text x=\"" + fixed(xpos) + "\" y=\"" + fixed(top + ph + 18) + "\" text-anchor=\"middle\">" +
           (spec.log2_x ? "2^" + fixed(xv, 1) : fixed(xv, 1)) + "</text>\n";
  }
  svg += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(H - 15) + "\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         escape(spec.y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    auto pts = s.points;
    std::sort(pts.begin(), pts.end());
    std::string path;
    for (auto [x, y] : pts) path += (path.empty() ? "" : " ") + fixed(px(x)) + "," + fixed(py(y));
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + path +
           "\"/>\n";
    for (auto [x, y] : pts) {
      svg += "<circle cx=\"" + fixed(px(x)) + "\" cy=\"" + fixed(py(y)) + "\" r=\"3\" fill=\"" + colour + "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + fixed(W - right + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(W - right + 30) +
           "\" y2=\"" + fixed(ly) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fixed(W - right + 36) + "\" y=\"" + fixed(ly + 4) + "\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace xmixup
