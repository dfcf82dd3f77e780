#include "fgpl/pipeline/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace fgpl::pipe {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c",
                                                 "#9467bd", "#ff7f0e", "#17becf"};

}  // namespace

std::string format_row(const MetricsRow& r) {
  std::string out = r.stage + "," + std::to_string(r.iter) + "," + num(r.seconds);
  for (const auto* v : {&r.mean_reward, &r.r_align, &r.r_video, &r.r_image, &r.r_motion, &r.kl,
                        &r.clip_frac, &r.grad_norm, &r.validity}) {
    out += "," + cell(*v);
  }
  return out;
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write metrics file " + path);
  out_ << kMetricsHeader << "\n";
  out_.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
  if (row.stage.find(',') != std::string::npos) {
    throw std::invalid_argument("metrics stage name contains a comma: " + row.stage);
  }
  if (any_ && row.stage == last_stage_ && row.iter < last_iter_) {
    throw std::logic_error("metrics iteration went backwards in stage " + row.stage);
  }
  any_ = true;
  last_stage_ = row.stage;
  last_iter_ = row.iter;
  out_ << format_row(row) << "\n";
  out_.flush();
}

MetricsTable parse_csv(const std::string& text) {
  MetricsTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      for (const auto& h : cells) {
        if (h.empty()) throw CsvError(n, "empty column name in header");
      }
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw CsvError(n, "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    if (t.text.empty()) t.text.assign(t.header.size(), std::nullopt);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      const bool text = !parse_double(cells[c]).has_value();
      if (!t.text[c]) t.text[c] = text;
      if (*t.text[c] != text) {
        throw CsvError(n, "column " + t.header[c] + " mixes text and numbers: '" + cells[c] + "'");
      }
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw CsvError(n, "no header");
  t.text.resize(t.header.size(), std::nullopt);
  return t;
}

std::string metrics_svg(const MetricsTable& t, const std::string& title) {
  const auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - t.header.begin());
  };
  const auto iter_col = col("iter");
  const auto stage_col = col("stage");

  std::vector<std::size_t> metrics;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const bool text = c < t.text.size() && t.text[c].value_or(false);
    if (c != iter_col && c != stage_col && !text) metrics.push_back(c);
  }

  constexpr double kW = 640, kH = 180, kPad = 50, kTop = 40;
  const double height = kTop + kH * static_cast<double>(std::max<std::size_t>(metrics.size(), 1));
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n";

  for (std::size_t k = 0; k < metrics.size(); ++k) {
    const std::size_t c = metrics[k];
    const double y0 = kTop + kH * static_cast<double>(k);
    const double px0 = kPad, px1 = kW - 20, py0 = y0 + 20, py1 = y0 + kH - 30;
    s << "<g class=\"panel\" data-column=\"" << escape(t.header[c]) << "\">\n";
    s << "<text x=\"" << px0 << "\" y=\"" << y0 + 12 << "\">" << escape(t.header[c]) << "</text>\n";

    // Series keyed by stage so multi-stage files do not zigzag.
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto y = parse_double(t.rows[r][c]);
      if (!y) continue;
      const double x = iter_col ? parse_double(t.rows[r][*iter_col]).value_or(static_cast<double>(r))
                                : static_cast<double>(r);
      const std::string key = stage_col ? t.rows[r][*stage_col] : "";
      if (!series.count(key)) order.push_back(key);
      series[key].emplace_back(x, *y);
    }
    if (series.empty()) {
      s << "<text class=\"note\" x=\"" << (px0 + px1) / 2 << "\" y=\"" << (py0 + py1) / 2
        << "\" text-anchor=\"middle\" fill=\"gray\">no data in column " << escape(t.header[c])
        << "</text>\n</g>\n";
      continue;
    }
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& [_, pts] : series) {
      for (const auto& [x, y] : pts) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) {
      ymin -= 0.5;
      ymax += 0.5;
    }
    const auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0); };
    const auto sy = [&](double y) { return py1 - (y - ymin) / (ymax - ymin) * (py1 - py0); };

    s << "<line x1=\"" << px0 << "\" y1=\"" << py1 << "\" x2=\"" << px1 << "\" y2=\"" << py1
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 << "\" y2=\"" << py1
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << px0 - 4 << "\" y=\"" << py0 + 4 << "\" text-anchor=\"end\">" << num(ymax)
      << "</text>\n";
    s << "<text x=\"" << px0 - 4 << "\" y=\"" << py1 << "\" text-anchor=\"end\">" << num(ymin)
      << "</text>\n";
    s << "<text x=\"" << px0 << "\" y=\"" << py1 + 14 << "\">" << num(xmin) << "</text>\n";
    s << "<text x=\"" << px1 << "\" y=\"" << py1 + 14 << "\" text-anchor=\"end\">" << num(xmax)
      << "</text>\n";
    s << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << py1 + 14 << "\" text-anchor=\"middle\">"
      << (iter_col ? "iter" : "row") << "</text>\n";

    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& pts = series[order[i]];
      const char* color = kPalette[i % kPalette.size()];
      if (pts.size() == 1) {
        s << "<circle cx=\"" << num(sx(pts[0].first)) << "\" cy=\"" << num(sy(pts[0].second))
          << "\" r=\"2\" fill=\"" << color << "\"/>\n";
      } else {
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (std::size_t j = 0; j < pts.size(); ++j) {
          s << (j ? " " : "") << num(sx(pts[j].first)) << "," << num(sy(pts[j].second));
        }
        s << "\"/>\n";
      }
      if (!order[i].empty()) {
        s << "<text x=\"" << px1 << "\" y=\"" << y0 + 12 + 12 * static_cast<double>(i)
          << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(order[i]) << "</text>\n";
      }
    }
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void plot_metrics(const std::string& csv_path, const std::string& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const MetricsTable table = parse_csv(ss.str());
  std::ofstream out(svg_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + svg_path);
  out << metrics_svg(table, csv_path.substr(csv_path.find_last_of('/') + 1));
}

}  // namespace fgpl::pipe
