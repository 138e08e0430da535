// Copyright 2026 The CrossPT Authors
// SPDX-License-Identifier: Apache-2.0

#include "crosspt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crosspt/errors.hpp"

namespace crosspt {

Tensor mean_embedding(const Tensor& prompt) {
  const std::size_t k = prompt.rows(), d = prompt.cols();
  if (k == 0) throw DimensionError("mean_embedding of an empty prompt");
  Tensor out = Tensor::zeros({d});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += prompt[i * d + j];
  for (double& v : out.values()) v /= static_cast<double>(k);
  return out;
}

SimMatrix target_source_sim(std::span<const Tensor> targets, std::span<const std::string> target_names,
                            std::span<const Tensor> slots, std::span<const std::string> slot_names) {
  if (targets.size() != target_names.size() || slots.size() != slot_names.size()) {
    throw DimensionError("target_source_sim: label counts do not match prompt counts");
  }
  auto means = [](std::span<const Tensor> ps, std::span<const std::string> names) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Tensor m = mean_embedding(ps[i]);
      double norm = 0.0;
      for (double v : m.values()) norm += v * v;
      if (norm == 0.0) throw DegenerateInputError("prompt \"" + names[i] + "\" has a zero mean embedding");
      out.push_back(std::move(m));
    }
    return out;
  };
  const auto tm = means(targets, target_names);
  const auto sm = means(slots, slot_names);
  SimMatrix out;
  out.row_labels.assign(target_names.begin(), target_names.end());
  out.col_labels.assign(slot_names.begin(), slot_names.end());
  out.values = Tensor::zeros({targets.size(), slots.size()});
  for (std::size_t i = 0; i < tm.size(); ++i)
    for (std::size_t j = 0; j < sm.size(); ++j) out.values(i, j) = cosine(tm[i], sm[j]);
  return out;
}

std::optional<double> weighted_sim_source(const Tensor& weights, const Tensor& sim) {
  if (weights.shape() != sim.shape()) {
    throw DimensionError("weighted_sim_source: weights " + shape_string(weights.shape()) + " vs sim " +
                         shape_string(sim.shape()));
  }
  const std::size_t n = weights.rows(), m = weights.cols();
  if (m == 0 || n == 0) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) total += weights(i, j) * sim(i, j);
  return total / static_cast<double>(n);
}

SimMatrix cross_task_sim(std::span<const Tensor> prompts, std::span<const std::string> names) {
  if (prompts.size() != names.size()) throw DimensionError("cross_task_sim: label count does not match prompts");
  const std::size_t n = prompts.size();
  for (const Tensor& p : prompts) {
    if (p.cols() != prompts[0].cols()) throw DimensionError("cross_task_sim: prompts differ in width");
  }
  auto raw = [&](std::size_t i, std::size_t j) {
    const Tensor& a = prompts[i];
    const Tensor& b = prompts[j];
    const std::size_t d = a.cols();
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t c = 0; c < b.rows(); ++c) {
        try {
          total += cosine(a.values().subspan(r * d, d), b.values().subspan(c * d, d));
        } catch (const DegenerateInputError&) {
          const auto row = a.values().subspan(r * d, d);
          const bool a_zero = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
          throw DegenerateInputError("prompt \"" + names[a_zero ? i : j] + "\" has a zero-norm row");
        }
      }
    }
    return total / static_cast<double>(a.rows() * b.rows());
  };
  Tensor R = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) R(i, j) = R(j, i) = raw(i, j);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(R(i, i) > 0.0)) {
      throw NormalizationError("self-similarity of prompt \"" + names[i] + "\" is not positive");
    }
  }
  SimMatrix out;
  out.row_labels.assign(names.begin(), names.end());
  out.col_labels = out.row_labels;
  out.values = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      out.values(i, j) = out.values(j, i) = R(i, j) / std::sqrt(R(i, i) * R(j, j));
  return out;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

// Linear ramp from a pale to a deep blue.
std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int lo[3] = {247, 251, 255}, hi[3] = {8, 48, 107};
  char buf[8];
  int rgb[3];
  for (int i = 0; i < 3; ++i) rgb[i] = static_cast<int>(std::lround(lo[i] + t * (hi[i] - lo[i])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

void write_csv(const SimMatrix& m, std::ostream& out) {
  out << "label";
  for (const std::string& c : m.col_labels) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    out << m.row_labels[i];
    for (std::size_t j = 0; j < m.col_labels.size(); ++j) out << ',' << fmt("%.6f", m.values(i, j));
    out << '\n';
  }
}

void write_svg(const SimMatrix& m, std::ostream& out, const std::string& title) {
  const std::size_t rows = m.row_labels.size(), cols = m.col_labels.size();
  const int cell = 48, left = 120, top = 110;
  const int width = left + static_cast<int>(cols) * cell + 20;
  const int height = top + static_cast<int>(rows) * cell + 20;
  double lo = 0.0, hi = 0.0;
  if (m.values.size() > 0) {
    lo = *std::min_element(m.values.values().begin(), m.values.values().end());
    hi = *std::max_element(m.values.values().begin(), m.values.values().end());
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!title.empty()) out << "  <text x=\"10\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (std::size_t j = 0; j < cols; ++j) {
    const int x = left + static_cast<int>(j) * cell + cell / 2;
    out << "  <text x=\"" << x << "\" y=\"" << top - 8 << "\" transform=\"rotate(-45 " << x << ' ' << top - 8
        << ")\">" << xml_escape(m.col_labels[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = top + static_cast<int>(i) * cell;
    out << "  <text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << xml_escape(m.row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = m.values(i, j);
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const int x = left + static_cast<int>(j) * cell;
      out << "  <rect class=\"cell\" data-row=\"" << i << "\" data-col=\"" << j << "\" x=\"" << x << "\" y=\"" << y
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << ramp_color(t) << "\"/>\n";
      out << "  <text class=\"value\" data-row=\"" << i << "\" data-col=\"" << j << "\" x=\"" << x + cell / 2
          << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\"" << (t > 0.5 ? "#ffffff" : "#000000")
          << "\">" << fmt("%.2f", v) << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace

void export_matrix(const SimMatrix& m, const std::filesystem::path& path, MatrixFormat format,
                   const std::string& title) {
  if (m.values.rows() != m.row_labels.size() || (m.values.size() > 0 && m.values.cols() != m.col_labels.size())) {
    throw DimensionError("matrix " + shape_string(m.values.shape()) + " does not match its labels");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  if (format == MatrixFormat::Csv) {
    write_csv(m, out);
  } else {
    write_svg(m, out, title);
  }
  if (!out) throw ExportError("write failed for " + path.string());
}

SimMatrix import_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  auto header = split(line);
  if (header.empty()) throw FormatError(path.string() + ": bad header");
  SimMatrix m;
  m.col_labels.assign(header.begin() + 1, header.end());
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    m.row_labels.push_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(std::stod(cells[j]));
  }
  m.values = Tensor({m.row_labels.size(), m.col_labels.size()}, std::move(values));
  return m;
}

void export_line_plot(std::span<const LineSeries> series, const std::string& x_label, const std::string& y_label,
                      const std::filesystem::path& path, const std::string& title) {
  const int width = 480, height = 320, left = 60, right = 120, top = 30, bottom = 50;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const LineSeries& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("line series \"" + s.name + "\" has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ExportError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!title.empty()) out << "  <text x=\"10\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  out << "  <line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"#000\"/>\n";
  out << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"#000\"/>\n";
  out << "  <text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n";
  out << "  <text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
      << ")\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
  out << "  <text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << fmt("%.3f", ymax)
      << "</text>\n";
  out << "  <text x=\"" << left - 4 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << fmt("%.3f", ymin)
      << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const LineSeries& s = series[k];
    const char* color = palette[k % 6];
    out << "  <polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << (i ? " " : "") << fmt("%.2f", px(s.x[i])) << ',' << fmt("%.2f", py(s.y[i]));
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << "  <circle cx=\"" << fmt("%.2f", px(s.x[i])) << "\" cy=\"" << fmt("%.2f", py(s.y[i])) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
      out << "  <text x=\"" << fmt("%.2f", px(s.x[i])) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">"
          << fmt("%g", s.x[i]) << "</text>\n";
    }
    out << "  <text x=\"" << left + pw + 10 << "\" y=\"" << top + 14 * (k + 1) << "\" fill=\"" << color << "\">"
        << xml_escape(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw ExportError("write failed for " + path.string());
}

}  // namespace crosspt
