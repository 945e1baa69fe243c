#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "pgql/errors.h"
#include "pgql/harness.h"

namespace pgql {
namespace {

constexpr const char* kTraceColumns =
    "step,j_true,bellman_residual,mean_entropy,seed";
constexpr const char* kCertificateColumns =
    "mdp_seed,alpha,eta,residual_min,residual_max,bound,chain1_lhs,chain1_rhs,"
    "chain2_lhs,chain2_rhs,chain3_lhs,chain3_rhs,passed";

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream in(line);
  for (std::string field; std::getline(in, field, ',');) fields.push_back(field);
  return fields;
}

}  // namespace

void write_trace_csv(const std::string& path, const Trace& trace,
                     const std::vector<std::string>& header_lines) {
  std::ofstream out = open_for_write(path);
  for (const std::string& line : header_lines) out << "# " << line << '\n';
  out << kTraceColumns << '\n';
  for (const TraceRow& row : trace.rows) {
    out << row.step << ',' << row.j_true << ',' << row.bellman_residual << ','
        << row.mean_entropy << ',' << row.seed << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

TraceFile read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file " + path);
  TraceFile file;
  bool seen_columns = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        file.header[body.substr(0, eq)] = body.substr(eq + 1);
      }
      continue;
    }
    if (!seen_columns) {
      if (line != kTraceColumns) {
        throw Error(path + ": unexpected columns '" + line + "'");
      }
      seen_columns = true;
      continue;
    }
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 5) throw Error(path + ": malformed row '" + line + "'");
    TraceRow row;
    row.step = std::stoll(f[0]);
    row.j_true = std::stod(f[1]);
    row.bellman_residual = std::stod(f[2]);
    row.mean_entropy = std::stod(f[3]);
    row.seed = std::stoull(f[4]);
    file.rows.push_back(row);
  }
  if (!seen_columns) throw Error(path + ": missing column header");
  return file;
}

void write_policy_csv(const std::string& path, const Eigen::MatrixXd& logits) {
  std::ofstream out = open_for_write(path);
  out << "state,action,logit\n";
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    for (Eigen::Index a = 0; a < logits.cols(); ++a) {
      out << s << ',' << a << ',' << logits(s, a) << '\n';
    }
  }
}

Eigen::MatrixXd read_policy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open policy file " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::tuple<int, int, double>> entries;
  int n_states = 0, n_actions = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 3) throw Error(path + ": malformed row '" + line + "'");
    const int s = std::stoi(f[0]), a = std::stoi(f[1]);
    entries.emplace_back(s, a, std::stod(f[2]));
    n_states = std::max(n_states, s + 1);
    n_actions = std::max(n_actions, a + 1);
  }
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (const auto& [s, a, x] : entries) logits(s, a) = x;
  return logits;
}

std::string emit_plot(const std::vector<std::string>& trace_files) {
  if (trace_files.empty()) throw EmptyInputError("no trace files to plot");
  // label -> step -> (sum, count)
  std::map<std::string, std::map<std::int64_t, std::pair<double, int>>> grouped;
  std::vector<std::string> order;
  for (const std::string& path : trace_files) {
    const TraceFile file = read_trace_csv(path);
    auto it = file.header.find("trace-agent");
    if (it == file.header.end()) it = file.header.find("agent");
    const std::string label = it != file.header.end()
                                  ? it->second
                                  : std::filesystem::path(path).stem().string();
    if (!grouped.count(label)) order.push_back(label);
    auto& steps = grouped[label];
    for (const TraceRow& row : file.rows) {
      auto& [sum, count] = steps[row.step];
      sum += row.j_true;
      ++count;
    }
  }
  std::vector<std::pair<std::string, std::vector<TraceRow>>> series;
  for (const std::string& label : order) {
    std::vector<TraceRow> rows;
    for (const auto& [step, acc] : grouped[label]) {
      TraceRow row;
      row.step = step;
      row.j_true = acc.first / acc.second;
      rows.push_back(row);
    }
    series.emplace_back(label, std::move(rows));
  }
  return render_plot_svg(series);
}

std::string render_plot_svg(
    const std::vector<std::pair<std::string, std::vector<TraceRow>>>& series) {
  if (series.empty()) throw EmptyInputError("nothing to plot");
  constexpr double kWidth = 720, kHeight = 440;
  constexpr double kLeft = 70, kRight = 160, kTop = 20, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

  std::int64_t x_lo = 0, x_hi = 0;
  double y_lo = 0.0, y_hi = 0.0;
  bool first = true;
  for (const auto& [label, rows] : series) {
    for (const TraceRow& row : rows) {
      if (first) {
        x_lo = x_hi = row.step;
        first = false;
      }
      x_lo = std::min(x_lo, row.step);
      x_hi = std::max(x_hi, row.step);
      y_lo = std::min(y_lo, row.j_true);
      y_hi = std::max(y_hi, row.j_true);
    }
  }
  if (first) throw EmptyInputError("trace files contain no rows");
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double x_span = x_hi > x_lo ? static_cast<double>(x_hi - x_lo) : 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::int64_t step) {
    return kLeft + plot_w * static_cast<double>(step - x_lo) / x_span;
  };
  auto py = [&](double j) {
    return kTop + plot_h * (1.0 - (j - y_lo) / (y_hi - y_lo));
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double x0 = kLeft, x1 = kLeft + plot_w;
  const double y0 = kTop + plot_h, y1 = kTop;
  svg << "<line class=\"axis\" x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\""
      << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis\" x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\""
      << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">step</text>\n";
  svg << "<text x=\"18\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
         "transform=\"rotate(-90 18 "
      << (y0 + y1) / 2 << ")\">j_true</text>\n";
  auto tick = [&](double x, double y, const std::string& text,
                  const char* anchor) {
    svg << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << text
        << "</text>\n";
  };
  std::ostringstream fmt;
  fmt.precision(4);
  fmt << y_lo;
  tick(x0 - 6, y0 + 4, fmt.str(), "end");
  fmt.str("");
  fmt << y_hi;
  tick(x0 - 6, y1 + 4, fmt.str(), "end");
  tick(x0, y0 + 18, std::to_string(x_lo), "middle");
  tick(x1, y0 + 18, std::to_string(x_hi), "middle");

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& [label, rows] = series[i];
    const char* color = kColors[i % std::size(kColors)];
    svg << "<polyline data-label=\"" << label << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k) svg << ' ';
      svg << px(rows[k].step) << ',' << py(rows[k].j_true);
    }
    svg << "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(i);
    svg << "<line x1=\"" << x1 + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << x1 + 32 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    tick(x1 + 38, ly, label, "start");
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<CertificateRow> run_certify(const CertifyConfig& config) {
  if (config.seeds.empty()) throw EmptyInputError("certify needs seeds");
  std::vector<CertificateRow> rows;
  for (std::uint64_t seed : config.seeds) {
    GarnetSpec spec = config.garnet;
    spec.seed = seed;
    const TabularMdp mdp = garnet_generate(spec);
    for (double alpha : config.alphas) {
      for (double eta : config.etas) {
        CertificateRow row;
        row.mdp_seed = seed;
        if (eta == 0.0) {
          const FixedPointResult result =
              solve_regularized_fixed_point(mdp, alpha, config.options);
          const BoundReport residual =
              bellman_residual_report(mdp, result, alpha, config.options.tol);
          row.report = verify_appendix_bounds(mdp, result, alpha, eta, mdp.gamma);
          // The |A| alpha / e ceiling is a property of the eta = 0 fixed point.
          row.report.passed = row.report.passed && residual.passed;
        } else {
          const FixedPointResult result =
              solve_pgql_fixed_point(mdp, alpha, eta, config.options);
          row.report = verify_appendix_bounds(mdp, result, alpha, eta, mdp.gamma);
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_certificate_csv(const std::string& path,
                           const std::vector<CertificateRow>& rows) {
  std::ofstream out = open_for_write(path);
  out << kCertificateColumns << '\n';
  for (const CertificateRow& row : rows) {
    const BoundReport& r = row.report;
    out << row.mdp_seed << ',' << r.alpha << ',' << r.eta << ','
        << r.residual_min << ',' << r.residual_max << ',' << r.bound << ','
        << r.chain1_lhs << ',' << r.chain1_rhs << ',' << r.chain2_lhs << ','
        << r.chain2_rhs << ',' << r.chain3_lhs << ',' << r.chain3_rhs << ','
        << (r.passed ? "true" : "false") << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

}  // namespace pgql
