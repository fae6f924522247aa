#include "fact/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fact/errors.hpp"

namespace fact {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  }
  return out;
}

constexpr const char* kResultsHeader =
    "config,fingerprint,seed,target_accuracy,best_idd,selected_round";

// --- tiny SVG plotting -----------------------------------------------------

struct PlotFrame {
  double width = 640, height = 420;
  double left = 64, right = 20, top = 36, bottom = 48;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double sx(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double sy(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

std::string svg_open(const PlotFrame& f, const std::string& title) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width
     << "\" height=\"" << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height
     << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  return os.str();
}

std::string svg_axes(const PlotFrame& f, const std::string& xlabel,
                     const std::string& ylabel) {
  std::ostringstream os;
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
     << f.width - f.right << "\" y2=\"" << f.height - f.bottom
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left
     << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.sy(yv) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
       << fmt(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\""
     << f.height - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xlabel << "</text>\n"
     << "<text x=\"14\" y=\"" << (f.top + f.height - f.bottom) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "transform=\"rotate(-90 14 "
     << (f.top + f.height - f.bottom) / 2 << ")\">" << ylabel << "</text>\n";
  return os.str();
}

// Accuracy per config: line with error bars when every label ends with a
// numeric "=value", bars otherwise.
std::string accuracy_plot_svg(const ResultTable& table) {
  struct Point {
    std::string label;
    double x = 0;
    bool numeric = false;
    double mean = 0, std = 0;
  };
  std::vector<Point> points;
  for (const SummaryRow& s : table.summaries) {
    Point p;
    p.label = s.config_label;
    p.mean = s.acc_mean;
    p.std = s.acc_std;
    auto eq = s.config_label.rfind('=');
    if (eq != std::string::npos) {
      try {
        size_t used = 0;
        p.x = std::stod(s.config_label.substr(eq + 1), &used);
        p.numeric = used == s.config_label.size() - eq - 1;
      } catch (...) {
        p.numeric = false;
      }
    }
    points.push_back(p);
  }
  bool all_numeric = !points.empty();
  for (const Point& p : points) all_numeric = all_numeric && p.numeric;

  PlotFrame f;
  f.y_min = 0.0;
  f.y_max = 1.0;
  std::ostringstream os;
  if (all_numeric && points.size() > 1) {
    std::sort(points.begin(), points.end(),
              [](const Point& a, const Point& b) { return a.x < b.x; });
    f.x_min = points.front().x;
    f.x_max = points.back().x;
    if (f.x_min == f.x_max) {
      f.x_min -= 1;
      f.x_max += 1;
    }
    os << svg_open(f, "target accuracy");
    os << svg_axes(f, "sweep value", "accuracy");
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const Point& p : points) os << f.sx(p.x) << "," << f.sy(p.mean) << " ";
    os << "\"/>\n";
    for (const Point& p : points) {
      os << "<line x1=\"" << f.sx(p.x) << "\" y1=\"" << f.sy(p.mean - p.std)
         << "\" x2=\"" << f.sx(p.x) << "\" y2=\"" << f.sy(p.mean + p.std)
         << "\" stroke=\"steelblue\"/>\n"
         << "<circle cx=\"" << f.sx(p.x) << "\" cy=\"" << f.sy(p.mean)
         << "\" r=\"3\" fill=\"steelblue\"/>\n"
         << "<text x=\"" << f.sx(p.x) << "\" y=\"" << f.height - f.bottom + 14
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
         << fmt(p.x) << "</text>\n";
    }
  } else {
    f.x_min = 0;
    f.x_max = static_cast<double>(points.size());
    os << svg_open(f, "target accuracy");
    os << svg_axes(f, "config", "accuracy");
    double band = (f.width - f.left - f.right) / std::max<size_t>(points.size(), 1);
    for (size_t i = 0; i < points.size(); ++i) {
      double x0 = f.left + band * (static_cast<double>(i) + 0.2);
      double w = band * 0.6;
      double y = f.sy(points[i].mean);
      os << "<rect x=\"" << x0 << "\" y=\"" << y << "\" width=\"" << w
         << "\" height=\"" << f.height - f.bottom - y << "\" fill=\"steelblue\"/>\n"
         << "<text x=\"" << x0 + w / 2 << "\" y=\"" << f.height - f.bottom + 14
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">"
         << points[i].label << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string idd_trace_svg(const std::string& label,
                          const std::vector<const ResultRow*>& rows) {
  size_t max_len = 0;
  double max_idd = 0.0;
  for (const ResultRow* r : rows) {
    max_len = std::max(max_len, r->idd_trace.size());
    for (double v : r->idd_trace) max_idd = std::max(max_idd, v);
  }
  PlotFrame f;
  f.x_min = 0;
  f.x_max = static_cast<double>(std::max<size_t>(max_len, 2) - 1);
  f.y_min = 0;
  f.y_max = max_idd > 0 ? max_idd * 1.05 : 1.0;
  std::ostringstream os;
  os << svg_open(f, "idd per round: " + label);
  os << svg_axes(f, "round", "idd");
  const char* colors[] = {"steelblue", "darkorange", "seagreen", "crimson",
                          "purple",    "sienna",     "deeppink", "gray",
                          "olive",     "teal"};
  size_t ci = 0;
  for (const ResultRow* r : rows) {
    if (r->idd_trace.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << colors[ci % 10]
       << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < r->idd_trace.size(); ++i) {
      os << f.sx(static_cast<double>(i)) << "," << f.sy(r->idd_trace[i]) << " ";
    }
    os << "\"/>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot open " + path.string());
  out << content;
  if (!out) throw IoError("report: write failed for " + path.string());
}

}  // namespace

std::string results_csv(const ResultTable& table) {
  std::ostringstream os;
  os << kResultsHeader << "\n";
  for (const ResultRow& r : table.rows) {
    os << r.config_label << "," << r.fingerprint << "," << r.seed << ","
       << fmt(r.target_accuracy) << ",";
    if (r.best_idd) os << fmt(*r.best_idd);
    os << "," << r.selected_round << "\n";
  }
  return os.str();
}

std::string summary_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "config,fingerprint,n,acc_mean,acc_std\n";
  for (const SummaryRow& s : table.summaries) {
    os << s.config_label << "," << s.fingerprint << "," << s.n << "," << fmt(s.acc_mean)
       << "," << fmt(s.acc_std) << "\n";
  }
  return os.str();
}

std::string timings_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "config,seed,wall_time_ms\n";
  for (const ResultRow& r : table.rows) {
    os << r.config_label << "," << r.seed << "," << fmt(r.wall_time_ms) << "\n";
  }
  return os.str();
}

ResultTable parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw FormatError("results csv: missing or wrong header");
  }
  ResultTable table;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) {
      throw FormatError("results csv: line " + std::to_string(lineno) + " has " +
                        std::to_string(f.size()) + " fields, expected 6");
    }
    try {
      ResultRow row;
      row.config_label = f[0];
      row.fingerprint = f[1];
      row.seed = std::stoull(f[2]);
      row.target_accuracy = std::stod(f[3]);
      if (!f[4].empty()) row.best_idd = std::stod(f[4]);
      row.selected_round = std::stoi(f[5]);
      table.rows.push_back(std::move(row));
    } catch (const std::exception&) {
      throw FormatError("results csv: line " + std::to_string(lineno) + " is malformed");
    }
  }
  // Rebuild summaries grouped by (config, fingerprint) in first-seen order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : table.rows) {
    auto key = std::make_pair(r.config_label, r.fingerprint);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const auto& key : order) {
    const auto& rows = groups[key];
    SummaryRow s;
    s.config_label = key.first;
    s.fingerprint = key.second;
    s.n = rows.size();
    double sum = 0;
    for (const ResultRow* r : rows) sum += r->target_accuracy;
    s.acc_mean = sum / static_cast<double>(rows.size());
    if (rows.size() > 1) {
      double ss = 0;
      for (const ResultRow* r : rows) {
        double d = r->target_accuracy - s.acc_mean;
        ss += d * d;
      }
      s.acc_std = std::sqrt(ss / static_cast<double>(rows.size() - 1));
    }
    table.summaries.push_back(std::move(s));
  }
  return table;
}

void emit_report(const ResultTable& table, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("report: cannot create directory " + out_dir);
  std::filesystem::path dir(out_dir);

  write_file(dir / "results.csv", results_csv(table));
  write_file(dir / "summary.csv", summary_csv(table));
  write_file(dir / "timings.csv", timings_csv(table));
  write_file(dir / "accuracy.svg", accuracy_plot_svg(table));

  // One idd trace plot per config that recorded idd values.
  std::vector<std::string> labels;
  for (const SummaryRow& s : table.summaries) labels.push_back(s.config_label);
  if (labels.empty()) {
    for (const ResultRow& r : table.rows) {
      if (std::find(labels.begin(), labels.end(), r.config_label) == labels.end()) {
        labels.push_back(r.config_label);
      }
    }
  }
  for (const std::string& label : labels) {
    std::vector<const ResultRow*> rows;
    bool any_trace = false;
    for (const ResultRow& r : table.rows) {
      if (r.config_label == label) {
        rows.push_back(&r);
        any_trace = any_trace || !r.idd_trace.empty();
      }
    }
    if (!any_trace) continue;
    write_file(dir / ("idd_trace_" + sanitize(label) + ".svg"),
               idd_trace_svg(label, rows));
  }
}

}  // namespace fact
