#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "semrelay/experiments.hpp"

namespace semrelay::experiments {

namespace {

struct Series {
  std::map<double, std::pair<double, int>> points;  // x -> (sum, count)
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

double metric_of(const MetricsRecord& r, const std::string& metric) {
  if (metric == "bleu1") return r.bleu1;
  if (metric == "bleu2") return r.bleu2;
  if (metric == "bleu3") return r.bleu3;
  return r.semsim;
}

std::string svg_chart(const std::map<std::string, Series>& series, const std::string& x_label,
                      const std::string& y_label, double y_lo, double y_hi) {
  const double W = 640, H = 420, left = 70, right = 150, top = 30, bottom = 60;
  double x_lo = 1e300, x_hi = -1e300;
  for (const auto& [name, s] : series) {
    for (const auto& [x, v] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
    }
  }
  if (x_hi <= x_lo) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y_lo) / (y_hi - y_lo) * (H - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 5.0;
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
    const double x = x_lo + (x_hi - x_lo) * i / 5.0;
    o << "<text x=\"" << px(x) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">" << x
      << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << x_label
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (top + H - bottom) / 2 << ")\">" << y_label << "</text>\n";
  int k = 0;
  for (const auto& [name, s] : series) {
    const char* color = kColors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, v] : s.points) o << px(x) << ',' << py(v.first / v.second) << ' ';
    o << "\"/>\n";
    for (const auto& [x, v] : s.points) {
      o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(v.first / v.second) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    o << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 18 * k + 10 << "\" fill=\"" << color << "\">" << name
      << "</text>\n";
    ++k;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<MetricsRecord>& records, const std::string& dir) {
  if (records.empty()) throw Error("emit_report: no records");
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  save_csv(dir + "/records.csv", records);
  files.push_back("records.csv");

  // Records at a single d_SD are a relay-position sweep; otherwise group by
  // distance at each gamma.
  std::set<double> distances;
  for (const auto& r : records) distances.insert(r.d_sd_m);
  const bool relay_axis = distances.size() == 1;
  const std::string axis = relay_axis ? "relay" : "distance";
  const std::string x_label = relay_axis ? "relay position gamma = d_SR / d_SD" : "source-destination distance (m)";

  std::ostringstream index;
  index << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Sweep report</title></head><body>\n"
        << "<h1>Sweep report (" << axis << " axis)</h1>\n<p><a href=\"records.csv\">records.csv</a> ("
        << records.size() << " records)</p>\n";
  for (const std::string metric : {"bleu1", "bleu2", "bleu3", "semsim"}) {
    std::map<std::string, Series> series;
    for (const auto& r : records) {
      auto& p = series[r.scheme].points[relay_axis ? r.gamma : r.d_sd_m];
      p.first += metric_of(r, metric);
      p.second += 1;
    }
    const double y_lo = metric == "semsim" ? -1.0 : 0.0;
    const std::string name = axis + "_" + metric + ".svg";
    std::ofstream out(dir + "/" + name);
    if (!out) throw Error("cannot write " + dir + "/" + name);
    out << svg_chart(series, x_label, metric, y_lo, 1.0);
    files.push_back(name);
    index << "<h2>" << metric << "</h2>\n<img src=\"" << name << "\" alt=\"" << metric << "\">\n";
  }
  index << "</body></html>\n";
  std::ofstream out(dir + "/index.html");
  if (!out) throw Error("cannot write " + dir + "/index.html");
  out << index.str();
  files.push_back("index.html");
  return files;
}

}  // namespace semrelay::experiments
