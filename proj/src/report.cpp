#include "mtard/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mtard {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series) {
  constexpr double kW = 720, kH = 420;
  constexpr double kL = 64, kR = 180, kT = 40, kB = 48;
  const double plot_w = kW - kL - kR, plot_h = kH - kT - kB;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const ChartSeries& s : series) {
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (std::isnan(s.ys[i])) continue;
      if (first) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        first = false;
      } else {
        xmin = std::min(xmin, s.xs[i]);
        xmax = std::max(xmax, s.xs[i]);
        ymin = std::min(ymin, s.ys[i]);
        ymax = std::max(ymax, s.ys[i]);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return kL + plot_w * (x - xmin) / (xmax - xmin); };
  auto py = [&](double y) { return kT + plot_h * (1.0 - (y - ymin) / (ymax - ymin)); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kW) + "\" height=\"" +
         fmt2(kH) + "\" viewBox=\"0 0 " + fmt2(kW) + " " + fmt2(kH) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt2(kL) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" +
         title + "</text>\n";
  // axes
  svg += "<line x1=\"" + fmt2(kL) + "\" y1=\"" + fmt2(kT) + "\" x2=\"" + fmt2(kL) + "\" y2=\"" +
         fmt2(kT + plot_h) + "\" stroke=\"#444\"/>\n";
  svg += "<line x1=\"" + fmt2(kL) + "\" y1=\"" + fmt2(kT + plot_h) + "\" x2=\"" +
         fmt2(kL + plot_w) + "\" y2=\"" + fmt2(kT + plot_h) + "\" stroke=\"#444\"/>\n";
  // min/max tick labels
  svg += "<text x=\"" + fmt2(kL - 6) + "\" y=\"" + fmt2(kT + plot_h + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt2(ymin) +
         "</text>\n";
  svg += "<text x=\"" + fmt2(kL - 6) + "\" y=\"" + fmt2(kT + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt2(ymax) +
         "</text>\n";
  svg += "<text x=\"" + fmt2(kL) + "\" y=\"" + fmt2(kH - 12) +
         "\" font-family=\"sans-serif\" font-size=\"11\">epoch " + fmt2(xmin) + "</text>\n";
  svg += "<text x=\"" + fmt2(kL + plot_w) + "\" y=\"" + fmt2(kH - 12) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt2(xmax) +
         "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt2(kT - 8) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
         y_label + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const ChartSeries& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    std::string markers;
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (std::isnan(s.ys[i])) continue;
      points += fmt2(px(s.xs[i])) + "," + fmt2(py(s.ys[i])) + " ";
      markers += "<circle class=\"pt\" cx=\"" + fmt2(px(s.xs[i])) + "\" cy=\"" +
                 fmt2(py(s.ys[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    }
    if (points.empty()) continue;
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
           points + "\"/>\n";
    svg += markers;
    double ly = kT + 16 + 18 * static_cast<double>(si);
    svg += "<line x1=\"" + fmt2(kW - kR + 12) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" +
           fmt2(kW - kR + 32) + "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt2(kW - kR + 38) + "\" y=\"" + fmt2(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string metrics_to_csv(const std::vector<MetricRecord>& history) {
  // Union of robust-attack names across records, in first-seen order.
  std::vector<std::string> attack_names;
  for (const MetricRecord& rec : history)
    for (const auto& [name, acc] : rec.robust_acc)
      if (std::find(attack_names.begin(), attack_names.end(), name) == attack_names.end())
        attack_names.push_back(name);

  std::string csv = "epoch,clean_acc";
  for (const std::string& name : attack_names) csv += ",robust_" + name;
  csv += ",w_robust,tau_nat,tau_adv,h_nat,h_adv,w_nat,w_adv,rel_nat,rel_adv,l_nat,l_adv,l_total,lr\n";

  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
  for (const MetricRecord& rec : history) {
    csv += std::to_string(rec.epoch) + "," + fmt(rec.clean_acc);
    for (const std::string& name : attack_names) {
      auto it = rec.robust_acc.find(name);
      csv += "," + (it == rec.robust_acc.end() ? std::string() : fmt(it->second));
    }
    const ControllerSnapshot& s = rec.snapshot;
    csv += "," + fmt(rec.w_robust);
    for (double v : {s.tau_nat, s.tau_adv, s.h_nat, s.h_adv, s.w_nat, s.w_adv, s.rel_nat, s.rel_adv,
                     s.l_nat, s.l_adv, s.l_total, s.lr})
      csv += "," + cell(v);
    csv += "\n";
  }
  return csv;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::string>& written) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open for writing: " + path.string());
  out << content;
  out.close();
  require(out.good(), ErrorKind::io, "write failed: " + path.string());
  written.push_back(path.filename().string());
}

}  // namespace

std::vector<std::string> write_report(
    const std::vector<std::pair<std::string, std::vector<MetricRecord>>>& runs,
    const std::string& out_dir) {
  require(!runs.empty(), ErrorKind::usage, "report: no metric histories given");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  for (const auto& [label, history] : runs)
    write_file(std::filesystem::path(out_dir) / (label + ".csv"), metrics_to_csv(history), written);

  struct ChartDef {
    const char* file;
    const char* title;
    const char* y_label;
    std::vector<std::pair<const char*, double ControllerSnapshot::*>> fields;
  };
  const std::vector<ChartDef> charts = {
      {"loss.svg", "Training loss", "loss",
       {{"l_nat", &ControllerSnapshot::l_nat},
        {"l_adv", &ControllerSnapshot::l_adv},
        {"l_total", &ControllerSnapshot::l_total}}},
      {"relative_loss.svg", "Relative loss", "relative loss",
       {{"rel_nat", &ControllerSnapshot::rel_nat}, {"rel_adv", &ControllerSnapshot::rel_adv}}},
      {"entropy.svg", "Teacher prediction entropy", "nats",
       {{"h_nat", &ControllerSnapshot::h_nat}, {"h_adv", &ControllerSnapshot::h_adv}}},
      {"temperature.svg", "Teacher temperatures", "tau",
       {{"tau_nat", &ControllerSnapshot::tau_nat}, {"tau_adv", &ControllerSnapshot::tau_adv}}},
      {"weights.svg", "Loss weights", "weight",
       {{"w_nat", &ControllerSnapshot::w_nat}, {"w_adv", &ControllerSnapshot::w_adv}}},
  };

  for (const ChartDef& def : charts) {
    std::vector<ChartSeries> series;
    for (const auto& [label, history] : runs) {
      for (const auto& [fname, member] : def.fields) {
        ChartSeries s;
        s.label = runs.size() > 1 ? label + ":" + fname : std::string(fname);
        for (const MetricRecord& rec : history) {
          double v = rec.snapshot.*member;
          if (std::isnan(v)) continue;
          s.xs.push_back(rec.epoch);
          s.ys.push_back(v);
        }
        if (!s.xs.empty()) series.push_back(std::move(s));
      }
    }
    if (!series.empty())
      write_file(std::filesystem::path(out_dir) / def.file,
                 render_line_chart(def.title, def.y_label, series), written);
  }

  // Accuracy chart: clean, per-attack robust, and w_robust.
  std::vector<ChartSeries> acc_series;
  for (const auto& [label, history] : runs) {
    auto prefix = runs.size() > 1 ? label + ":" : std::string();
    ChartSeries clean{prefix + "clean_acc", {}, {}};
    ChartSeries wrob{prefix + "w_robust", {}, {}};
    std::map<std::string, ChartSeries> robust;
    for (const MetricRecord& rec : history) {
      clean.xs.push_back(rec.epoch);
      clean.ys.push_back(rec.clean_acc);
      wrob.xs.push_back(rec.epoch);
      wrob.ys.push_back(rec.w_robust);
      for (const auto& [name, acc] : rec.robust_acc) {
        auto& s = robust[name];
        if (s.label.empty()) s.label = prefix + "robust_" + name;
        s.xs.push_back(rec.epoch);
        s.ys.push_back(acc);
      }
    }
    acc_series.push_back(std::move(clean));
    for (auto& [name, s] : robust) acc_series.push_back(std::move(s));
    acc_series.push_back(std::move(wrob));
  }
  write_file(std::filesystem::path(out_dir) / "w_robust.svg",
             render_line_chart("Accuracy vs epoch", "accuracy", acc_series), written);

  return written;
}

}  // namespace mtard
