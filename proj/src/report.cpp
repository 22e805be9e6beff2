#include "suci/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "suci/binary_io.hpp"
#include "suci/errors.hpp"

namespace suci::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_or_throw(const fs::path& path, const std::string& data) {
  if (!io::write_file(path, data)) throw RuntimeFailure("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw RuntimeFailure("cannot create directory " + dir.string());
}

const std::vector<std::string>& split_order() {
  static const std::vector<std::string> order{"train", "iid_test", "ood_test"};
  return order;
}

std::vector<std::string> splits_present(const std::vector<ablation::SummaryCell>& cells) {
  std::vector<std::string> out;
  for (const auto& s : split_order()) {
    if (std::any_of(cells.begin(), cells.end(), [&](const auto& c) { return c.split == s; })) out.push_back(s);
  }
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.split) == out.end()) out.push_back(c.split);
  }
  return out;
}

std::vector<std::string> variants_present(const std::vector<ablation::SummaryCell>& cells) {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.variant) == out.end()) out.push_back(c.variant);
  }
  return out;
}

// Qualitative palette, cycled.
const char* color(std::size_t i) {
  static const char* palette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948",
                                  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1b9e77", "#7570b3"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

std::string escape_xml(const std::string& s) {
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

}  // namespace

std::string metrics_json(const std::vector<metrics::MetricsReport>& reports,
                         const std::vector<ablation::CellFailure>& failures) {
  json doc;
  doc["schema_version"] = kMetricsSchemaVersion;
  doc["reports"] = reports;
  doc["failures"] = failures;
  return doc.dump(2) + "\n";
}

std::string summary_markdown(const std::vector<metrics::MetricsReport>& reports,
                             const std::vector<ablation::CellFailure>& failures) {
  const auto cells = ablation::summarize(reports);
  const auto splits = splits_present(cells);
  const auto variants = variants_present(cells);
  std::string out = "# Results\n\n";
  auto table = [&](const char* title, auto mean, auto sd) {
    out += fmt::format("## {} (mean ± std over seeds, %)\n\n| variant |", title);
    for (const auto& s : splits) out += " " + s + " |";
    out += " seeds |\n|---|";
    for (std::size_t i = 0; i < splits.size(); ++i) out += "---|";
    out += "---|\n";
    for (const auto& v : variants) {
      out += "| " + v + " |";
      std::size_t n = 0;
      for (const auto& s : splits) {
        const auto* c = ablation::find_cell(cells, v, s);
        if (c) {
          out += fmt::format(" {:.2f} ± {:.2f} |", 100.0 * mean(*c), 100.0 * sd(*c));
          n = std::max(n, c->n);
        } else {
          out += " n/a |";
        }
      }
      out += fmt::format(" {} |\n", n);
    }
    out += "\n";
  };
  table("Accuracy", [](const auto& c) { return c.accuracy_mean; }, [](const auto& c) { return c.accuracy_std; });
  table("Macro-F1", [](const auto& c) { return c.macro_f1_mean; }, [](const auto& c) { return c.macro_f1_std; });

  const auto* base = ablation::find_cell(cells, "vanilla", "ood_test");
  if (base) {
    out += "## OOD accuracy relative to vanilla (points)\n\n| variant | gain |\n|---|---|\n";
    for (const auto& v : variants) {
      if (v == "vanilla") continue;
      if (const auto* c = ablation::find_cell(cells, v, "ood_test")) {
        out += fmt::format("| {} | {:+.2f} |\n", v, 100.0 * (c->accuracy_mean - base->accuracy_mean));
      }
    }
    out += "\n";
  }
  if (!failures.empty()) {
    out += "## Failed cells\n\n| variant | seed | error |\n|---|---|---|\n";
    for (const auto& f : failures) out += fmt::format("| {} | {} | {} |\n", f.variant, f.seed, f.message);
    out += "\n";
  }
  return out;
}

std::string bars_svg(const std::vector<metrics::MetricsReport>& reports) {
  const auto cells = ablation::summarize(reports);
  const auto splits = splits_present(cells);
  const auto variants = variants_present(cells);
  const double bar_w = 14.0, group_gap = 30.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double group_w = bar_w * static_cast<double>(variants.size());
  const double width = left + static_cast<double>(splits.size()) * (group_w + group_gap) + 20.0;
  const double legend_h = 18.0 * static_cast<double>(variants.size());
  const double height = top + plot_h + 50.0 + legend_h;

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.0f}\" y=\"20\" font-size=\"13\">Accuracy by split (mean ± std over seeds)</text>\n",
      width, height, left);
  auto y_of = [&](double acc) { return top + plot_h * (1.0 - acc); };
  for (int tick = 0; tick <= 10; tick += 2) {
    const double y = y_of(tick / 10.0);
    out += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n",
        left, y, width - 20.0, y, left - 6.0, y + 4.0, tick / 10.0);
  }
  for (std::size_t si = 0; si < splits.size(); ++si) {
    const double gx = left + group_gap / 2.0 + static_cast<double>(si) * (group_w + group_gap);
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const auto* c = ablation::find_cell(cells, variants[vi], splits[si]);
      if (!c) continue;
      const double x = gx + static_cast<double>(vi) * bar_w;
      const double y = y_of(c->accuracy_mean);
      out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x, y,
                         bar_w - 2.0, top + plot_h - y, color(vi));
      if (c->accuracy_std > 0.0) {
        const double cx = x + (bar_w - 2.0) / 2.0;
        out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", cx,
                           y_of(std::min(1.0, c->accuracy_mean + c->accuracy_std)), cx,
                           y_of(std::max(0.0, c->accuracy_mean - c->accuracy_std)));
      }
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", gx + group_w / 2.0,
                       top + plot_h + 16.0, escape_xml(splits[si]));
  }
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const double y = top + plot_h + 36.0 + 18.0 * static_cast<double>(vi);
    out += fmt::format(
        "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n"
        "<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n",
        left, y, color(vi), left + 16.0, y + 9.0, escape_xml(variants[vi]));
  }
  out += "</svg>\n";
  return out;
}

std::string scatter_svg(const Scatter& s) {
  if (s.coords.cols() != 2 || static_cast<std::size_t>(s.coords.rows()) != s.labels.size()) {
    throw ValidationError("scatter", "coords must be n x 2 with one label per row");
  }
  const double size = 360.0, pad = 30.0;
  double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
  if (s.coords.rows() > 0) {
    lo_x = s.coords.col(0).minCoeff();
    hi_x = s.coords.col(0).maxCoeff();
    lo_y = s.coords.col(1).minCoeff();
    hi_y = s.coords.col(1).maxCoeff();
  }
  const double span_x = hi_x > lo_x ? hi_x - lo_x : 1.0;
  const double span_y = hi_y > lo_y ? hi_y - lo_y : 1.0;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.0f}\" y=\"18\" font-size=\"13\">{}</text>\n",
      size + 2 * pad + 70.0, size + 2 * pad, pad, escape_xml(s.title));
  for (Eigen::Index i = 0; i < s.coords.rows(); ++i) {
    const double x = pad + size * (s.coords(i, 0) - lo_x) / span_x;
    const double y = pad + size * (1.0 - (s.coords(i, 1) - lo_y) / span_y);
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n", x, y,
                       color(s.labels[static_cast<std::size_t>(i)]));
  }
  const std::set<std::size_t> classes(s.labels.begin(), s.labels.end());
  double ly = pad + 10.0;
  for (auto c : classes) {
    out += fmt::format(
        "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"4\" fill=\"{}\"/>\n<text x=\"{:.1f}\" y=\"{:.1f}\">class {}</text>\n",
        size + 2 * pad, ly, color(c), size + 2 * pad + 8.0, ly + 4.0, c);
    ly += 16.0;
  }
  out += "</svg>\n";
  return out;
}

void render_summary(const std::vector<metrics::MetricsReport>& reports, const fs::path& dir,
                    const std::vector<ablation::CellFailure>& failures) {
  if (reports.empty()) throw ValidationError("reports", "nothing to render");
  ensure_dir(dir);
  write_or_throw(dir / "summary.md", summary_markdown(reports, failures));
  write_or_throw(dir / "bars.svg", bars_svg(reports));
}

void render_report(const std::vector<metrics::MetricsReport>& reports, const fs::path& dir,
                   const std::vector<Scatter>& scatters, const std::vector<ablation::CellFailure>& failures) {
  if (reports.empty()) throw ValidationError("reports", "nothing to render");
  ensure_dir(dir);
  write_or_throw(dir / "metrics.json", metrics_json(reports, failures));
  render_summary(reports, dir, failures);
  for (const auto& s : scatters) write_or_throw(dir / ("scatter_" + s.name + ".svg"), scatter_svg(s));
}

LoadedReports load_reports(const fs::path& file) {
  std::string text;
  if (!io::read_file(file, text)) throw RuntimeFailure("cannot read " + file.string());
  try {
    const auto doc = json::parse(text);
    const int version = doc.at("schema_version").get<int>();
    if (version != kMetricsSchemaVersion) {
      throw ValidationError(file.string() + ":schema_version", "unsupported version " + std::to_string(version));
    }
    LoadedReports out;
    out.reports = doc.at("reports").get<std::vector<metrics::MetricsReport>>();
    if (doc.contains("failures")) out.failures = doc.at("failures").get<std::vector<ablation::CellFailure>>();
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(file.string(), std::string("malformed metrics file: ") + e.what());
  }
}

LoadedReports collect_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError(dir.string(), "not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  LoadedReports out;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> seen;
  for (const auto& f : files) {
    auto part = load_reports(f);
    for (auto& r : part.reports) {
      if (seen.insert({r.variant, r.split, r.seed}).second) out.reports.push_back(std::move(r));
    }
    for (auto& fl : part.failures) out.failures.push_back(std::move(fl));
  }
  if (out.reports.empty()) throw ValidationError(dir.string(), "no metrics.json with reports found");
  return out;
}

}  // namespace suci::report
