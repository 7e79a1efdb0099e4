#include "ssdg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace ssdg {

namespace fs = std::filesystem;

namespace {

const char* kUnavailable = "unavailable";

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int arm_rank(const std::string& arm) {
  static const std::vector<std::string> order{"ours", "no-dapl", "no-dc", "supone", "naive-pl"};
  const auto it = std::find(order.begin(), order.end(), arm);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::string source_of(const MetricsLog& log) {
  return log.header.manifest.empty() ? log.path.string() : log.header.manifest;
}

struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct Group {
  std::vector<double> target;
  std::vector<double> pseudo;
  bool pseudo_unavailable = false;
  std::vector<std::string> sources;
};

// Groups keep the order of their first log.
template <typename Key>
std::vector<std::pair<std::string, Group>> group_final(std::span<const MetricsLog> logs, Key key) {
  std::vector<std::pair<std::string, Group>> groups;
  for (const MetricsLog& log : logs) {
    const std::string k = key(log);
    if (k.empty()) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == k; });
    if (it == groups.end()) {
      groups.emplace_back(k, Group{});
      it = std::prev(groups.end());
    }
    Group& g = it->second;
    g.sources.push_back(source_of(log));
    if (log.epochs.empty()) continue;
    const EpochSummary& last = log.epochs.back();
    if (last.target_accuracy) g.target.push_back(*last.target_accuracy);
    if (!log.header.has_ground_truth) {
      g.pseudo_unavailable = true;
    } else if (last.pseudo_label_accuracy) {
      g.pseudo.push_back(*last.pseudo_label_accuracy);
    }
  }
  return groups;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& s : items) out += (out.empty() ? "" : ";") + s;
  return out;
}

std::string percent(const std::vector<double>& v) {
  if (v.empty()) return kUnavailable;
  return fmt(100.0 * stats(v).mean, "%.2f");
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

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

void check_compatible(std::span<const MetricsLog> logs) {
  if (logs.empty()) throw SchemaError("report: at least one metrics log is required");
  const int c = logs.front().header.num_classes;
  for (const MetricsLog& log : logs) {
    if (log.header.num_classes != c) {
      throw SchemaError("report: incompatible logs, " + logs.front().path.string() + " has C=" + std::to_string(c) +
                        " but " + log.path.string() + " has C=" + std::to_string(log.header.num_classes));
    }
  }
}

std::vector<MetricsLog> ordered(std::span<const MetricsLog> logs) {
  std::vector<MetricsLog> out(logs.begin(), logs.end());
  std::stable_sort(out.begin(), out.end(), [](const MetricsLog& a, const MetricsLog& b) {
    const auto ka = std::make_tuple(arm_rank(a.header.arm), a.header.arm, a.header.config.seed, a.path.string());
    const auto kb = std::make_tuple(arm_rank(b.header.arm), b.header.arm, b.header.config.seed, b.path.string());
    return ka < kb;
  });
  return out;
}

std::string curves_table(std::span<const MetricsLog> logs) {
  std::ostringstream out;
  out << "arm\tseed\tepoch\tpseudo_label_accuracy\tcoverage\ttarget_accuracy\tsource\n";
  for (const MetricsLog& log : ordered(logs)) {
    for (const EpochSummary& s : log.epochs) {
      const int pool = s.pseudo_set_size + s.unlabeled_set_size;
      out << log.header.arm << '\t' << log.header.config.seed << '\t' << s.epoch << '\t'
          << (log.header.has_ground_truth && s.pseudo_label_accuracy ? fmt(*s.pseudo_label_accuracy) : kUnavailable)
          << '\t' << (pool > 0 ? fmt(static_cast<double>(s.pseudo_set_size) / pool) : kUnavailable) << '\t'
          << (s.target_accuracy ? fmt(*s.target_accuracy) : kUnavailable) << '\t' << source_of(log) << '\n';
    }
  }
  return out.str();
}

std::string comparison_table(std::span<const MetricsLog> logs) {
  const auto sorted = ordered(logs);
  std::ostringstream out;
  out << "arm\truns\ttarget_accuracy_mean\ttarget_accuracy_std\tpseudo_label_accuracy_mean\tsources\n";
  for (const auto& [arm, g] : group_final(sorted, [](const MetricsLog& l) { return l.header.arm; })) {
    const Stats t = stats(g.target);
    out << arm << '\t' << g.sources.size() << '\t' << (t.n ? fmt(100.0 * t.mean, "%.2f") : kUnavailable) << '\t'
        << (t.n ? fmt(100.0 * t.stddev, "%.2f") : kUnavailable) << '\t'
        << (g.pseudo_unavailable ? kUnavailable : percent(g.pseudo)) << '\t' << join(g.sources) << '\n';
  }
  return out.str();
}

std::string policy_table(std::span<const MetricsLog> logs) {
  const auto sorted = ordered(logs);
  auto key = [](const MetricsLog& l) -> std::string {
    if (!l.header.config.flags.use_dapl || !l.header.config.flags.use_pseudo_labels) return "";
    return l.header.config.rep_policy == RepPolicy::one ? "One" : "Ensemble";
  };
  auto groups = group_final(sorted, key);
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::ostringstream out;
  out << "policy\truns\ttarget_accuracy_mean\tpseudo_label_accuracy_mean\tsources\n";
  for (const auto& [policy, g] : groups) {
    out << policy << '\t' << g.sources.size() << '\t' << percent(g.target) << '\t'
        << (g.pseudo_unavailable ? kUnavailable : percent(g.pseudo)) << '\t' << join(g.sources) << '\n';
  }
  return out.str();
}

std::string curves_svg(std::span<const MetricsLog> logs) {
  const auto sorted = ordered(logs);
  const bool any_truth = std::any_of(sorted.begin(), sorted.end(), [](const MetricsLog& l) { return l.header.has_ground_truth; });
  int max_epoch = 1;
  for (const MetricsLog& l : sorted) {
    for (const EpochSummary& s : l.epochs) max_epoch = std::max(max_epoch, s.epoch);
  }
  const double w = 640, h = 400, left = 60, right = 180, top = 30, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">"
      << (any_truth ? "pseudo-label accuracy per epoch" : "pseudo-label coverage per epoch") << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = top + ph - ph * t / 4.0;
    out << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y + 4, "%.1f") << "\" font-size=\"10\" text-anchor=\"end\">"
        << fmt(t * 0.25, "%.2f") << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 15 << "\" font-size=\"12\" text-anchor=\"middle\">epoch (0.."
      << max_epoch << ")</text>\n";
  std::size_t index = 0;
  for (const MetricsLog& l : sorted) {
    std::string points;
    for (const EpochSummary& s : l.epochs) {
      double v;
      if (any_truth) {
        if (!l.header.has_ground_truth || !s.pseudo_label_accuracy) continue;
        v = *s.pseudo_label_accuracy;
      } else {
        const int pool = s.pseudo_set_size + s.unlabeled_set_size;
        if (pool == 0) continue;
        v = static_cast<double>(s.pseudo_set_size) / pool;
      }
      const double x = left + pw * s.epoch / max_epoch;
      const double y = top + ph * (1.0 - v);
      points += fmt(x, "%.2f") + "," + fmt(y, "%.2f") + " ";
    }
    const char* color = kPalette[index % std::size(kPalette)];
    const double ly = top + 14.0 * static_cast<double>(index);
    if (!points.empty()) {
      points.pop_back();
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    }
    out << "<text x=\"" << left + pw + 10 << "\" y=\"" << fmt(ly + 10, "%.1f") << "\" font-size=\"10\" fill=\"" << color
        << "\">" << escape_xml(l.header.arm + " seed " + std::to_string(l.header.config.seed)) << "</text>\n";
    ++index;
  }
  out << "</svg>\n";
  return out.str();
}

std::string comparison_svg(std::span<const MetricsLog> logs) {
  const auto sorted = ordered(logs);
  const auto groups = group_final(sorted, [](const MetricsLog& l) { return l.header.arm; });
  const double bar = 50, gap = 20, left = 50, top = 30, ph = 260;
  const double w = left + (bar + gap) * static_cast<double>(std::max<std::size_t>(groups.size(), 1)) + gap;
  const double h = top + ph + 60;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w, "%.0f") << "\" height=\"" << fmt(h, "%.0f")
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">final target accuracy (%)</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << fmt(w - gap, "%.0f") << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  std::size_t index = 0;
  for (const auto& [arm, g] : groups) {
    const double x = left + gap + (bar + gap) * static_cast<double>(index);
    if (!g.target.empty()) {
      const double v = stats(g.target).mean;
      const double bh = ph * v;
      out << "<rect x=\"" << fmt(x, "%.1f") << "\" y=\"" << fmt(top + ph - bh, "%.2f") << "\" width=\"" << bar
          << "\" height=\"" << fmt(bh, "%.2f") << "\" fill=\"" << kPalette[index % std::size(kPalette)] << "\"/>\n";
      out << "<text x=\"" << fmt(x + bar / 2, "%.1f") << "\" y=\"" << fmt(top + ph - bh - 4, "%.2f")
          << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(100.0 * v, "%.2f") << "</text>\n";
    }
    out << "<text x=\"" << fmt(x + bar / 2, "%.1f") << "\" y=\"" << top + ph + 16
        << "\" font-size=\"10\" text-anchor=\"middle\">" << escape_xml(arm) << "</text>\n";
    ++index;
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<fs::path> write_report(std::span<const MetricsLog> logs, const fs::path& out_dir) {
  check_compatible(logs);
  fs::create_directories(out_dir);
  const std::vector<std::pair<std::string, std::string>> files{{"curves.tsv", curves_table(logs)},
                                                               {"curves.svg", curves_svg(logs)},
                                                               {"comparison.tsv", comparison_table(logs)},
                                                               {"comparison.svg", comparison_svg(logs)},
                                                               {"policy.tsv", policy_table(logs)}};
  std::vector<fs::path> written;
  for (const auto& [name, content] : files) {
    write_file(out_dir / name, content);
    written.push_back(out_dir / name);
  }
  return written;
}

}  // namespace ssdg
