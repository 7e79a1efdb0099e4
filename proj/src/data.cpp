#include "ssdg/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace ssdg {

namespace fs = std::filesystem;

std::optional<double> HiddenLabels::pseudo_label_accuracy(
    std::span<const PseudoLabeledSample> pseudo) const {
  if (pseudo.empty()) return std::nullopt;
  std::size_t correct = 0;
  for (const PseudoLabeledSample& p : pseudo) {
    const auto truth = reveal(p.sample.id);
    if (!truth) return std::nullopt;
    if (*truth == p.class_index()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pseudo.size());
}

std::optional<int> HiddenLabels::reveal(SampleId id) const {
  const auto it = labels_.find(to_underlying(id));
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

std::vector<Sample> DatasetBundle::unlabeled_samples() const {
  std::vector<Sample> out;
  for (const std::string& name : unlabeled_domains) {
    const auto& s = domains.at(name);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

const std::vector<Sample>& DatasetBundle::target_samples() const {
  if (!target_domain) throw SchemaError("dataset has no target domain");
  return domains.at(*target_domain);
}

const std::vector<Sample>& DatasetBundle::samples(const std::string& domain) const {
  const auto it = domains.find(domain);
  if (it == domains.end()) throw SchemaError("unknown domain '" + domain + "'");
  return it->second;
}

DomainRoles default_roles(const RawDataset& raw, const std::optional<std::string>& labeled,
                          const std::optional<std::string>& target,
                          const std::vector<std::string>& unlabeled) {
  if (raw.domain_names.size() < 2) throw SchemaError("need at least two domains");
  DomainRoles roles;
  roles.labeled = labeled.value_or(raw.domain_names.front());
  if (target) {
    roles.target = target;
  } else {
    // Last domain that is not the labeled one, unless it was listed as unlabeled.
    for (auto it = raw.domain_names.rbegin(); it != raw.domain_names.rend(); ++it) {
      if (*it == roles.labeled) continue;
      if (std::find(unlabeled.begin(), unlabeled.end(), *it) == unlabeled.end()) roles.target = *it;
      break;
    }
  }
  if (!unlabeled.empty()) {
    roles.unlabeled = unlabeled;
  } else {
    for (const std::string& name : raw.domain_names) {
      if (name != roles.labeled && (!roles.target || name != *roles.target)) roles.unlabeled.push_back(name);
    }
  }
  return roles;
}

DatasetBundle make_bundle(const RawDataset& raw, const DomainRoles& roles) {
  std::set<std::string> used;
  auto claim = [&](const std::string& name, const char* role) {
    if (!raw.domains.contains(name)) {
      throw SchemaError(std::string(role) + " domain '" + name + "' does not exist");
    }
    if (!used.insert(name).second) {
      throw SchemaError("domain '" + name + "' is assigned more than one role");
    }
  };
  claim(roles.labeled, "labeled");
  for (const std::string& name : roles.unlabeled) claim(name, "unlabeled");
  if (roles.target) claim(*roles.target, "target");
  if (roles.unlabeled.empty()) throw SchemaError("at least one unlabeled domain is required");

  DatasetBundle bundle;
  bundle.labeled_domain = roles.labeled;
  bundle.unlabeled_domains = roles.unlabeled;
  bundle.target_domain = roles.target;
  bundle.class_names = raw.class_names;
  bundle.layout = raw.layout;

  std::uint64_t next_id = 0;
  auto ingest = [&](const std::string& name, int domain_id, bool hide) {
    std::vector<Sample>& out = bundle.domains[name];
    for (const RawDataset::Item& item : raw.domains.at(name)) {
      if (item.input.size() != raw.layout.size()) {
        throw SchemaError("domain '" + name + "' has an input of the wrong size");
      }
      if (item.label < 0 || item.label >= static_cast<int>(raw.class_names.size())) {
        throw SchemaError("domain '" + name + "' has a label outside the class list");
      }
      Sample s;
      s.id = SampleId{next_id++};
      s.input = item.input;
      s.domain_id = domain_id;
      if (hide) {
        bundle.ground_truth_for_unlabeled.record(s.id, item.label);
      } else {
        s.class_label = item.label;
      }
      out.push_back(std::move(s));
    }
  };
  ingest(roles.labeled, kLabeledDomain, false);
  for (std::size_t i = 0; i < roles.unlabeled.size(); ++i) {
    ingest(roles.unlabeled[i], static_cast<int>(i) + 1, true);
  }
  if (roles.target) ingest(*roles.target, static_cast<int>(roles.unlabeled.size()) + 1, false);
  return bundle;
}

DatasetBundle load_directory_dataset(const fs::path& root, const SplitSpec& split) {
  if (!fs::is_directory(root)) throw SchemaError("dataset root '" + root.string() + "' is not a directory");
  if (split.channels != 1 && split.channels != 3) throw ConfigError("channels must be 1 or 3");
  if (split.image_side < 4) throw ConfigError("image_side must be >= 4");
  if (split.mean.size() != static_cast<std::size_t>(split.channels) ||
      split.stddev.size() != static_cast<std::size_t>(split.channels)) {
    throw ConfigError("mean/stddev need one entry per channel");
  }

  auto sorted_dirs = [](const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  RawDataset raw;
  raw.layout.kind = InputLayout::Kind::image;
  raw.layout.image = {split.channels, split.image_side, split.image_side};
  std::vector<std::string> warnings;
  std::size_t skipped = 0;

  std::optional<std::vector<std::string>> classes;
  for (const fs::path& domain_dir : sorted_dirs(root)) {
    const std::string domain = domain_dir.filename().string();
    std::vector<std::string> domain_classes;
    for (const fs::path& class_dir : sorted_dirs(domain_dir)) domain_classes.push_back(class_dir.filename().string());
    if (!classes) {
      classes = domain_classes;
    } else if (*classes != domain_classes) {
      throw SchemaError("domain '" + domain + "' has a different class set than '" + raw.domain_names.front() + "'");
    }
    raw.domain_names.push_back(domain);
    auto& items = raw.domains[domain];
    for (std::size_t c = 0; c < domain_classes.size(); ++c) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(domain_dir / domain_classes[c])) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) {
        warnings.push_back("empty class directory: " + domain + "/" + domain_classes[c]);
      }
      for (const fs::path& file : files) {
        cv::Mat image = cv::imread(file.string(), split.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
        if (image.empty()) {
          warnings.push_back("unreadable image skipped: " + file.string());
          ++skipped;
          continue;
        }
        if (split.channels == 3) cv::cvtColor(image, image, cv::COLOR_BGR2RGB);
        cv::resize(image, image, cv::Size(split.image_side, split.image_side), 0, 0, cv::INTER_AREA);
        image.convertTo(image, CV_64F, 1.0 / 255.0);
        RawDataset::Item item;
        item.label = static_cast<int>(c);
        item.input.resize(raw.layout.size());
        const int side = split.image_side;
        for (int y = 0; y < side; ++y) {
          for (int x = 0; x < side; ++x) {
            for (int ch = 0; ch < split.channels; ++ch) {
              const double v = split.channels == 1 ? image.at<double>(y, x) : image.at<cv::Vec3d>(y, x)[ch];
              item.input((Eigen::Index{ch} * side + y) * side + x) = (v - split.mean[ch]) / split.stddev[ch];
            }
          }
        }
        items.push_back(std::move(item));
      }
    }
  }
  if (!classes || classes->empty()) throw SchemaError("no class directories under '" + root.string() + "'");
  raw.class_names = *classes;

  DatasetBundle bundle = make_bundle(raw, split.roles);
  bundle.warnings = std::move(warnings);
  bundle.skipped_files = skipped;
  return bundle;
}

namespace {

std::string layout_string(const InputLayout& layout) {
  if (layout.kind == InputLayout::Kind::vector) return "vector:" + std::to_string(layout.dim);
  return "image:" + std::to_string(layout.image.channels) + "x" + std::to_string(layout.image.height) + "x" +
         std::to_string(layout.image.width);
}

InputLayout parse_layout(const std::string& text) {
  InputLayout layout;
  if (text.rfind("vector:", 0) == 0) {
    layout.dim = std::stoi(text.substr(7));
    return layout;
  }
  if (text.rfind("image:", 0) == 0) {
    layout.kind = InputLayout::Kind::image;
    char x1 = 0, x2 = 0;
    std::istringstream in(text.substr(6));
    in >> layout.image.channels >> x1 >> layout.image.height >> x2 >> layout.image.width;
    if (!in || x1 != 'x' || x2 != 'x') throw SchemaError("bad image layout '" + text + "'");
    return layout;
  }
  throw SchemaError("unknown layout '" + text + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

}  // namespace

void write_table(const RawDataset& raw, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << "# layout=" << layout_string(raw.layout) << "\n# classes=";
  for (std::size_t i = 0; i < raw.class_names.size(); ++i) out << (i ? ";" : "") << raw.class_names[i];
  out << "\ndomain,label";
  for (Eigen::Index j = 0; j < raw.layout.size(); ++j) out << ",x" << j;
  out << '\n';
  out.precision(17);
  for (const std::string& name : raw.domain_names) {
    for (const RawDataset::Item& item : raw.domains.at(name)) {
      out << name << ',' << item.label;
      for (Eigen::Index j = 0; j < item.input.size(); ++j) out << ',' << item.input(j);
      out << '\n';
    }
  }
  if (!out) throw SchemaError("failed writing '" + path.string() + "'");
}

RawDataset read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read '" + path.string() + "'");
  RawDataset raw;
  std::string line;
  bool have_layout = false;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# layout=", 0) == 0) {
      raw.layout = parse_layout(line.substr(9));
      have_layout = true;
      continue;
    }
    if (line.rfind("# classes=", 0) == 0) {
      raw.class_names = split(line.substr(10), ';');
      continue;
    }
    if (line[0] == '#') continue;
    const auto fields = split(line, ',');
    if (!have_header) {
      if (!have_layout || fields.size() < 3 || fields[0] != "domain" || fields[1] != "label") {
        throw SchemaError(path.string() + ": missing layout comment or header row");
      }
      if (static_cast<Eigen::Index>(fields.size() - 2) != raw.layout.size()) {
        throw SchemaError(path.string() + ": header width does not match layout");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != static_cast<std::size_t>(raw.layout.size()) + 2) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": wrong number of fields");
    }
    RawDataset::Item item;
    try {
      item.label = std::stoi(fields[1]);
      item.input.resize(raw.layout.size());
      for (Eigen::Index j = 0; j < raw.layout.size(); ++j) item.input(j) = std::stod(fields[j + 2]);
    } catch (const std::logic_error&) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (!raw.domains.contains(fields[0])) raw.domain_names.push_back(fields[0]);
    raw.domains[fields[0]].push_back(std::move(item));
  }
  if (!have_header) throw SchemaError(path.string() + ": no header row");
  if (raw.class_names.empty()) {
    int max_label = -1;
    for (const auto& [name, items] : raw.domains) {
      for (const auto& item : items) max_label = std::max(max_label, item.label);
    }
    for (int c = 0; c <= max_label; ++c) raw.class_names.push_back("class" + std::to_string(c));
  }
  return raw;
}

}  // namespace ssdg
