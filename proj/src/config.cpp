#include "ssdg/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ssdg {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    kv.entries_[key] = trim(std::string_view(content).substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

double parse_double(const std::string& field, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(field + ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& field, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(field + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& field, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(field + ": expected true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  auto as_double = [&] { return parse_double(key, value); };
  auto as_bool = [&] { return parse_bool(key, value); };

  if (key == "gamma") c.gamma = as_double();
  else if (key == "delta") c.delta = as_double();
  else if (key == "alpha") c.alpha = as_double();
  else if (key == "num_classes") c.num_classes = as_int();
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "batch_size") c.batch_size = as_int();
  else if (key == "lr") c.lr = as_double();
  else if (key == "momentum") c.momentum = as_double();
  else if (key == "weight_decay") c.weight_decay = as_double();
  else if (key == "lr_decay_epochs") {
    c.lr_decay_epochs.clear();
    for (const std::string& e : split_list(value)) c.lr_decay_epochs.push_back(static_cast<int>(parse_int(key, e)));
  } else if (key == "ramp_epochs") c.ramp_epochs = as_int();
  else if (key == "rep_policy") c.rep_policy = parse_rep_policy(value);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "use_dapl") c.flags.use_dapl = as_bool();
  else if (key == "use_dual_classifier") c.flags.use_dual_classifier = as_bool();
  else if (key == "use_mixup") c.flags.use_mixup = as_bool();
  else if (key == "mixup_all") c.flags.mixup_all = as_bool();
  else if (key == "use_entropy") c.flags.use_entropy = as_bool();
  else if (key == "use_adv_mix") c.flags.use_adv_mix = as_bool();
  else if (key == "use_adversarial") c.flags.use_adversarial = as_bool();
  else if (key == "use_pseudo_labels") c.flags.use_pseudo_labels = as_bool();
  else if (key == "feature_dim") c.feature_dim = as_int();
  else if (key == "hidden_dim") c.hidden_dim = as_int();
  else if (key == "conv_channels") c.conv_channels = as_int();
  else return false;
  return true;
}

std::string to_text(const TrainConfig& c) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "gamma = " << format_double(c.gamma) << '\n'
      << "delta = " << format_double(c.delta) << '\n'
      << "alpha = " << format_double(c.alpha) << '\n'
      << "num_classes = " << c.num_classes << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "lr = " << format_double(c.lr) << '\n'
      << "momentum = " << format_double(c.momentum) << '\n'
      << "weight_decay = " << format_double(c.weight_decay) << '\n'
      << "lr_decay_epochs = ";
  for (std::size_t i = 0; i < c.lr_decay_epochs.size(); ++i) out << (i ? "," : "") << c.lr_decay_epochs[i];
  out << '\n'
      << "ramp_epochs = " << c.ramp_epochs << '\n'
      << "rep_policy = " << to_string(c.rep_policy) << '\n'
      << "seed = " << c.seed << '\n'
      << "use_dapl = " << b(c.flags.use_dapl) << '\n'
      << "use_dual_classifier = " << b(c.flags.use_dual_classifier) << '\n'
      << "use_mixup = " << b(c.flags.use_mixup) << '\n'
      << "mixup_all = " << b(c.flags.mixup_all) << '\n'
      << "use_entropy = " << b(c.flags.use_entropy) << '\n'
      << "use_adv_mix = " << b(c.flags.use_adv_mix) << '\n'
      << "use_adversarial = " << b(c.flags.use_adversarial) << '\n'
      << "use_pseudo_labels = " << b(c.flags.use_pseudo_labels) << '\n'
      << "feature_dim = " << c.feature_dim << '\n'
      << "hidden_dim = " << c.hidden_dim << '\n'
      << "conv_channels = " << c.conv_channels << '\n';
  return out.str();
}

TrainConfig train_config_from_text(std::string_view text) {
  TrainConfig config;
  const KeyValues values = KeyValues::parse(text);
  for (const auto& [key, value] : values.entries()) {
    if (!apply_train_key(config, key, value)) throw ConfigError(key + ": unknown key");
  }
  return config;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string config_hash(const TrainConfig& config) { return hex64(fnv1a64(to_text(config))); }

}  // namespace ssdg
