#include "morphaeus/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace morphaeus {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

const std::map<std::string, Config::Type>& Config::schema() {
  using T = Type;
  static const std::map<std::string, Type> keys{
      {"experiment.kind", T::string},
      {"experiment.name", T::string},
      {"experiment.output", T::string},
      {"experiment.models", T::list},
      {"experiment.seeds", T::integer_list},
      {"experiment.score_mode", T::string},
      {"experiment.heatmap_k", T::integer},
      {"experiment.extractor", T::string},
      {"experiment.source_run", T::string},

      {"data.source", T::string},
      {"data.root", T::string},
      {"data.resolution", T::integer},
      {"data.train_class", T::string},
      {"data.ood_classes", T::list},
      {"data.normal_class", T::string},
      {"data.abnormal_classes", T::list},
      {"data.ood_samples", T::integer},
      {"data.fid_samples", T::integer},
      {"data.split_seed", T::integer},

      {"synthetic.n_normal", T::integer},
      {"synthetic.n_anomalous", T::integer},
      {"synthetic.n_ood", T::integer},
      {"synthetic.texture_seed", T::integer},
      {"synthetic.radius_min", T::real},
      {"synthetic.radius_max", T::real},
      {"synthetic.intensity_delta", T::real},

      {"train.max_epochs", T::integer},
      {"train.batch_size", T::integer},
      {"train.learning_rate", T::real},
      {"train.patience", T::integer},
      {"train.min_delta", T::real},
      {"train.deformation_start_epoch", T::integer},
      {"train.grad_clip_norm", T::real},
      {"train.deterministic", T::boolean},
      {"train.seed", T::integer},
      {"train.model", T::string},
      {"train.output", T::string},

      {"morphaeus.filters", T::integer_list},
      {"morphaeus.latent_channels", T::integer},
      {"morphaeus.head_filters", T::integer},
      {"morphaeus.alpha", T::real},
      {"morphaeus.beta_start", T::real},
      {"morphaeus.beta_end", T::real},
      {"morphaeus.max_displacement", T::real},
      {"morphaeus.lncc_window", T::integer},
      {"morphaeus.smoothness", T::string},
      {"morphaeus.stop_warp_gradient", T::boolean},
      {"morphaeus.use_warp", T::boolean},

      {"baseline.filters", T::integer_list},
      {"baseline.latent_dim", T::integer},
      {"baseline.latent_channels", T::integer},
      {"baseline.noise_magnitude", T::real},
      {"baseline.noise_coarseness", T::integer},
      {"baseline.gamma", T::real},
      {"baseline.capacity_max", T::real},

      {"depth_sweep.depths", T::integer_list},
      {"depth_sweep.filters", T::integer_list},

      {"classifier.max_epochs", T::integer},
      {"classifier.min_accuracy", T::real},
      {"classifier.samples_per_class", T::integer},
  };
  return keys;
}

namespace {

std::string type_name(Config::Type t) {
  switch (t) {
    case Config::Type::string: return "string";
    case Config::Type::integer: return "integer";
    case Config::Type::real: return "number";
    case Config::Type::boolean: return "boolean";
    case Config::Type::list: return "comma-separated list";
    case Config::Type::integer_list: return "comma-separated integer list";
  }
  return "value";
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  auto t = boost::trim_copy(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  auto t = boost::trim_copy(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<bool> parse_bool(const std::string& s) {
  auto t = boost::to_lower_copy(boost::trim_copy(s));
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  return std::nullopt;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts, out;
  boost::split(parts, s, boost::is_any_of(","));
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

/// Canonical `section.key` for a full or bare key name.
std::string resolve_key(const std::string& key) {
  const auto& schema = Config::schema();
  if (schema.count(key)) return key;
  if (key.find('.') == std::string::npos) {
    std::vector<std::string> matches;
    for (const auto& [k, _] : schema) {
      if (k.substr(k.find('.') + 1) == key) matches.push_back(k);
    }
    if (matches.size() == 1) return matches.front();
    if (matches.size() > 1) {
      throw ConfigError("ambiguous key '" + key + "' (candidates: " + boost::join(matches, ", ") + ")");
    }
  }
  return key;
}

/// Line of each `section.key`, for diagnostics only.
std::map<std::string, int> key_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream is(text);
  std::string line, section;
  for (int n = 1; std::getline(is, line); ++n) {
    boost::trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = boost::trim_copy(line.substr(1, line.size() - 2));
    } else if (auto eq = line.find('='); eq != std::string::npos) {
      auto key = boost::trim_copy(line.substr(0, eq));
      lines[section.empty() ? key : section + "." + key] = n;
    }
  }
  return lines;
}

}  // namespace

std::string Config::where(const std::string& key, std::optional<int> line) const {
  std::string w = origin_;
  if (line) w += ":" + std::to_string(*line);
  return w + ": key '" + key + "'";
}

void Config::check(const std::string& key, const std::string& value, std::optional<int> line) const {
  const auto& schema = Config::schema();
  auto it = schema.find(key);
  if (it == schema.end()) {
    auto dot = key.find('.');
    std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    std::vector<std::string> known;
    for (const auto& [k, _] : schema) {
      if (!section.empty() && k.rfind(section + ".", 0) == 0) known.push_back(k.substr(dot + 1));
    }
    std::string hint = known.empty() ? "" : " (known keys in [" + section + "]: " + boost::join(known, ", ") + ")";
    throw ConfigError(where(key, line) + " is not a recognised setting" + hint);
  }
  bool ok = true;
  switch (it->second) {
    case Type::string: ok = !boost::trim_copy(value).empty(); break;
    case Type::integer: ok = parse_int(value).has_value(); break;
    case Type::real: ok = parse_real(value).has_value(); break;
    case Type::boolean: ok = parse_bool(value).has_value(); break;
    case Type::list: ok = !split_list(value).empty(); break;
    case Type::integer_list:
      for (const auto& p : split_list(value)) ok = ok && parse_int(p).has_value();
      ok = ok && !split_list(value).empty();
      break;
  }
  if (!ok) throw ConfigError(where(key, line) + ": expected " + type_name(it->second) + ", got '" + value + "'");
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  cfg.lines_ = key_lines(text);
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      auto line = cfg.lines_.count(section) ? std::optional<int>(cfg.lines_[section]) : std::nullopt;
      throw ConfigError(cfg.where(section, line) + " appears outside any [section]");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      std::optional<int> line;
      if (auto it = cfg.lines_.find(full); it != cfg.lines_.end()) line = it->second;
      const auto value = boost::trim_copy(node.get_value<std::string>());
      cfg.check(full, value, line);
      cfg.values_[full] = value;
    }
  }
  return cfg;
}

Config Config::from_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  Config cfg = from_string(buf.str(), path.string());
  cfg.base_dir_ = fs::absolute(path).parent_path();
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto full = resolve_key(boost::trim_copy(key));
  const auto v = boost::trim_copy(value);
  check(full, v, std::nullopt);
  values_[full] = v;
}

void Config::apply_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) apply_override(a);
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : *parse_int(it->second);
}

double Config::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : *parse_real(it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : *parse_bool(it->second);
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

std::vector<int> Config::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (const auto& p : split_list(it->second)) out.push_back(static_cast<int>(*parse_int(p)));
  return out;
}

fs::path Config::get_path(const std::string& key, const fs::path& fallback) const {
  if (!has(key)) return fallback;
  fs::path p = get_string(key);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  return p;
}

std::vector<std::string> Config::keys_in(const std::string& section) const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_) {
    if (k.rfind(section + ".", 0) == 0) out.push_back(k.substr(section.size() + 1));
  }
  return out;
}

std::string Config::dump() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [k, v] : values_) {
    auto dot = k.find('.');
    auto s = k.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << "\n";
      os << "[" << s << "]\n";
      section = s;
    }
    os << k.substr(dot + 1) << " = " << v << "\n";
  }
  return os.str();
}

std::string Config::hash() const { return sha256_hex(dump()); }

}  // namespace morphaeus
