#include "seqpatch/cli/run_config.hpp"

#include "seqpatch/format.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

namespace seqpatch {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

template <typename T>
Field integer(T RunConfig::*group, Index T::*member) {
  return {[=](const RunConfig& c) { return std::to_string((c.*group).*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*group).*member = parse_number<Index>(k, v); }};
}

template <typename T>
Field real(T RunConfig::*group, double T::*member) {
  return {[=](const RunConfig& c) { return format_double((c.*group).*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*group).*member = parse_number<double>(k, v); }};
}

Field list(std::vector<double> PolicyGeometry::*member) {
  return {[=](const RunConfig& c) { return format_list(c.geometry.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { c.geometry.*member = parse_list(k, v); }};
}

Field text(std::string RunConfig::*member) {
  return {[=](const RunConfig& c) { return c.*member; },
          [=](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["image_h"] = integer(&RunConfig::geometry, &PolicyGeometry::image_h);
    t["image_w"] = integer(&RunConfig::geometry, &PolicyGeometry::image_w);
    t["grid_stride"] = integer(&RunConfig::geometry, &PolicyGeometry::grid_stride);
    t["box_base"] = real(&RunConfig::geometry, &PolicyGeometry::box_base);
    t["ratios"] = list(&PolicyGeometry::ratios);
    t["scales"] = list(&PolicyGeometry::scales);
    t["policy_input"] = integer(&RunConfig::geometry, &PolicyGeometry::policy_input);
    t["feature_dim"] = integer(&RunConfig::geometry, &PolicyGeometry::feature_dim);
    t["history_dim"] = integer(&RunConfig::geometry, &PolicyGeometry::history_dim);
    t["hidden_dim"] = integer(&RunConfig::geometry, &PolicyGeometry::hidden_dim);
    t["leaky_slope"] = real(&RunConfig::geometry, &PolicyGeometry::leaky_slope);
    t["steps"] = {[](const RunConfig& c) { return std::to_string(c.train.steps); },
                  [](RunConfig& c, const std::string& k, const std::string& v) { c.train.steps = parse_number<long>(k, v); }};
    t["learning_rate"] = real(&RunConfig::train, &TrainConfig::learning_rate);
    t["policy_learning_rate"] = real(&RunConfig::train, &TrainConfig::policy_learning_rate);
    t["weight_decay"] = real(&RunConfig::train, &TrainConfig::weight_decay);
    t["beta1"] = real(&RunConfig::train, &TrainConfig::beta1);
    t["beta2"] = real(&RunConfig::train, &TrainConfig::beta2);
    t["batch"] = {[](const RunConfig& c) { return std::to_string(c.train.batch); },
                  [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch = parse_number<long>(k, v); }};
    t["coverage_weight"] = real(&RunConfig::train, &TrainConfig::coverage_weight);
    t["reward_scale"] = real(&RunConfig::train, &TrainConfig::reward_scale);
    t["baseline"] = {[](const RunConfig& c) { return to_string(c.train.baseline); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                       try {
                         c.train.baseline = parse_baseline_mode(v);
                       } catch (const std::invalid_argument& e) {
                         throw ConfigError("config key '" + k + "': " + e.what());
                       }
                     }};
    t["baseline_decay"] = real(&RunConfig::train, &TrainConfig::baseline_decay);
    t["seed"] = {[](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.train.seed = parse_number<std::uint64_t>(k, v);
                 }};
    t["epochs"] = {[](const RunConfig& c) { return std::to_string(c.train.epochs); },
                   [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_number<long>(k, v); }};
    t["reference"] = {[](const RunConfig& c) { return c.train.reference; },
                      [](RunConfig& c, const std::string&, const std::string& v) { c.train.reference = v; }};
    t["reference_epochs"] = {[](const RunConfig& c) { return std::to_string(c.train.reference_epochs); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                               c.train.reference_epochs = parse_number<long>(k, v);
                             }};
    t["factor"] = {[](const RunConfig& c) { return std::to_string(c.factor); },
                   [](RunConfig& c, const std::string& k, const std::string& v) { c.factor = parse_number<int>(k, v); }};
    t["train_dir"] = text(&RunConfig::train_dir);
    t["val_dir"] = text(&RunConfig::val_dir);
    t["val_fraction"] = {[](const RunConfig& c) { return format_double(c.val_fraction); },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           c.val_fraction = parse_number<double>(k, v);
                         }};
    t["checkpoint_every"] = {[](const RunConfig& c) { return std::to_string(c.checkpoint_every); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                               c.checkpoint_every = parse_number<long>(k, v);
                             }};
    t["precision"] = text(&RunConfig::precision);
    return t;
  }();
  return table;
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    c.train.steps = 6;
    return c;
  }
  if (name == "paper") {
    c.geometry.image_h = 120;
    c.geometry.image_w = 160;
    c.geometry.box_base = 60;
    c.train.steps = 18;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
  }();
  return names;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

void RunConfig::validate() const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid config: ") + e.what());
    }
  };
  wrap([&] { geometry.validate(); });
  wrap([&] { train.validate(); });
  if (factor != 4 && factor != 8 && factor != 16) throw ConfigError("config key 'factor' must be 4, 8 or 16");
  if (geometry.image_h % factor != 0 || geometry.image_w % factor != 0)
    throw ConfigError("config keys 'image_h'/'image_w' must be divisible by factor " + std::to_string(factor));
  if (geometry.image_h % 4 != 0 || geometry.image_w % 4 != 0)
    throw ConfigError("config keys 'image_h'/'image_w' must be divisible by 4 (enhancer upscale)");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("config key 'val_fraction' must lie in [0, 1)");
  if (checkpoint_every < 1) throw ConfigError("config key 'checkpoint_every' must be at least 1");
  if (precision != "f32" && precision != "f64") throw ConfigError("config key 'precision' must be f32 or f64");
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      base.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

}  // namespace seqpatch
