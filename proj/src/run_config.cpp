#include "akgan/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace akgan {

namespace {

struct Preset {
  const char* name;
  double lr, l2, tau;
  int d_max, d_min, c;
};

constexpr Preset kPresets[] = {
    {"amazon-book", 1e-4, 1e-5, 0.25, 32, 4, 5000},
    {"last-fm", 1e-4, 1e-5, 0.5, 64, 16, 5000},
    {"alibaba-ifashion", 1e-4, 1e-5, 0.1, 64, 4, 5000},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("bad value for " + key + ": '" + v + "' (expected true|false)");
}

}  // namespace

std::filesystem::path RunConfig::kg() const {
  return kg_path.empty() ? data_dir / "kg_final.txt" : kg_path;
}
std::filesystem::path RunConfig::train_file() const {
  return train_path.empty() ? data_dir / "train.txt" : train_path;
}
std::filesystem::path RunConfig::test_file() const {
  return test_path.empty() ? data_dir / "test.txt" : test_path;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const Preset& p : kPresets) out.emplace_back(p.name);
  return out;
}

TrainConfig preset_config(const std::string& name) {
  for (const Preset& p : kPresets) {
    if (name != p.name) continue;
    TrainConfig c;
    c.learning_rate = p.lr;
    c.l2 = p.l2;
    c.temperature = p.tau;
    c.schedule = DimensionSchedule{p.d_min, p.d_max, p.c};
    return c;
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : "|") + n;
  throw ConfigError("unknown preset '" + name + "' (expected " + known + ")");
}

ConfigValues parse_config(const std::string& text, const std::string& origin) {
  ConfigValues out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    // strip comments outside quotes
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') quoted = !quoted;
      if (line[k] == '#' && !quoted) {
        line.resize(k);
        break;
      }
    }
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(s).substr(0, eq));
    std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!value.empty() && value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw ConfigError(where + "unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_config(RunConfig& cfg, const ConfigValues& values) {
  if (auto it = values.find("run.preset"); it != values.end()) {
    cfg.preset = it->second;
    cfg.train = preset_config(cfg.preset);
  }
  TrainConfig& t = cfg.train;
  for (const auto& [key, v] : values) {
    if (key == "run.preset") continue;
    else if (key == "run.out") cfg.out_dir = v;
    else if (key == "data.dir") cfg.data_dir = v;
    else if (key == "data.kg") cfg.kg_path = v;
    else if (key == "data.train") cfg.train_path = v;
    else if (key == "data.test") cfg.test_path = v;
    else if (key == "data.item_count") cfg.item_count = parse_number<std::size_t>(key, v);
    else if (key == "train.learning_rate") t.learning_rate = parse_number<double>(key, v);
    else if (key == "train.l2") t.l2 = parse_number<double>(key, v);
    else if (key == "train.temperature") t.temperature = parse_number<double>(key, v);
    else if (key == "train.layers") t.layers = parse_number<int>(key, v);
    else if (key == "train.batch_size") t.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "train.node_dropout") t.node_dropout = parse_number<double>(key, v);
    else if (key == "train.patience") t.patience = parse_number<int>(key, v);
    else if (key == "train.max_epochs") t.max_epochs = parse_number<int>(key, v);
    else if (key == "train.seed") t.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "train.ablation") t.variant = parse_variant(v);
    else if (key == "train.eval_k") t.eval_k = parse_number<std::size_t>(key, v);
    else if (key == "train.validation_fraction") t.validation_fraction = parse_number<double>(key, v);
    else if (key == "train.max_batches_per_epoch") t.max_batches_per_epoch = parse_number<std::size_t>(key, v);
    else if (key == "train.full_regularization")
      t.regularization = parse_bool(key, v) ? RegularizationScope::full : RegularizationScope::batch;
    else if (key == "schedule.d_min") t.schedule.d_min = parse_number<int>(key, v);
    else if (key == "schedule.d_max") t.schedule.d_max = parse_number<int>(key, v);
    else if (key == "schedule.c") t.schedule.c = parse_number<int>(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string manifest_text(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream o;
  o << "[run]\n"
    << "preset = " << quote(cfg.preset) << "\n"
    << "out = " << quote(cfg.out_dir.string()) << "\n\n"
    << "[data]\n"
    << "dir = " << quote(cfg.data_dir.string()) << "\n"
    << "kg = " << quote(cfg.kg().string()) << "\n"
    << "train = " << quote(cfg.train_file().string()) << "\n"
    << "test = " << quote(cfg.test_file().string()) << "\n"
    << "item_count = " << cfg.item_count << "\n\n"
    << "[train]\n"
    << "learning_rate = " << fmt_double(t.learning_rate) << "\n"
    << "l2 = " << fmt_double(t.l2) << "\n"
    << "temperature = " << fmt_double(t.temperature) << "\n"
    << "layers = " << t.layers << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "node_dropout = " << fmt_double(t.node_dropout) << "\n"
    << "patience = " << t.patience << "\n"
    << "max_epochs = " << t.max_epochs << "\n"
    << "seed = " << t.seed << "\n"
    << "ablation = " << quote(t.variant == Variant::akgan ? "none" : to_string(t.variant)) << "\n"
    << "eval_k = " << t.eval_k << "\n"
    << "validation_fraction = " << fmt_double(t.validation_fraction) << "\n"
    << "max_batches_per_epoch = " << t.max_batches_per_epoch << "\n"
    << "full_regularization = " << (t.regularization == RegularizationScope::full ? "true" : "false") << "\n\n"
    << "[schedule]\n"
    << "d_min = " << t.schedule.d_min << "\n"
    << "d_max = " << t.schedule.d_max << "\n"
    << "c = " << t.schedule.c << "\n";
  return o.str();
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << manifest_text(cfg);
}

RunConfig resolve_config(const std::filesystem::path& config_file, const ConfigValues& overrides) {
  RunConfig cfg;
  cfg.train = preset_config(cfg.preset);
  ConfigValues file;
  if (!config_file.empty()) file = read_config_file(config_file);
  // a preset named anywhere is applied before any individual value
  ConfigValues preset;
  if (auto it = overrides.find("run.preset"); it != overrides.end()) preset["run.preset"] = it->second;
  else if (auto jt = file.find("run.preset"); jt != file.end()) preset["run.preset"] = jt->second;
  apply_config(cfg, preset);
  file.erase("run.preset");
  apply_config(cfg, file);
  ConfigValues rest = overrides;
  rest.erase("run.preset");
  apply_config(cfg, rest);
  return cfg;
}

}  // namespace akgan
