#include "semrelay/config.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace semrelay::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw Error("config: " + key + " expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw Error("config: " + key + " expects a number, got '" + v + "'");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long x = 0;
  try {
    x = std::stol(v, &used);
  } catch (const std::exception&) {
    throw Error("config: " + key + " expects an integer, got '" + v + "'");
  }
  if (used != v.size()) throw Error("config: " + key + " expects an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: " + key + " expects true or false, got '" + v + "'");
}

std::string join(const std::vector<double>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

std::string num(double x) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return ss.str();
}

}  // namespace

AppConfig AppConfig::defaults(training::Scale scale) {
  AppConfig c;
  c.train = training::TrainConfig::for_scale(scale);
  if (scale == training::Scale::toy) {
    c.vocab_target = 1024;
    c.model = semnet::ModelConfig::toy(c.vocab_target);
    c.max_sentences = 20000;
    c.eval_sentences = 200;
  } else {
    c.model = semnet::ModelConfig::paper();
  }
  return c;
}

void AppConfig::validate() const {
  channel.validate();
  model.validate();
  train.validate();
  if (vocab_target < 16) throw Error("vocab_target must be at least 16");
  if (sweep_gammas.empty() || sweep_distances.empty()) throw Error("sweep grids must be non-empty");
  for (double g : sweep_gammas) {
    if (!(g > 0.0 && g < 1.0)) throw Error("sweep gammas must lie in (0, 1)");
  }
  for (double d : sweep_distances) {
    if (!(d > 0.0)) throw Error("sweep distances must be positive");
  }
  if (!(eval_d_sd > 0.0) || !(eval_gamma > 0.0 && eval_gamma < 1.0)) throw Error("invalid eval geometry");
  if (calibration_symbols <= 0) throw Error("calibration_symbols must be positive");
}

void apply(AppConfig& c, const std::string& key, const std::string& v) {
  if (key == "n0_dbm_per_hz") c.channel.n0_dbm_per_hz = to_double(key, v);
  else if (key == "bandwidth_hz") c.channel.bandwidth_hz = to_double(key, v);
  else if (key == "tx_power_dbm") c.channel.tx_power_dbm = to_double(key, v);
  else if (key == "pathloss_exponent") c.channel.pathloss_exponent = to_double(key, v);
  else if (key == "fading") c.channel.fading = channel::parse_fading(v);
  else if (key == "compensation") c.channel.compensation = channel::parse_compensation(v);
  else if (key == "vocab_size") c.model.vocab_size = static_cast<int>(to_long(key, v));
  else if (key == "embed_dim") c.model.embed_dim = static_cast<int>(to_long(key, v));
  else if (key == "channel_dim") c.model.channel_dim = static_cast<int>(to_long(key, v));
  else if (key == "heads") c.model.heads = static_cast<int>(to_long(key, v));
  else if (key == "decoder_blocks") c.model.decoder_blocks = static_cast<int>(to_long(key, v));
  else if (key == "encoder_blocks") c.model.encoder_blocks = static_cast<int>(to_long(key, v));
  else if (key == "ff_dim") c.model.ff_dim = static_cast<int>(to_long(key, v));
  else if (key == "max_len") c.model.max_len = static_cast<int>(to_long(key, v));
  else if (key == "epochs") c.train.epochs = static_cast<int>(to_long(key, v));
  else if (key == "learning_rate") c.train.learning_rate = to_double(key, v);
  else if (key == "weight_decay") c.train.weight_decay = to_double(key, v);
  else if (key == "batch_size") c.train.batch_size = static_cast<int>(to_long(key, v));
  else if (key == "d_min") c.train.d_min = to_double(key, v);
  else if (key == "d_max") c.train.d_max = to_double(key, v);
  else if (key == "gamma_min") c.train.gamma_min = to_double(key, v);
  else if (key == "gamma_max") c.train.gamma_max = to_double(key, v);
  else if (key == "scheme") c.train.scheme = relay::parse_scheme(v);
  else if (key == "scale") c.train.scale = training::parse_scale(v);
  else if (key == "teacher_forcing") c.train.teacher_forcing = to_bool(key, v);
  else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(to_long(key, v));
  else if (key == "vocab_target") c.vocab_target = static_cast<int>(to_long(key, v));
  else if (key == "max_sentences") c.max_sentences = static_cast<int>(to_long(key, v));
  else if (key == "sweep_gammas") c.sweep_gammas = parse_list(v);
  else if (key == "sweep_distances") c.sweep_distances = parse_list(v);
  else if (key == "eval_d_sd") c.eval_d_sd = to_double(key, v);
  else if (key == "eval_gamma") c.eval_gamma = to_double(key, v);
  else if (key == "calibration_symbols") c.calibration_symbols = to_long(key, v);
  else if (key == "eval_sentences") c.eval_sentences = static_cast<int>(to_long(key, v));
  else throw Error("config: unknown key '" + key + "'");
  c.train.channel = c.channel;
}

std::vector<double> parse_list(const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double("list", item));
  }
  return out;
}

std::map<std::string, std::string> AppConfig::to_map() const {
  std::map<std::string, std::string> m = model.to_map();
  m["n0_dbm_per_hz"] = num(channel.n0_dbm_per_hz);
  m["bandwidth_hz"] = num(channel.bandwidth_hz);
  m["tx_power_dbm"] = num(channel.tx_power_dbm);
  m["pathloss_exponent"] = num(channel.pathloss_exponent);
  m["fading"] = channel::to_string(channel.fading);
  m["compensation"] = channel::to_string(channel.compensation);
  m["epochs"] = std::to_string(train.epochs);
  m["learning_rate"] = num(train.learning_rate);
  m["weight_decay"] = num(train.weight_decay);
  m["batch_size"] = std::to_string(train.batch_size);
  m["d_min"] = num(train.d_min);
  m["d_max"] = num(train.d_max);
  m["gamma_min"] = num(train.gamma_min);
  m["gamma_max"] = num(train.gamma_max);
  m["scheme"] = relay::to_string(train.scheme);
  m["scale"] = training::to_string(train.scale);
  m["seed"] = std::to_string(train.seed);
  m["teacher_forcing"] = train.teacher_forcing ? "true" : "false";
  m["vocab_target"] = std::to_string(vocab_target);
  m["max_sentences"] = std::to_string(max_sentences);
  m["sweep_gammas"] = join(sweep_gammas);
  m["sweep_distances"] = join(sweep_distances);
  m["eval_d_sd"] = num(eval_d_sd);
  m["eval_gamma"] = num(eval_gamma);
  m["calibration_symbols"] = std::to_string(calibration_symbols);
  m["eval_sentences"] = std::to_string(eval_sentences);
  return m;
}

AppConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  long lineno = 0;
  training::Scale scale = training::Scale::paper;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IngestError("config: expected key = value", lineno);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw IngestError("config: empty key", lineno);
    if (key == "scale") scale = training::parse_scale(value);
    entries.emplace_back(std::move(key), std::move(value));
  }
  AppConfig cfg = AppConfig::defaults(scale);
  for (const auto& [k, v] : entries) apply(cfg, k, v);
  cfg.validate();
  return cfg;
}

AppConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path);
  return parse_config(in);
}

void write_config(std::ostream& out, const AppConfig& cfg) {
  for (const auto& [k, v] : cfg.to_map()) out << k << " = " << v << '\n';
}

}  // namespace semrelay::config
