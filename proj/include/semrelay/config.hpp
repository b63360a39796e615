#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "semrelay/channel.hpp"
#include "semrelay/semnet.hpp"
#include "semrelay/training.hpp"

namespace semrelay::config {

// Everything the command line needs, readable from a flat "key = value" file.
struct AppConfig {
  channel::ChannelParams channel;
  semnet::ModelConfig model;
  training::TrainConfig train;
  int vocab_target = 24045;
  int max_sentences = 0;  // 0 keeps every sentence
  std::vector<double> sweep_gammas{0.2, 0.35, 0.5, 0.65, 0.8};
  std::vector<double> sweep_distances{2000, 3000, 4000, 5000, 6000, 7000};
  double eval_d_sd = 4000.0;
  double eval_gamma = 0.5;
  long calibration_symbols = 100000;
  int eval_sentences = 0;  // 0 evaluates the whole test split

  static AppConfig defaults(training::Scale scale);
  void validate() const;
  std::map<std::string, std::string> to_map() const;
};

// Unknown keys and malformed values are errors. A "scale" key selects the
// preset the remaining keys are applied on top of.
AppConfig parse_config(std::istream& in);
AppConfig load_config_file(const std::string& path);
void apply(AppConfig& cfg, const std::string& key, const std::string& value);
void write_config(std::ostream& out, const AppConfig& cfg);

std::vector<double> parse_list(const std::string& value);

}  // namespace semrelay::config
