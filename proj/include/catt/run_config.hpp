// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "catt/decoder.hpp"
#include "catt/evaluate.hpp"
#include "catt/synth.hpp"
#include "catt/train.hpp"
#include "catt/transducer.hpp"

namespace catt {

// Bad or unreadable configuration; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  std::vector<DecodeMode> modes{DecodeMode::kAlwaysOff, DecodeMode::kAlwaysOn,
                                DecodeMode::kRandom50};
  std::vector<int> bias_n{0, 20};
  EvalOptions options;
};

struct BenchSettings {
  std::vector<DecodeMode> modes{DecodeMode::kAlwaysOn, DecodeMode::kAlwaysOff};
  int bias_n = 20;
  int repeats = 3;
  int utterances = 0;  // 0: whole common set
};

struct RunConfig {
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  EvalSettings eval;
  BenchSettings bench;
  std::string data_dir = "data";
  std::string out_dir = "out";
};

// Model feature/vocabulary sizes follow the synth section.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& p);
nlohmann::json to_json(const RunConfig& c);

std::vector<DecodeMode> parse_mode_list(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

}  // namespace catt
