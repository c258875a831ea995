// SPDX-License-Identifier: Apache-2.0
#include "catt/run_config.hpp"

#include <sstream>

#include "catt/io.hpp"
#include "catt/json_util.hpp"

namespace catt {
namespace {

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("empty list '" + csv + "'");
  return out;
}

std::vector<DecodeMode> modes_from_json(const nlohmann::json& j) {
  std::vector<DecodeMode> out;
  for (const auto& m : j.get<std::vector<std::string>>()) out.push_back(parse_decode_mode(m));
  if (out.empty()) throw std::invalid_argument("mode list is empty");
  return out;
}

nlohmann::json modes_to_json(const std::vector<DecodeMode>& modes) {
  nlohmann::json a = nlohmann::json::array();
  for (auto m : modes) a.push_back(to_string(m));
  return a;
}

}  // namespace

std::vector<DecodeMode> parse_mode_list(const std::string& csv) {
  std::vector<DecodeMode> out;
  for (const auto& s : split_csv(csv)) out.push_back(parse_decode_mode(s));
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_csv(csv)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || v < 0) throw std::invalid_argument("bad list size '" + s + "'");
    out.push_back(v);
  }
  return out;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"model", "synth", "train", "eval", "bench", "paths"}, "run config");
  RunConfig c;
  if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
  nlohmann::json model = j.value("model", nlohmann::json::object());
  if (!model.is_object()) throw std::invalid_argument("model config must be a JSON object");
  if (model.contains("vocab_size") || model.contains("feature_dim")) {
    throw std::invalid_argument("vocab_size and feature_dim are taken from the synth section");
  }
  model["vocab_size"] = c.synth.vocab_size;
  model["feature_dim"] = c.synth.feature_dim;
  c.model = model_config_from_json(model);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown_keys(e,
                        {"modes", "bias_n", "list_seed", "decode_seed", "initial_gate", "latch",
                         "max_symbols_per_frame"},
                        "eval config");
    if (e.contains("modes")) c.eval.modes = modes_from_json(e.at("modes"));
    read_key(e, "bias_n", c.eval.bias_n);
    read_key(e, "list_seed", c.eval.options.list_seed);
    read_key(e, "decode_seed", c.eval.options.decode_seed);
    if (e.contains("initial_gate")) {
      c.eval.options.initial_gate = parse_initial_gate(e.at("initial_gate").get<std::string>());
    }
    read_key(e, "latch", c.eval.options.latch);
    read_key(e, "max_symbols_per_frame", c.eval.options.max_symbols_per_frame);
    for (int n : c.eval.bias_n) {
      if (n < 0) throw std::invalid_argument("bias_n entries must be non-negative");
    }
    if (c.eval.options.max_symbols_per_frame < 1) {
      throw std::invalid_argument("max_symbols_per_frame must be positive");
    }
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    reject_unknown_keys(b, {"modes", "bias_n", "repeats", "utterances"}, "bench config");
    if (b.contains("modes")) c.bench.modes = modes_from_json(b.at("modes"));
    read_key(b, "bias_n", c.bench.bias_n);
    read_key(b, "repeats", c.bench.repeats);
    read_key(b, "utterances", c.bench.utterances);
    if (c.bench.bias_n < 0 || c.bench.repeats < 1 || c.bench.utterances < 0) {
      throw std::invalid_argument("bench: bias_n >= 0, repeats >= 1, utterances >= 0");
    }
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown_keys(p, {"data", "out"}, "paths");
    read_key(p, "data", c.data_dir);
    read_key(p, "out", c.out_dir);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& p) {
  std::string text;
  try {
    text = read_file(p);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return run_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p.string() + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json model = to_json(c.model);
  model.erase("vocab_size");
  model.erase("feature_dim");
  return {{"model", model},
          {"synth", to_json(c.synth)},
          {"train", to_json(c.train)},
          {"eval",
           {{"modes", modes_to_json(c.eval.modes)},
            {"bias_n", c.eval.bias_n},
            {"list_seed", c.eval.options.list_seed},
            {"decode_seed", c.eval.options.decode_seed},
            {"initial_gate", to_string(c.eval.options.initial_gate)},
            {"latch", c.eval.options.latch},
            {"max_symbols_per_frame", c.eval.options.max_symbols_per_frame}}},
          {"bench",
           {{"modes", modes_to_json(c.bench.modes)},
            {"bias_n", c.bench.bias_n},
            {"repeats", c.bench.repeats},
            {"utterances", c.bench.utterances}}},
          {"paths", {{"data", c.data_dir}, {"out", c.out_dir}}}};
}

}  // namespace catt
