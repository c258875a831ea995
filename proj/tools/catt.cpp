// SPDX-License-Identifier: Apache-2.0
// catt: data generation, training, evaluation and benchmarking.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "catt/io.hpp"
#include "catt/run_config.hpp"

namespace fs = std::filesystem;
using namespace catt;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string data;
  int threads = 1;
};

RunConfig load(const Common& c) {
  RunConfig rc;
  if (!c.config.empty()) rc = load_run_config(c.config);
  if (c.seed_set) {
    rc.synth.seed = c.seed;
    rc.train.seed = c.seed;
  }
  if (!c.out.empty()) rc.out_dir = c.out;
  if (!c.data.empty()) rc.data_dir = c.data;
  return rc;
}

const char* kSplits[] = {"train", "dev", "personalized", "common"};

Corpus read_corpus(const fs::path& dir) {
  for (const char* f : {"train.jsonl", "dev.jsonl", "personalized.jsonl", "common.jsonl",
                        "inventory.txt", "distractors.txt", "manifest.json"}) {
    if (!fs::exists(dir / f)) {
      throw std::runtime_error("missing dataset file " + (dir / f).string() +
                               " (run `catt gen` first)");
    }
  }
  Corpus c;
  c.train = read_dataset(dir / "train.jsonl");
  c.dev = read_dataset(dir / "dev.jsonl");
  c.personalized = read_dataset(dir / "personalized.jsonl");
  c.common = read_dataset(dir / "common.jsonl");
  c.phrases.inventory = read_phrases(dir / "inventory.txt");
  c.phrases.distractors = read_phrases(dir / "distractors.txt");
  // Token groups follow the generator settings recorded with the data.
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  c.phrases.look_alike_group = look_alike_groups(synth_config_from_json(manifest.at("synth")));
  return c;
}

void check_model_matches_data(const ModelConfig& mc, const Corpus& c) {
  const auto& u = c.personalized.empty() ? c.train.front() : c.personalized.front();
  if (u.frames.cols() != static_cast<std::size_t>(mc.feature_dim)) {
    throw std::runtime_error("dataset feature_dim " + std::to_string(u.frames.cols()) +
                             " does not match the model's " + std::to_string(mc.feature_dim));
  }
}

int cmd_gen(const Common& common) {
  const RunConfig rc = load(common);
  const fs::path dir = rc.data_dir;
  spdlog::info("generating corpus (seed {}) into {}", rc.synth.seed, dir.string());
  const Corpus corpus = generate_corpus(rc.synth);
  const std::vector<Utterance>* sets[] = {&corpus.train, &corpus.dev, &corpus.personalized,
                                          &corpus.common};
  nlohmann::json files = nlohmann::json::object();
  for (int i = 0; i < 4; ++i) {
    const std::string name = std::string(kSplits[i]) + ".jsonl";
    write_dataset(dir / name, *sets[i]);
    files[name] = {{"sha256", sha256_file(dir / name)}, {"utterances", sets[i]->size()}};
  }
  write_phrases(dir / "inventory.txt", corpus.phrases.inventory);
  write_phrases(dir / "distractors.txt", corpus.phrases.distractors);
  for (const char* name : {"inventory.txt", "distractors.txt"}) {
    files[name] = {{"sha256", sha256_file(dir / name)}};
  }
  nlohmann::json manifest = {{"seed", rc.synth.seed}, {"synth", to_json(rc.synth)}, {"files", files}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("wrote {} train / {} dev / {} personalized / {} common utterances",
               corpus.train.size(), corpus.dev.size(), corpus.personalized.size(),
               corpus.common.size());
  return 0;
}

int cmd_train(const Common& common, const std::string& variant_name) {
  RunConfig rc = load(common);
  try {
    rc.model.variant = parse_variant(variant_name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Corpus corpus = read_corpus(rc.data_dir);
  check_model_matches_data(rc.model, corpus);
  CattModel<float> model(rc.model, rc.train.seed);
  const double lambda1 = model.has_detector() ? rc.train.lambda1 : 0.0;
  spdlog::info("training {} ({} parameters, lambda1 {})", variant_name,
               model.params().num_scalars(), lambda1);
  const fs::path out = rc.out_dir;
  fs::create_directories(out);
  std::ofstream log(out / ("train-" + variant_name + ".jsonl"));
  TrainResult res = train_model(model, corpus, rc.synth, rc.train, [&](const EpochLog& e) {
    spdlog::info("epoch {} steps {} l_transducer {:.4f} l_bias {:.4f} l_total {:.4f} dev_wer {:.4f} ({:.1f}s)",
                 e.epoch, e.steps, e.l_transducer, e.l_bias, e.l_total, e.dev_wer, e.seconds);
    log << nlohmann::json{{"epoch", e.epoch},          {"steps", e.steps},
                          {"l_transducer", e.l_transducer}, {"l_bias", e.l_bias},
                          {"l_total", e.l_total},      {"dev_wer", e.dev_wer}}
               .dump()
        << '\n';
  });
  CheckpointMeta meta;
  meta.lambda1 = lambda1;
  meta.extra = {{"steps", res.steps}, {"final_loss", res.final_loss}, {"train", to_json(rc.train)}};
  const fs::path ckpt = out / ("model-" + variant_name + ".ckpt");
  save_checkpoint(ckpt, model, meta);
  spdlog::info("final loss {:.6f}; checkpoint {}", res.final_loss, ckpt.string());
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& modes,
             const std::string& bias_n) {
  RunConfig rc = load(common);
  try {
    if (!modes.empty()) rc.eval.modes = parse_mode_list(modes);
    if (!bias_n.empty()) rc.eval.bias_n = parse_int_list(bias_n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  rc.eval.options.threads = std::max(1, common.threads);
  auto model = load_checkpoint(checkpoint);
  const Corpus corpus = read_corpus(rc.data_dir);
  check_model_matches_data(model->config(), corpus);
  const auto cells = evaluate_grid(*model, corpus, rc.eval.modes, rc.eval.bias_n, rc.eval.options);
  nlohmann::json report = {{"checkpoint", fs::path(checkpoint).filename().string()},
                           {"variant", to_string(model->config().variant)},
                           {"cells", nlohmann::json::array()}};
  for (const auto& c : cells) report["cells"].push_back(to_json(c));
  const fs::path out = rc.out_dir;
  write_file(out / "eval.json", report.dump(2) + "\n");
  const std::string table = format_table(cells);
  write_file(out / "eval.txt", table);
  std::cout << table;
  return 0;
}

int cmd_bench(const Common& common, const std::string& checkpoint, const std::string& modes,
              const std::string& bias_n) {
  RunConfig rc = load(common);
  try {
    if (!modes.empty()) rc.bench.modes = parse_mode_list(modes);
    if (!bias_n.empty()) {
      const auto ns = parse_int_list(bias_n);
      if (ns.size() != 1) throw std::invalid_argument("bench takes a single --bias-n value");
      rc.bench.bias_n = ns.front();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (common.threads != 1) spdlog::warn("bench timing runs on one thread; ignoring --threads");
  auto model = load_checkpoint(checkpoint);
  for (DecodeMode m : rc.bench.modes) check_mode_supported(model->config(), m);
  const Corpus corpus = read_corpus(rc.data_dir);
  check_model_matches_data(model->config(), corpus);
  const NullBiasCache<float> null_cache = make_null_bias_cache(*model);
  GreedyDecoder<float> dec(*model, null_cache);

  std::size_t n = corpus.common.size();
  if (rc.bench.utterances > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(rc.bench.utterances));
  std::vector<PreparedList<float>> lists;
  for (std::size_t i = 0; i < n; ++i) {
    lists.push_back(prepare_list(*model, eval_list(corpus.common[i], i, ListKind::kCommon,
                                                   rc.bench.bias_n, corpus.phrases,
                                                   rc.eval.options.list_seed)));
  }
  nlohmann::json report = {{"checkpoint", fs::path(checkpoint).filename().string()},
                           {"set", "common"},
                           {"N", rc.bench.bias_n},
                           {"repeats", rc.bench.repeats},
                           {"results", nlohmann::json::array()}};
  std::cout << "mode            rtf(min)   audio_s   enc_full  pred_full  ed\n";
  for (DecodeMode m : rc.bench.modes) {
    DecodeOptions base;
    base.mode = m;
    base.initial_gate = rc.eval.options.initial_gate;
    base.latch = rc.eval.options.latch;
    base.max_symbols_per_frame = rc.eval.options.max_symbols_per_frame;
    RtfReport best;
    best.rtf = std::numeric_limits<double>::infinity();
    std::optional<OpCounters> first;
    for (int r = 0; r < rc.bench.repeats; ++r) {
      RtfReport rep = measure_rtf(
          n,
          [&](std::size_t i) {
            DecodeOptions o = base;
            o.seed = rc.eval.options.decode_seed + i;
            return dec.decode(corpus.common[i].frames, lists[i], o).counters;
          },
          [&](std::size_t i) { return corpus.common[i].frames.rows(); }, rc.synth.frame_ms);
      if (first && !(*first == rep.counters)) {
        throw std::runtime_error("op counters changed between bench repeats");
      }
      first = rep.counters;
      if (rep.rtf < best.rtf) best = rep;
    }
    report["results"].push_back({{"mode", to_string(m)},
                                 {"rtf", best.rtf},
                                 {"decode_seconds", best.decode_seconds},
                                 {"audio_seconds", best.audio_seconds},
                                 {"counters",
                                  {{"encoder_bias_full", best.counters.encoder_bias_full},
                                   {"predictor_bias_full", best.counters.predictor_bias_full},
                                   {"ed_calls", best.counters.ed_calls}}}});
    std::printf("%-15s %8.4f %9.1f %10llu %10llu %8llu\n", to_string(m).c_str(), best.rtf,
                best.audio_seconds,
                static_cast<unsigned long long>(best.counters.encoder_bias_full),
                static_cast<unsigned long long>(best.counters.predictor_bias_full),
                static_cast<unsigned long long>(best.counters.ed_calls));
  }
  write_file(fs::path(rc.out_dir) / "bench.json", report.dump(2) + "\n");
  return 0;
}

int cmd_decode(const Common& common, const std::string& checkpoint, const std::string& utt_id,
               const std::string& phrases_path, const std::string& mode, const std::string& trace) {
  RunConfig rc = load(common);
  DecodeOptions opts;
  try {
    opts.mode = parse_decode_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  opts.initial_gate = rc.eval.options.initial_gate;
  opts.latch = rc.eval.options.latch;
  opts.max_symbols_per_frame = rc.eval.options.max_symbols_per_frame;
  opts.seed = rc.eval.options.decode_seed;
  auto model = load_checkpoint(checkpoint);
  const Corpus corpus = read_corpus(rc.data_dir);
  const Utterance* utt = nullptr;
  for (const auto* set : {&corpus.personalized, &corpus.common, &corpus.dev, &corpus.train}) {
    for (const auto& u : *set) {
      if (u.id == utt_id) utt = &u;
    }
  }
  if (!utt) throw std::runtime_error("no utterance with id " + utt_id);
  const std::vector<Phrase> list = phrases_path.empty() ? std::vector<Phrase>{}
                                                        : read_phrases(phrases_path);
  std::ofstream trace_out;
  if (!trace.empty()) {
    trace_out.open(trace);
    if (!trace_out) throw std::runtime_error("cannot write " + trace);
    opts.trace = &trace_out;
  }
  const NullBiasCache<float> null_cache = make_null_bias_cache(*model);
  GreedyDecoder<float> dec(*model, null_cache);
  const Hypothesis h = dec.decode(utt->frames, list, opts);
  nlohmann::json out = {{"id", utt->id},
                        {"reference", utt->tokens},
                        {"hypothesis", h.tokens},
                        {"gates", h.gates},
                        {"counters",
                         {{"encoder_bias_full", h.counters.encoder_bias_full},
                          {"predictor_bias_full", h.counters.predictor_bias_full},
                          {"ed_calls", h.counters.ed_calls}}}};
  std::cout << out.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive contextual biasing for streaming transducers"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "run configuration (JSON)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { common.seed = s; common.seed_set = true; },
        "override synth and training seeds");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--data", common.data, "dataset directory");
    sub->add_option("--threads", common.threads, "worker threads (bench always uses 1)")
        ->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen", "generate the synthetic corpus");
  add_common(gen);

  std::string variant = "catt+ped";
  auto* train = app.add_subcommand("train", "train a model variant");
  add_common(train);
  train->add_option("--variant", variant, "catt | catt+ped | catt+eped");

  std::string checkpoint, modes, bias_n;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over modes and list sizes");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--mode", modes, "comma-separated decode modes");
  eval->add_option("--bias-n", bias_n, "comma-separated list sizes");

  auto* bench = app.add_subcommand("bench", "single-thread RTF and op counters on the common set");
  add_common(bench);
  bench->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  bench->add_option("--mode", modes, "comma-separated decode modes");
  bench->add_option("--bias-n", bias_n, "list size");

  std::string utt_id, phrases_path, decode_mode = "always-on", trace;
  auto* decode = app.add_subcommand("decode", "decode one utterance, optionally with a trace");
  add_common(decode);
  decode->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  decode->add_option("--utt", utt_id, "utterance id")->required();
  decode->add_option("--phrases", phrases_path, "bias list file, one phrase per line");
  decode->add_option("--mode", decode_mode, "decode mode");
  decode->add_option("--trace", trace, "JSON-lines trace output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*train) return cmd_train(common, variant);
    if (*eval) return cmd_eval(common, checkpoint, modes, bias_n);
    if (*bench) return cmd_bench(common, checkpoint, modes, bias_n);
    if (*decode) return cmd_decode(common, checkpoint, utt_id, phrases_path, decode_mode, trace);
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
