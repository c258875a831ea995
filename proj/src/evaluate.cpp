// SPDX-License-Identifier: Apache-2.0
#include "catt/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <thread>

#include "catt/entity_detector.hpp"

namespace catt {

std::string to_string(ListKind k) {
  return k == ListKind::kPersonalized ? "personalized" : "common";
}

nlohmann::json to_json(const EvalCell& c) {
  return {{"mode", to_string(c.mode)},
          {"N", c.n},
          {"set", to_string(c.set)},
          {"wer", c.wer.rate},
          {"substitutions", c.wer.substitutions},
          {"insertions", c.wer.insertions},
          {"deletions", c.wer.deletions},
          {"reference_length", c.wer.reference_length},
          {"l_cer", c.l_cer},
          {"frames", c.frames},
          {"counters",
           {{"encoder_bias_full", c.counters.encoder_bias_full},
            {"predictor_bias_full", c.counters.predictor_bias_full},
            {"ed_calls", c.counters.ed_calls}}}};
}

std::vector<Phrase> eval_list(const Utterance& utt, std::size_t index, ListKind set, int n,
                              const PhrasePools& pools, std::uint64_t list_seed) {
  const std::uint64_t seed = list_seed * 1000003ULL + index * 2ULL + (set == ListKind::kCommon);
  return build_bias_list(utt, set, n, seed, pools);
}

EvalCell evaluate_cell(const GreedyDecoder<float>& dec, const std::vector<Utterance>& utts,
                       ListKind set, DecodeMode mode, int n, const PhrasePools& pools,
                       const EvalOptions& opts) {
  EvalCell cell;
  cell.mode = mode;
  cell.n = n;
  cell.set = set;
  std::vector<std::vector<Phrase>> lists(utts.size());
  std::vector<Hypothesis> hyps(utts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < utts.size(); i += stride) {
      lists[i] = eval_list(utts[i], i, set, n, pools, opts.list_seed);
      DecodeOptions d;
      d.mode = mode;
      d.seed = opts.decode_seed + i;
      d.initial_gate = opts.initial_gate;
      d.latch = opts.latch;
      d.max_symbols_per_frame = opts.max_symbols_per_frame;
      hyps[i] = dec.decode(utts[i].frames, lists[i], d);
    }
  };
  const std::size_t threads = static_cast<std::size_t>(std::max(1, opts.threads));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          work(k, threads);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<SequencePair> words, labels;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    words.emplace_back(utts[i].tokens, hyps[i].tokens);
    labels.emplace_back(make_ed_labels(utts[i].tokens, lists[i]), hyps[i].predicted_labels());
    cell.counters += hyps[i].counters;
    cell.frames += hyps[i].frames;
  }
  cell.hypotheses = std::move(hyps);
  cell.wer = corpus_error_rate(words);
  cell.l_cer = corpus_l_cer(labels);
  return cell;
}

std::vector<EvalCell> evaluate_grid(const CattModel<float>& model, const Corpus& corpus,
                                    const std::vector<DecodeMode>& modes,
                                    const std::vector<int>& ns, const EvalOptions& opts) {
  for (DecodeMode m : modes) check_mode_supported(model.config(), m);
  const NullBiasCache<float> null_cache = make_null_bias_cache(model);
  GreedyDecoder<float> dec(model, null_cache);
  std::vector<EvalCell> cells;
  for (DecodeMode m : modes) {
    for (int n : ns) {
      cells.push_back(evaluate_cell(dec, corpus.personalized, ListKind::kPersonalized, m, n,
                                    corpus.phrases, opts));
      cells.push_back(
          evaluate_cell(dec, corpus.common, ListKind::kCommon, m, n, corpus.phrases, opts));
    }
  }
  return cells;
}

std::string format_table(const std::vector<EvalCell>& cells) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %4s %-13s %8s %8s %10s %10s %8s\n", "mode", "N", "set",
                "WER%", "L-CER%", "enc_full", "pred_full", "ed");
  out += line;
  for (const auto& c : cells) {
    std::snprintf(line, sizeof line, "%-14s %4d %-13s %8.2f %8.2f %10llu %10llu %8llu\n",
                  to_string(c.mode).c_str(), c.n, to_string(c.set).c_str(), 100.0 * c.wer.rate,
                  100.0 * c.l_cer,
                  static_cast<unsigned long long>(c.counters.encoder_bias_full),
                  static_cast<unsigned long long>(c.counters.predictor_bias_full),
                  static_cast<unsigned long long>(c.counters.ed_calls));
    out += line;
  }
  return out;
}

}  // namespace catt
