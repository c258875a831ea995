// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "catt/decoder.hpp"

namespace catt {

struct EditOps {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
};

// Unit-cost Levenshtein alignment. Among optimal alignments the backtrace
// prefers substitution (or match), then deletion, then insertion.
EditOps edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp);

struct ErrorRateReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;
  double rate = 0.0;
};

using SequencePair = std::pair<std::vector<int>, std::vector<int>>;  // (ref, hyp)

// Pooled over the corpus: total edits / total reference length.
ErrorRateReport corpus_error_rate(const std::vector<SequencePair>& pairs);

// Edit distance between two label strings over the longer length; 0 when
// both are empty.
double l_cer(const std::vector<int>& ref_labels, const std::vector<int>& hyp_labels);

// Pooled form over a corpus: Σ distance / Σ max length.
double corpus_l_cer(const std::vector<SequencePair>& pairs);

struct RtfReport {
  double decode_seconds = 0.0;
  double audio_seconds = 0.0;
  double rtf = 0.0;
  OpCounters counters;
};

double real_time_factor(double decode_seconds, double audio_seconds);

// Times `decode(i)` over utterance indices [0, n) on the calling thread.
// `decode` returns the counters of that utterance; `frames_of(i)` its frame
// count.
RtfReport measure_rtf(std::size_t n, const std::function<OpCounters(std::size_t)>& decode,
                      const std::function<std::size_t(std::size_t)>& frames_of,
                      double frame_ms);

}  // namespace catt
