// SPDX-License-Identifier: Apache-2.0
#include "catt/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace catt {

EditOps edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditOps ops;
  ops.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++ops.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

ErrorRateReport corpus_error_rate(const std::vector<SequencePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("error rate over an empty corpus");
  ErrorRateReport r;
  for (const auto& [ref, hyp] : pairs) {
    const EditOps e = edit_distance(ref, hyp);
    r.substitutions += e.substitutions;
    r.insertions += e.insertions;
    r.deletions += e.deletions;
    r.reference_length += ref.size();
  }
  if (r.reference_length == 0) throw std::invalid_argument("corpus has zero reference length");
  r.rate = static_cast<double>(r.substitutions + r.insertions + r.deletions) /
           static_cast<double>(r.reference_length);
  return r;
}

double l_cer(const std::vector<int>& ref_labels, const std::vector<int>& hyp_labels) {
  const std::size_t len = std::max(ref_labels.size(), hyp_labels.size());
  if (len == 0) return 0.0;
  return static_cast<double>(edit_distance(ref_labels, hyp_labels).distance) /
         static_cast<double>(len);
}

double corpus_l_cer(const std::vector<SequencePair>& pairs) {
  std::size_t dist = 0, len = 0;
  for (const auto& [ref, hyp] : pairs) {
    dist += edit_distance(ref, hyp).distance;
    len += std::max(ref.size(), hyp.size());
  }
  return len == 0 ? 0.0 : static_cast<double>(dist) / static_cast<double>(len);
}

double real_time_factor(double decode_seconds, double audio_seconds) {
  if (!(audio_seconds > 0.0)) throw std::invalid_argument("audio duration must be positive");
  if (decode_seconds < 0.0) throw std::invalid_argument("negative decode time");
  return decode_seconds / audio_seconds;
}

RtfReport measure_rtf(std::size_t n, const std::function<OpCounters(std::size_t)>& decode,
                      const std::function<std::size_t(std::size_t)>& frames_of,
                      double frame_ms) {
  RtfReport r;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < n; ++i) frames += frames_of(i);
  r.audio_seconds = static_cast<double>(frames) * frame_ms / 1000.0;
  if (!(r.audio_seconds > 0.0)) throw std::invalid_argument("audio duration must be positive");
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < n; ++i) r.counters += decode(i);
  const auto stop = std::chrono::steady_clock::now();
  r.decode_seconds = std::chrono::duration<double>(stop - start).count();
  r.rtf = real_time_factor(r.decode_seconds, r.audio_seconds);
  return r;
}

}  // namespace catt
