// SPDX-License-Identifier: Apache-2.0
#include "catt/context_encoder.hpp"

#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace catt {

std::vector<Phrase> dedupe_phrases(const std::vector<Phrase>& phrases) {
  std::set<Phrase> seen;
  std::vector<Phrase> out;
  out.reserve(phrases.size());
  for (const auto& p : phrases) {
    if (seen.insert(p).second) out.push_back(p);
  }
  if (out.size() != phrases.size()) {
    spdlog::warn("context list: dropped {} duplicate phrase(s)", phrases.size() - out.size());
  }
  return out;
}

void validate_phrase(const Phrase& p, int vocab_size) {
  if (p.empty()) throw std::invalid_argument("empty context phrase");
  for (int tok : p) {
    if (tok < 0 || tok >= vocab_size) {
      throw std::out_of_range("context phrase token " + std::to_string(tok) +
                              " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

}  // namespace catt
