// SPDX-License-Identifier: Apache-2.0
#include "catt/entity_detector.hpp"

#include <algorithm>
#include <stdexcept>

namespace catt {

std::string to_string(EdActivation a) {
  return a == EdActivation::kSigmoid ? "sigmoid" : "identity";
}

EdActivation parse_ed_activation(const std::string& s) {
  if (s == "identity") return EdActivation::kIdentity;
  if (s == "sigmoid") return EdActivation::kSigmoid;
  throw std::invalid_argument("unknown detector activation '" + s + "' (identity|sigmoid)");
}

std::vector<int> make_ed_labels(const std::vector<int>& reference,
                                const std::vector<Phrase>& phrases) {
  std::vector<int> labels(reference.size(), 0);
  for (const auto& p : phrases) {
    if (p.empty() || p.size() > reference.size()) continue;
    for (std::size_t s = 0; s + p.size() <= reference.size(); ++s) {
      if (std::equal(p.begin(), p.end(), reference.begin() + static_cast<std::ptrdiff_t>(s))) {
        std::fill(labels.begin() + static_cast<std::ptrdiff_t>(s),
                  labels.begin() + static_cast<std::ptrdiff_t>(s + p.size()), 1);
      }
    }
  }
  return labels;
}

}  // namespace catt
