// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "catt/synth.hpp"
#include "catt/transducer.hpp"

namespace catt {

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// Little-endian float32 payload of a frame matrix.
std::string encode_frames(const Tensor<float>& frames);
Tensor<float> decode_frames(const std::string& b64, std::size_t feature_dim);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& p);

// One utterance per line: {id, tokens, entities, feature_dim, frames}.
void write_dataset(const std::filesystem::path& p, const std::vector<Utterance>& utts);
std::vector<Utterance> read_dataset(const std::filesystem::path& p);

// One phrase per line, token ids separated by spaces. Blank lines are skipped.
void write_phrases(const std::filesystem::path& p, const std::vector<Phrase>& phrases);
std::vector<Phrase> read_phrases(const std::filesystem::path& p);

// Single-line JSON header, newline, then float32 little-endian values of every
// parameter in header order.
struct CheckpointMeta {
  double lambda1 = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& p, const CattModel<float>& model,
                     const CheckpointMeta& meta);
std::unique_ptr<CattModel<float>> load_checkpoint(const std::filesystem::path& p,
                                                  CheckpointMeta* meta = nullptr);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& bytes);

}  // namespace catt
