// SPDX-License-Identifier: Apache-2.0
#include "catt/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <openssl/evp.h>

namespace catt {

static_assert(std::endian::native == std::endian::little, "payloads are written little-endian");

std::string base64_encode(const std::string& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(const std::string& text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length not a multiple of 4");
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  std::string body = text.substr(0, text.size() - pad);
  body.append(pad, 'A');
  std::string out;
  try {
    out.assign(It(body.begin()), It(body.end()));
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid base64 payload");
  }
  out.resize(out.size() - pad);
  return out;
}

std::string encode_frames(const Tensor<float>& frames) {
  std::string bytes(frames.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), frames.data(), bytes.size());
  return base64_encode(bytes);
}

Tensor<float> decode_frames(const std::string& b64, std::size_t feature_dim) {
  const std::string bytes = base64_decode(b64);
  if (feature_dim == 0 || bytes.size() % (sizeof(float) * feature_dim) != 0) {
    throw std::invalid_argument("frame payload does not divide into feature_dim columns");
  }
  std::vector<float> data(bytes.size() / sizeof(float));
  std::memcpy(data.data(), bytes.data(), bytes.size());
  const std::size_t rows = data.size() / feature_dim;
  return Tensor<float>({rows, feature_dim}, std::move(data));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

void write_dataset(const std::filesystem::path& p, const std::vector<Utterance>& utts) {
  std::string text;
  for (const auto& u : utts) {
    nlohmann::json j = {{"id", u.id},
                        {"tokens", u.tokens},
                        {"entities", u.entities},
                        {"feature_dim", u.frames.cols()},
                        {"frames", encode_frames(u.frames)}};
    text += j.dump();
    text += '\n';
  }
  write_file(p, text);
}

std::vector<Utterance> read_dataset(const std::filesystem::path& p) {
  std::istringstream in(read_file(p));
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.tokens = j.at("tokens").get<std::vector<int>>();
      u.entities = j.at("entities").get<std::vector<Phrase>>();
      u.frames = decode_frames(j.at("frames").get<std::string>(),
                               j.at("feature_dim").get<std::size_t>());
      if (u.tokens.empty() || u.frames.rows() == 0) {
        throw std::invalid_argument("empty utterance");
      }
      out.push_back(std::move(u));
    } catch (const std::exception& e) {
      throw std::invalid_argument(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_phrases(const std::filesystem::path& p, const std::vector<Phrase>& phrases) {
  std::string text;
  for (const auto& ph : phrases) {
    for (std::size_t i = 0; i < ph.size(); ++i) {
      if (i) text += ' ';
      text += std::to_string(ph[i]);
    }
    text += '\n';
  }
  write_file(p, text);
}

std::vector<Phrase> read_phrases(const std::filesystem::path& p) {
  std::istringstream in(read_file(p));
  std::vector<Phrase> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    Phrase ph;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw std::invalid_argument(p.string() + ":" + std::to_string(lineno) +
                                    ": bad token '" + tok + "'");
      }
      ph.push_back(v);
    }
    if (!ph.empty()) out.push_back(std::move(ph));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& p, const CattModel<float>& model,
                     const CheckpointMeta& meta) {
  nlohmann::json params = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, prm] : model.params()) {
    params.push_back({{"name", name}, {"shape", prm.value.shape()}});
    const auto* bytes = reinterpret_cast<const char*>(prm.value.data());
    payload.append(bytes, prm.value.size() * sizeof(float));
  }
  nlohmann::json header = {{"format", "catt-checkpoint-1"},
                           {"config", to_json(model.config())},
                           {"lambda1", meta.lambda1},
                           {"extra", meta.extra},
                           {"params", params}};
  write_file(p, header.dump() + "\n" + payload);
}

std::unique_ptr<CattModel<float>> load_checkpoint(const std::filesystem::path& p,
                                                  CheckpointMeta* meta) {
  const std::string bytes = read_file(p);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw std::invalid_argument("checkpoint has no header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "catt-checkpoint-1") {
    throw std::invalid_argument("not a checkpoint file: " + p.string());
  }
  auto model = std::make_unique<CattModel<float>>(model_config_from_json(header.at("config")), 0);
  std::size_t offset = nl + 1;
  ParamStore<float> loaded;
  for (const auto& entry : header.at("params")) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor<float> t(shape);
    const std::size_t n = t.size() * sizeof(float);
    if (offset + n > bytes.size()) throw std::invalid_argument("checkpoint payload truncated");
    std::memcpy(t.data(), bytes.data() + offset, n);
    offset += n;
    loaded.add(entry.at("name").get<std::string>(), std::move(t));
  }
  if (offset != bytes.size()) throw std::invalid_argument("checkpoint has trailing bytes");
  model->load_values(loaded);
  if (meta) {
    meta->lambda1 = header.value("lambda1", 0.0);
    meta->extra = header.value("extra", nlohmann::json::object());
  }
  return model;
}

}  // namespace catt
