#include "radsearch/encoders/checkpoint.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <iomanip>
#include <sstream>

#include "radsearch/binary_io.hpp"

namespace radsearch {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(image_height, "image_height");
  positive(image_width, "image_width");
  positive(input_pool, "input_pool");
  positive(text_embed_dim, "text_embed_dim");
  positive(text_hidden_dim, "text_hidden_dim");
  positive(text_dim, "text_dim");
  positive(image_dim, "image_dim");
  positive(shared_dim, "shared_dim");
  positive(seq_len, "seq_len");
  for (std::size_t c : conv_channels) positive(c, "conv_channels entry");
  const std::size_t divisor = input_pool << conv_channels.size();
  if (image_height % divisor != 0 || image_width % divisor != 0) {
    throw ConfigError("model config: image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                      " is not divisible by input_pool * 2^blocks = " + std::to_string(divisor));
  }
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {
      {"image_height", cfg.image_height}, {"image_width", cfg.image_width},
      {"input_pool", cfg.input_pool},     {"conv_channels", cfg.conv_channels},
      {"text_embed_dim", cfg.text_embed_dim}, {"text_hidden_dim", cfg.text_hidden_dim},
      {"text_dim", cfg.text_dim},         {"image_dim", cfg.image_dim},
      {"shared_dim", cfg.shared_dim},     {"seq_len", cfg.seq_len},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("image_height", cfg.image_height);
  read("image_width", cfg.image_width);
  read("input_pool", cfg.input_pool);
  read("conv_channels", cfg.conv_channels);
  read("text_embed_dim", cfg.text_embed_dim);
  read("text_hidden_dim", cfg.text_hidden_dim);
  read("text_dim", cfg.text_dim);
  read("image_dim", cfg.image_dim);
  read("shared_dim", cfg.shared_dim);
  read("seq_len", cfg.seq_len);
  cfg.validate();
  return cfg;
}

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out;
  bin::put_bytes(out, "CLRC", 4);
  bin::put<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json header = {{"model", model_config_to_json(model.config())},
                                 {"vocab", model.vocab().tokens()}};
  const std::string text = header.dump();
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  bin::put_bytes(out, text.data(), text.size());
  const auto params = model.params();
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    bin::put_bytes(out, p.name.data(), p.name.size());
    const auto& v = p.var.value();
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(v.rows()));
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(v.cols()));
    for (float f : v.data()) bin::put<float>(out, f);
  }
  return out;
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  bin::Reader r(bytes, "checkpoint");
  if (r.get_string(4, "magic") != "CLRC") r.fail_at(0, "bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail_at(4, "unsupported version " + std::to_string(version));
  const auto header_len = r.get<std::uint32_t>("config length");
  const std::size_t header_at = r.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string(header_len, "config"));
  } catch (const nlohmann::json::exception& e) {
    r.fail_at(header_at, std::string("config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  Vocabulary vocab;
  try {
    cfg = model_config_from_json(header.at("model"));
    vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    r.fail_at(header_at, std::string("malformed config: ") + e.what());
  }
  Model model(cfg, vocab, 0);
  auto params = model.params();
  const auto count = r.get<std::uint32_t>("parameter count");
  if (count != params.size()) {
    r.fail("expected " + std::to_string(params.size()) + " parameters, file has " + std::to_string(count));
  }
  for (auto& p : params) {
    const std::size_t at = r.offset();
    const auto name_len = r.get<std::uint32_t>("parameter name length");
    const std::string name = r.get_string(name_len, "parameter name");
    if (name != p.name) r.fail_at(at, "expected parameter '" + p.name + "', found '" + name + "'");
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    auto& value = p.var.mutable_value();
    if (rows != value.rows() || cols != value.cols()) {
      r.fail("parameter '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
             ", config implies " + value.shape_string());
    }
    for (auto& f : value.data()) {
      const std::size_t value_at = r.offset();
      f = r.get<float>("parameter value");
      if (!std::isfinite(f)) r.fail_at(value_at, "non-finite value in '" + name + "'");
    }
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last parameter");
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) { bin::write_file(path, serialize_checkpoint(model)); }

Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(bin::read_file(path)); }

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("hash_error", "SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string checkpoint_fingerprint(const Model& model) { return sha256_hex(serialize_checkpoint(model)); }

}  // namespace radsearch
