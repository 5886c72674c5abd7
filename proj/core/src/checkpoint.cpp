// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "medusa/errors.hpp"

namespace medusa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kFormat = "medusa-checkpoint";
constexpr int kVersion = 1;

const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "f64"; }

std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw IoError("checkpoint: unsupported dtype " + s);
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},       {"d_model", c.d_model},
          {"n_q_heads", c.n_q_heads},     {"n_kv_heads", c.n_kv_heads},
          {"d_ff", c.d_ff},               {"vocab_size", c.vocab_size},
          {"max_seq_len", c.max_seq_len}, {"num_medusa_heads", c.num_medusa_heads},
          {"rope_theta", c.rope_theta},   {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_q_heads = j.value("n_q_heads", c.n_q_heads);
    c.n_kv_heads = j.value("n_kv_heads", c.n_kv_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.num_medusa_heads = j.value("num_medusa_heads", c.num_medusa_heads);
    c.rope_theta = j.value("rope_theta", c.rope_theta);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("model config " + path.string() + ": " + e.what());
  }
}

void save_checkpoint(const ModelBundle<double>& bundle, const std::filesystem::path& path,
                     DType dtype) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<char> payload;
  const std::size_t elem = dtype_size(dtype);
  for_each_tensor(bundle, [&](const std::string& name, const std::vector<int>& shape,
                              const std::vector<double>& data) {
    const std::size_t offset = payload.size();
    payload.resize(offset + data.size() * elem);
    char* dst = payload.data() + offset;
    if (dtype == DType::f64) {
      std::memcpy(dst, data.data(), data.size() * elem);
    } else {
      for (std::size_t i = 0; i < data.size(); ++i) {
        const float f = static_cast<float>(data[i]);
        std::memcpy(dst + i * elem, &f, elem);
      }
    }
    tensors.push_back({{"name", name},
                       {"dtype", dtype_name(dtype)},
                       {"shape", shape},
                       {"offset", offset},
                       {"nbytes", data.size() * elem}});
  });
  const nlohmann::json header = {{"format", kFormat},
                                 {"version", kVersion},
                                 {"config", config_to_json(bundle.config)},
                                 {"tensors", tensors}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

ModelBundle<double> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1u << 30)) throw IoError("checkpoint: bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint: truncated header");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
    throw IoError("checkpoint: unrecognized format or version");
  }

  struct Entry {
    DType dtype;
    std::vector<int> shape;
    std::size_t offset, nbytes;
  };
  std::map<std::string, Entry> entries;
  for (const auto& t : header.at("tensors")) {
    entries[t.at("name").get<std::string>()] =
        Entry{parse_dtype(t.at("dtype").get<std::string>()), t.at("shape").get<std::vector<int>>(),
              t.at("offset").get<std::size_t>(), t.at("nbytes").get<std::size_t>()};
  }

  ModelBundle<double> b;
  b.config = config_from_json(header.at("config"));
  b.backbone.layers.resize(b.config.n_layers);
  b.heads.resize(b.config.num_medusa_heads);
  for_each_tensor(b, [&](const std::string& name, const std::vector<int>& shape,
                         std::vector<double>& data) {
    auto it = entries.find(name);
    if (it == entries.end()) throw IoError("checkpoint: missing tensor " + name);
    const Entry& e = it->second;
    if (e.shape != shape) throw IoError("checkpoint: shape mismatch for " + name);
    std::size_t count = 1;
    for (int s : shape) count *= static_cast<std::size_t>(s);
    const std::size_t elem = dtype_size(e.dtype);
    if (e.nbytes != count * elem || e.offset + e.nbytes > payload.size()) {
      throw IoError("checkpoint: payload range invalid for " + name);
    }
    data.resize(count);
    const char* src = payload.data() + e.offset;
    if (e.dtype == DType::f64) {
      std::memcpy(data.data(), src, e.nbytes);
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, src + i * elem, elem);
        data[i] = f;
      }
    }
    entries.erase(it);
  });
  if (!entries.empty()) throw IoError("checkpoint: unexpected tensor " + entries.begin()->first);
  return b;
}

}  // namespace medusa
