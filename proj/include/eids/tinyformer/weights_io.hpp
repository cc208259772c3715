#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/core/codec.hpp"
#include "eids/core/error.hpp"
#include "eids/tinyformer/weights.hpp"

namespace eids::tinyformer {

using nlohmann::json;

// Weight archive layout (version 001, little-endian throughout):
//
//   bytes 0..7   magic "EIDSW001"
//   bytes 8..11  u32: length J of the JSON header
//   J bytes      UTF-8 JSON: {"config": {...}, "tensors": [{name, shape,
//                trainable}, ...]} in serialization order
//   per tensor   row-major float32 payload, in header order
//   last 4 bytes u32: CRC-32 of every preceding byte
//
// Loading verifies the magic/version, the checksum, every tensor shape,
// and — for the reference configuration — the trainable parameter count.

inline constexpr char kWeightsMagic[8] = {'E', 'I', 'D', 'S',
                                          'W', '0', '0', '1'};

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"packet_len", c.packet_len},
              {"max_flow_len", c.max_flow_len},
              {"model_dim", c.model_dim},
              {"num_blocks", c.num_blocks},
              {"num_heads", c.num_heads},
              {"head_dim", c.head_dim},
              {"ffn_dim", c.ffn_dim},
              {"dropout", c.dropout},
              {"num_classes", c.num_classes},
              {"pe", to_string(c.pe)},
              {"rope_theta_base", c.rope_theta_base},
              {"rope_theta_over_head_dim", c.rope_theta_over_head_dim},
              {"time_scale", c.time_scale},
              {"edl_normalize", c.edl_normalize},
              {"ln_eps", c.ln_eps}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  if (j.contains("packet_len")) c.packet_len = j.at("packet_len").get<int>();
  if (j.contains("max_flow_len"))
    c.max_flow_len = j.at("max_flow_len").get<int>();
  if (j.contains("model_dim")) c.model_dim = j.at("model_dim").get<int>();
  if (j.contains("num_blocks")) c.num_blocks = j.at("num_blocks").get<int>();
  if (j.contains("num_heads")) c.num_heads = j.at("num_heads").get<int>();
  if (j.contains("head_dim")) c.head_dim = j.at("head_dim").get<int>();
  if (j.contains("ffn_dim")) c.ffn_dim = j.at("ffn_dim").get<int>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<float>();
  if (j.contains("num_classes"))
    c.num_classes = j.at("num_classes").get<int>();
  if (j.contains("pe"))
    c.pe = pe_kind_from_string(j.at("pe").get<std::string>());
  if (j.contains("rope_theta_base"))
    c.rope_theta_base = j.at("rope_theta_base").get<float>();
  if (j.contains("rope_theta_over_head_dim"))
    c.rope_theta_over_head_dim = j.at("rope_theta_over_head_dim").get<bool>();
  if (j.contains("time_scale")) c.time_scale = j.at("time_scale").get<float>();
  if (j.contains("edl_normalize"))
    c.edl_normalize = j.at("edl_normalize").get<bool>();
  if (j.contains("ln_eps")) c.ln_eps = j.at("ln_eps").get<float>();
  c.validate();
  return c;
}

// True when cfg matches the reference model dimensions whose trainable
// parameter count is pinned at 5086.
inline bool is_reference_dims(const ModelConfig& c) {
  return c.packet_len == 448 && c.model_dim == 8 && c.num_blocks == 1 &&
         c.num_heads == 4 && c.head_dim == 8 && c.ffn_dim == 16 &&
         c.num_classes == 6;
}

inline constexpr std::size_t kReferenceParamCount = 5086;

inline std::vector<std::uint8_t> serialize_weights(
    const ModelWeights<float>& w, const ModelConfig& cfg) {
  json tensors = json::array();
  std::vector<const std::vector<float>*> payloads;
  for_each_tensor(w, cfg,
                  [&](const TensorInfo& info, const std::vector<float>& t) {
                    tensors.push_back(json{{"name", info.name},
                                           {"shape", info.shape},
                                           {"trainable", info.trainable}});
                    payloads.push_back(&t);
                  });
  const std::string header =
      json{{"config", model_config_to_json(cfg)}, {"tensors", tensors}}
          .dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWeightsMagic, kWeightsMagic + 8);
  put_u32le(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto* t : payloads)
    for (float v : *t) put_f32le(out, v);
  put_u32le(out, crc32(out));
  return out;
}

inline void save_weights(const ModelWeights<float>& w, const ModelConfig& cfg,
                         const std::string& path) {
  const auto bytes = serialize_weights(w, cfg);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("write failed: " + path);
}

struct LoadedWeights {
  ModelConfig config;
  ModelWeights<float> weights;
};

inline LoadedWeights deserialize_weights(
    const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 4)
    throw ChecksumMismatch("weight archive truncated");
  if (!std::equal(kWeightsMagic, kWeightsMagic + 5, bytes.begin()))
    throw VersionMismatch("not a weight archive");
  if (!std::equal(kWeightsMagic, kWeightsMagic + 8, bytes.begin()))
    throw VersionMismatch("unsupported weight archive version");
  const std::uint32_t stored_crc = get_u32le(bytes.data() + bytes.size() - 4);
  const std::uint32_t actual_crc =
      crc32({bytes.data(), bytes.size() - 4});
  if (stored_crc != actual_crc)
    throw ChecksumMismatch("weight archive checksum mismatch");

  const std::uint32_t hlen = get_u32le(bytes.data() + 8);
  if (12 + static_cast<std::size_t>(hlen) + 4 > bytes.size())
    throw ChecksumMismatch("weight archive header length out of range");
  json header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  LoadedWeights out;
  out.config = model_config_from_json(header.at("config"));
  out.weights = zero_weights<float>(out.config);

  const auto& tensor_list = header.at("tensors");
  std::size_t ti = 0;
  std::size_t off = 12 + hlen;
  for_each_tensor(
      out.weights, out.config,
      [&](const TensorInfo& info, std::vector<float>& data) {
        if (ti >= tensor_list.size())
          throw ShapeMismatch("weight archive missing tensor " + info.name);
        const auto& entry = tensor_list[ti++];
        if (entry.at("name").get<std::string>() != info.name)
          throw ShapeMismatch("weight archive tensor order mismatch at " +
                              info.name);
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != info.shape)
          throw ShapeMismatch("weight archive shape mismatch for " +
                              info.name);
        if (off + data.size() * 4 > bytes.size() - 4)
          throw ShapeMismatch("weight archive payload too small for " +
                              info.name);
        for (std::size_t i = 0; i < data.size(); ++i)
          data[i] = get_f32le(bytes.data() + off + i * 4);
        off += data.size() * 4;
      });
  if (ti != tensor_list.size())
    throw ShapeMismatch("weight archive has extra tensors");
  if (off != bytes.size() - 4)
    throw ShapeMismatch("weight archive payload size mismatch");

  if (is_reference_dims(out.config) &&
      count_params(out.weights, out.config, false) != kReferenceParamCount)
    throw ShapeMismatch("reference configuration parameter count drifted");
  return out;
}

inline LoadedWeights load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open weight archive: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

}  // namespace eids::tinyformer
