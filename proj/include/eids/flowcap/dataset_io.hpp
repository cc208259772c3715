#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/core/codec.hpp"
#include "eids/core/error.hpp"
#include "eids/flowcap/packet.hpp"

namespace eids::flowcap {

using nlohmann::json;

// A set of labeled flow records plus the bookkeeping that prepared them.
// On disk: one JSON object per line, with the packet matrix stored as
// base64 of row-major float32 little-endian, plus a `.manifest.json`
// sidecar naming the classes, the preparation config and the counters.
struct LabeledDataset {
  std::vector<std::string> class_names;
  PrepConfig prep;
  std::vector<FlowRecord> records;
  std::size_t skipped_unparseable = 0;
  std::size_t skipped_overflow = 0;
  std::size_t discarded_empty = 0;  // flows with no packets after filtering
  std::size_t unlabeled = 0;        // flows without a label mapping

  std::vector<std::size_t> per_class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& r : records)
      if (r.label >= 0 && r.label < static_cast<int>(counts.size()))
        ++counts[static_cast<std::size_t>(r.label)];
    return counts;
  }
};

inline json prep_config_to_json(const PrepConfig& p) {
  return json{{"packet_len", p.packet_len},
              {"max_flow_len", p.max_flow_len},
              {"filter", to_string(p.filter)},
              {"flow_variant",
               p.flow_variant == FlowVariant::ThreeTuple ? "3-tuple"
                                                         : "5-tuple"},
              {"on_nonmonotone",
               p.on_nonmonotone == NonMonotonePolicy::Error ? "error"
                                                            : "clamp"}};
}

inline PrepConfig prep_config_from_json(const json& j) {
  PrepConfig p;
  if (j.contains("packet_len")) p.packet_len = j.at("packet_len").get<int>();
  if (j.contains("max_flow_len"))
    p.max_flow_len = j.at("max_flow_len").get<int>();
  if (j.contains("filter"))
    p.filter = parse_filter(j.at("filter").get<std::string>());
  if (j.contains("flow_variant")) {
    const auto v = j.at("flow_variant").get<std::string>();
    if (v == "3-tuple") p.flow_variant = FlowVariant::ThreeTuple;
    else if (v == "5-tuple") p.flow_variant = FlowVariant::FiveTuple;
    else throw InvalidSpec("flow_variant must be 3-tuple or 5-tuple");
  }
  if (j.contains("on_nonmonotone")) {
    const auto v = j.at("on_nonmonotone").get<std::string>();
    if (v == "error") p.on_nonmonotone = NonMonotonePolicy::Error;
    else if (v == "clamp") p.on_nonmonotone = NonMonotonePolicy::Clamp;
    else throw InvalidSpec("on_nonmonotone must be error or clamp");
  }
  p.validate();
  return p;
}

inline json flow_key_to_json(const FlowKey& k) {
  json j{{"ip_lo", ipv4_to_string(k.ip_lo)},
         {"ip_hi", ipv4_to_string(k.ip_hi)},
         {"proto", to_string(k.proto.kind)},
         {"ip_proto", k.proto.ip_proto},
         {"variant",
          k.variant == FlowVariant::ThreeTuple ? "3-tuple" : "5-tuple"}};
  if (k.variant == FlowVariant::FiveTuple) {
    j["port_lo"] = k.port_lo;
    j["port_hi"] = k.port_hi;
  }
  return j;
}

inline FlowKey flow_key_from_json(const json& j) {
  FlowKey k;
  k.ip_lo = ipv4_from_string(j.at("ip_lo").get<std::string>());
  k.ip_hi = ipv4_from_string(j.at("ip_hi").get<std::string>());
  k.proto.kind = proto_kind_from_string(j.at("proto").get<std::string>());
  k.proto.ip_proto = j.value("ip_proto", 0);
  k.variant = j.at("variant").get<std::string>() == "5-tuple"
                  ? FlowVariant::FiveTuple
                  : FlowVariant::ThreeTuple;
  if (k.variant == FlowVariant::FiveTuple) {
    k.port_lo = j.at("port_lo").get<std::uint16_t>();
    k.port_hi = j.at("port_hi").get<std::uint16_t>();
  }
  return k;
}

inline std::string encode_packet_matrix(const Mat<float>& m) {
  std::vector<std::uint8_t> raw;
  raw.reserve(m.size() * 4);
  for (float v : m.a) put_f32le(raw, v);
  return base64_encode(raw);
}

inline Mat<float> decode_packet_matrix(const std::string& b64,
                                       std::size_t rows, std::size_t cols) {
  const std::vector<std::uint8_t> raw = base64_decode(b64);
  if (raw.size() != rows * cols * 4)
    throw ShapeMismatch("packet matrix payload size mismatch");
  Mat<float> m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    m.a[i] = get_f32le(raw.data() + i * 4);
  return m;
}

inline std::string record_to_line(const FlowRecord& rec) {
  const auto n = static_cast<std::size_t>(rec.valid_len());
  json j;
  j["key"] = flow_key_to_json(rec.key);
  j["label"] = rec.label;
  j["n"] = n;
  j["d"] = rec.packets.cols;
  j["pk"] = encode_packet_matrix(rec.packets);
  json ts = json::array();
  for (float t : rec.timestamps) ts.push_back(static_cast<double>(t));
  j["ts"] = std::move(ts);
  return j.dump();
}

inline FlowRecord record_from_line(const std::string& line) {
  json j = json::parse(line);
  FlowRecord rec;
  rec.key = flow_key_from_json(j.at("key"));
  rec.label = j.at("label").get<int>();
  const auto n = j.at("n").get<std::size_t>();
  const auto d = j.at("d").get<std::size_t>();
  const auto& ts = j.at("ts");
  const std::size_t total = ts.size();
  if (total < n) throw ShapeMismatch("dataset line: fewer timestamps than n");
  rec.packets = decode_packet_matrix(j.at("pk").get<std::string>(), total, d);
  rec.timestamps.reserve(total);
  for (const auto& t : ts)
    rec.timestamps.push_back(static_cast<float>(t.get<double>()));
  rec.mask.assign(total, 0);
  for (std::size_t i = 0; i < n; ++i) rec.mask[i] = 1;
  return rec;
}

inline std::string manifest_path_for(const std::string& dataset_path) {
  return dataset_path + ".manifest.json";
}

inline void write_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open for writing: " + path);
  for (const auto& rec : ds.records) f << record_to_line(rec) << '\n';
  if (!f) throw InputError("write failed: " + path);

  json counts;
  const auto per_class = ds.per_class_counts();
  json per_class_json = json::object();
  for (std::size_t i = 0; i < per_class.size(); ++i)
    per_class_json[ds.class_names[i]] = per_class[i];
  counts["records"] = ds.records.size();
  counts["per_class"] = per_class_json;
  counts["skipped_unparseable"] = ds.skipped_unparseable;
  counts["skipped_overflow"] = ds.skipped_overflow;
  counts["discarded_empty"] = ds.discarded_empty;
  counts["unlabeled"] = ds.unlabeled;
  json manifest{{"format", 1},
                {"classes", ds.class_names},
                {"prep", prep_config_to_json(ds.prep)},
                {"counts", counts}};
  std::ofstream mf(manifest_path_for(path));
  if (!mf) throw InputError("cannot open for writing: " +
                            manifest_path_for(path));
  mf << manifest.dump(2) << '\n';
}

inline LabeledDataset read_dataset(const std::string& path) {
  std::ifstream mf(manifest_path_for(path));
  if (!mf)
    throw InputError("missing dataset manifest: " + manifest_path_for(path));
  json manifest = json::parse(mf);
  LabeledDataset ds;
  ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
  ds.prep = prep_config_from_json(manifest.at("prep"));
  if (manifest.contains("counts")) {
    const auto& c = manifest.at("counts");
    ds.skipped_unparseable = c.value("skipped_unparseable", 0u);
    ds.skipped_overflow = c.value("skipped_overflow", 0u);
    ds.discarded_empty = c.value("discarded_empty", 0u);
    ds.unlabeled = c.value("unlabeled", 0u);
  }
  std::ifstream f(path);
  if (!f) throw InputError("cannot open dataset: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ds.records.push_back(record_from_line(line));
  }
  return ds;
}

}  // namespace eids::flowcap
