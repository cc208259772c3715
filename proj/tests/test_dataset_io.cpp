#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "eids/core/rng.hpp"
#include "eids/flowcap/dataset_io.hpp"

using namespace eids;
using namespace eids::flowcap;

namespace {

FlowRecord random_record(Rng& rng, int n, int d, int label) {
  FlowRecord rec;
  rec.key.ip_lo = 0x0a000001;
  rec.key.ip_hi = 0x0a000002;
  rec.key.proto = {ProtoKind::Http, 6};
  rec.label = label;
  rec.packets = Mat<float>(static_cast<std::size_t>(n),
                           static_cast<std::size_t>(d));
  for (auto& v : rec.packets.a)
    v = static_cast<float>(rng.uniform_int(255)) / 255.0f;
  rec.timestamps.resize(static_cast<std::size_t>(n));
  float t = 0.0f;
  for (auto& ts : rec.timestamps) {
    ts = t;
    t += static_cast<float>(rng.uniform01());
  }
  rec.mask.assign(static_cast<std::size_t>(n), 1);
  return rec;
}

}  // namespace

TEST_CASE("dataset writes and reads back bit-identical records") {
  Rng rng(11);
  LabeledDataset ds;
  ds.class_names = {"benign", "alpha", "beta"};
  ds.prep.packet_len = 32;
  ds.prep.max_flow_len = 8;
  ds.skipped_unparseable = 3;
  for (int i = 0; i < 5; ++i)
    ds.records.push_back(random_record(rng, 1 + i, 32, i % 3));

  const std::string path =
      (std::filesystem::temp_directory_path() / "eids_ds_test.jsonl").string();
  write_dataset(path, ds);
  const LabeledDataset got = read_dataset(path);

  REQUIRE(got.class_names == ds.class_names);
  REQUIRE(got.prep.packet_len == 32);
  REQUIRE(got.skipped_unparseable == 3);
  REQUIRE(got.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    REQUIRE(got.records[i].packets.a == ds.records[i].packets.a);
    REQUIRE(got.records[i].timestamps == ds.records[i].timestamps);
    REQUIRE(got.records[i].mask == ds.records[i].mask);
    REQUIRE(got.records[i].label == ds.records[i].label);
    REQUIRE(got.records[i].key == ds.records[i].key);
  }
  std::remove(path.c_str());
  std::remove(manifest_path_for(path).c_str());
}

TEST_CASE("flow keys serialize both variants") {
  FlowKey k;
  k.ip_lo = ipv4_from_string("192.168.1.9");
  k.ip_hi = ipv4_from_string("192.168.1.77");
  k.proto = {ProtoKind::Tcp, 6};
  k.variant = FlowVariant::FiveTuple;
  k.port_lo = 443;
  k.port_hi = 51000;
  const FlowKey back = flow_key_from_json(flow_key_to_json(k));
  REQUIRE(back == k);
  REQUIRE(to_string(k) == "192.168.1.9:443-192.168.1.77:51000/tcp");
}

TEST_CASE("ipv4 string parsing rejects junk") {
  REQUIRE(ipv4_from_string("10.0.0.1") == 0x0a000001u);
  REQUIRE(ipv4_to_string(0x0a000001u) == "10.0.0.1");
  REQUIRE_THROWS_AS(ipv4_from_string("10.0.0"), InvalidSpec);
  REQUIRE_THROWS_AS(ipv4_from_string("10.0.0.256"), InvalidSpec);
  REQUIRE_THROWS_AS(ipv4_from_string("10.0.0.1.2"), InvalidSpec);
  REQUIRE_THROWS_AS(ipv4_from_string("abc"), InvalidSpec);
}

TEST_CASE("reading a dataset without its manifest fails cleanly") {
  REQUIRE_THROWS_AS(read_dataset("/nonexistent/nothing.jsonl"), InputError);
}
