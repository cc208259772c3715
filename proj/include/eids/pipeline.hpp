#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/augment/splits.hpp"
#include "eids/config.hpp"
#include "eids/evalkit/evalkit.hpp"
#include "eids/flowcap/dataset_io.hpp"
#include "eids/flowcap/flow.hpp"
#include "eids/flowcap/pcap.hpp"
#include "eids/tinyformer/train.hpp"
#include "eids/tinyformer/weights_io.hpp"

namespace eids::pipeline {

using evalkit::Ensemble;
using evalkit::EvalReport;
using flowcap::FlowKey;
using flowcap::FlowRecord;
using flowcap::LabeledDataset;
using nlohmann::json;

// Labels manifest: either per-key entries (ip pair → class) or per-file
// (capture basename → class, for the common one-session-per-file case).
struct LabelsManifest {
  std::vector<std::string> classes;
  enum class Mode { ByKey, ByFile } mode = Mode::ByFile;
  struct KeyEntry {
    std::uint32_t ip_lo = 0, ip_hi = 0;
    int label = -1;
  };
  std::vector<KeyEntry> by_key;
  std::map<std::string, int> by_file;  // basename → class id

  int class_id(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    throw InvalidSpec("labels manifest references unknown class: " + name);
  }

  int label_for_key(const FlowKey& k) const {
    for (const auto& e : by_key)
      if (e.ip_lo == k.ip_lo && e.ip_hi == k.ip_hi) return e.label;
    return -1;
  }

  static LabelsManifest from_json(const json& j) {
    LabelsManifest m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    const auto mode = j.value("mode", std::string("by_file"));
    if (mode == "by_key") {
      m.mode = Mode::ByKey;
      for (const auto& e : j.at("by_key")) {
        KeyEntry ke;
        const auto a =
            flowcap::ipv4_from_string(e.at("ip_lo").get<std::string>());
        const auto b =
            flowcap::ipv4_from_string(e.at("ip_hi").get<std::string>());
        ke.ip_lo = std::min(a, b);
        ke.ip_hi = std::max(a, b);
        ke.label = m.class_id(e.at("class").get<std::string>());
        m.by_key.push_back(ke);
      }
    } else if (mode == "by_file") {
      m.mode = Mode::ByFile;
      for (const auto& [file, cls] : j.at("by_file").items())
        m.by_file[file] = m.class_id(cls.get<std::string>());
    } else {
      throw InvalidSpec("labels manifest mode must be by_key or by_file");
    }
    return m;
  }

  static LabelsManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open labels manifest: " + path);
    return from_json(json::parse(f));
  }
};

// The full preparation pipeline over one or more captures: parse, group
// into flows, filter, preprocess, label. Unlabeled and filtered-empty
// flows are counted, not silently lost.
inline LabeledDataset prepare_dataset(std::span<const std::string> pcap_paths,
                                      const LabelsManifest& labels,
                                      const flowcap::PrepConfig& prep) {
  prep.validate();
  LabeledDataset ds;
  ds.prep = prep;
  ds.class_names = labels.classes;
  for (const std::string& path : pcap_paths) {
    const std::vector<flowcap::Packet> packets =
        flowcap::parse_pcap_file(path);
    const flowcap::FlowPartition part = flowcap::identify_flows(packets, prep);
    ds.skipped_unparseable += part.skipped_unparseable;
    ds.skipped_overflow += part.skipped_overflow;

    int file_label = -1;
    if (labels.mode == LabelsManifest::Mode::ByFile) {
      const std::string base = std::filesystem::path(path).filename();
      auto it = labels.by_file.find(base);
      if (it == labels.by_file.end()) it = labels.by_file.find(path);
      if (it != labels.by_file.end()) file_label = it->second;
    }

    for (const auto& [key, flow] : part.flows) {
      const std::vector<flowcap::Packet> kept =
          flowcap::filter_packets(flow, prep.filter);
      if (kept.empty()) {
        ++ds.discarded_empty;
        continue;
      }
      const int label = labels.mode == LabelsManifest::Mode::ByKey
                            ? labels.label_for_key(key)
                            : file_label;
      if (label < 0) {
        ++ds.unlabeled;
        continue;
      }
      ds.records.push_back(flowcap::build_flow_record(kept, prep, label));
    }
  }
  return ds;
}

// Per-member training outcome, including the validation metrics on the
// member's own held-out flows that drive retention.
struct MemberInfo {
  augment::SplitPlan split;
  double val_accuracy = 0.0;
  double val_mean_earliness = 0.0;
  int val_max_earliness = 0;
  tinyformer::TrainResult result;
  bool retained = false;
};

struct EnsembleTrainResult {
  std::vector<MemberInfo> members;       // every trained split
  std::vector<std::size_t> retained;     // indices into members
  Ensemble ensemble;                     // the retained members' weights
};

// Groups record indices by class and checks the per-class counts match.
inline std::vector<std::vector<std::size_t>> indices_by_class(
    const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const int label = ds.records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= by_class.size())
      throw InvalidSpec("dataset record with out-of-range label");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  for (const auto& v : by_class)
    if (v.size() != by_class.front().size())
      throw InsufficientSamples(
          "split enumeration needs the same flow count per class");
  return by_class;
}

// Trains one model per selected split, scores each on its held-out flows,
// and keeps the best `retain` by accuracy, then mean earliness, then
// split id.
inline EnsembleTrainResult train_ensemble(const LabeledDataset& ds,
                                          const RunConfig& rc) {
  if (ds.records.empty()) throw EmptyDataset("training dataset is empty");
  const auto by_class = indices_by_class(ds);
  const int classes = static_cast<int>(by_class.size());
  const int samples_per_class = static_cast<int>(by_class.front().size());

  const std::vector<augment::SplitPlan> all_plans =
      augment::enumerate_splits(samples_per_class, classes);
  const std::vector<augment::SplitPlan> plans = augment::select_diverse_splits(
      all_plans, rc.train.splits, rc.train.seed);

  EnsembleTrainResult out;
  out.ensemble.aggregation = rc.eval.aggregation;
  for (const augment::SplitPlan& plan : plans) {
    std::vector<FlowRecord> train_flows;
    std::vector<FlowRecord> test_flows;
    for (int c = 0; c < classes; ++c) {
      const auto& cls = by_class[static_cast<std::size_t>(c)];
      for (int s = 0; s < samples_per_class; ++s) {
        const FlowRecord& rec = ds.records[cls[static_cast<std::size_t>(s)]];
        if (s == plan.heldout[static_cast<std::size_t>(c)])
          test_flows.push_back(rec);
        else
          train_flows.push_back(rec);
      }
    }

    tinyformer::TrainSet ts =
        tinyformer::TrainSet::from_flows(train_flows, rc.aug);
    tinyformer::TrainHyper hyper;
    hyper.epochs = rc.train.epochs;
    hyper.batch_size = rc.train.batch_size;
    hyper.adam = rc.train.adam;
    hyper.seed = Rng::mix(rc.train.seed, plan.split_id);

    MemberInfo info;
    info.split = plan;
    info.result = tinyformer::train(ts, rc.model, rc.aug, hyper);

    Ensemble solo;
    solo.members.push_back({rc.model, info.result.weights});
    const EvalReport val =
        evalkit::evaluate(solo, test_flows, rc.eval.tau, rc.eval.o_list,
                          rc.eval.benign_class);
    info.val_accuracy = val.top1_accuracy;
    info.val_mean_earliness = val.mean_earliness;
    info.val_max_earliness = val.max_earliness;
    out.members.push_back(std::move(info));
  }

  std::vector<std::size_t> ranking(out.members.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) ranking[i] = i;
  std::sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
    const MemberInfo& ma = out.members[a];
    const MemberInfo& mb = out.members[b];
    if (ma.val_accuracy != mb.val_accuracy)
      return ma.val_accuracy > mb.val_accuracy;
    if (ma.val_mean_earliness != mb.val_mean_earliness)
      return ma.val_mean_earliness < mb.val_mean_earliness;
    return ma.split.split_id < mb.split.split_id;
  });
  const std::size_t keep =
      std::min(static_cast<std::size_t>(std::max(rc.train.retain, 1)),
               ranking.size());
  for (std::size_t r = 0; r < keep; ++r) {
    out.retained.push_back(ranking[r]);
    out.members[ranking[r]].retained = true;
    out.ensemble.members.push_back(
        {rc.model, out.members[ranking[r]].result.weights});
  }
  return out;
}

// Test multiset matching the training protocol: each retained member
// contributes its own held-out flows, duplicates included.
inline std::vector<FlowRecord> heldout_union(
    const LabeledDataset& ds, const EnsembleTrainResult& trained) {
  const auto by_class = indices_by_class(ds);
  std::vector<FlowRecord> test;
  for (std::size_t r : trained.retained) {
    const augment::SplitPlan& plan = trained.members[r].split;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const std::size_t rec_idx =
          by_class[c][static_cast<std::size_t>(plan.heldout[c])];
      test.push_back(ds.records[rec_idx]);
    }
  }
  return test;
}

// ---- Ensemble manifest (train output / eval+stream+bench input) ----

struct EnsembleManifest {
  std::vector<std::string> classes;
  tinyformer::ModelConfig model;
  float tau = 0.99f;
  struct Member {
    std::string weights_path;  // relative to the manifest
    std::uint32_t split_id = 0;
    std::vector<int> heldout;
    double val_accuracy = 0.0;
    double val_mean_earliness = 0.0;
    int val_max_earliness = 0;
  };
  std::vector<Member> members;
};

inline json ensemble_manifest_to_json(const EnsembleManifest& m) {
  json members = json::array();
  for (const auto& mb : m.members) {
    members.push_back(json{{"weights", mb.weights_path},
                           {"split_id", mb.split_id},
                           {"heldout", mb.heldout},
                           {"val_accuracy", mb.val_accuracy},
                           {"val_mean_earliness", mb.val_mean_earliness},
                           {"val_max_earliness", mb.val_max_earliness}});
  }
  return json{{"format", 1},
              {"classes", m.classes},
              {"model", tinyformer::model_config_to_json(m.model)},
              {"tau", m.tau},
              {"members", members}};
}

inline EnsembleManifest ensemble_manifest_from_json(const json& j) {
  EnsembleManifest m;
  if (j.value("format", 0) != 1)
    throw VersionMismatch("unsupported ensemble manifest format");
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.model = tinyformer::model_config_from_json(j.at("model"));
  m.tau = j.value("tau", 0.99f);
  for (const auto& mb : j.at("members")) {
    EnsembleManifest::Member e;
    e.weights_path = mb.at("weights").get<std::string>();
    e.split_id = mb.value("split_id", 0u);
    if (mb.contains("heldout"))
      e.heldout = mb.at("heldout").get<std::vector<int>>();
    e.val_accuracy = mb.value("val_accuracy", 0.0);
    e.val_mean_earliness = mb.value("val_mean_earliness", 0.0);
    e.val_max_earliness = mb.value("val_max_earliness", 0);
    m.members.push_back(std::move(e));
  }
  if (m.members.empty())
    throw InvalidSpec("ensemble manifest lists no members");
  return m;
}

// Writes member archives plus the manifest (and per-member training
// history as line-delimited records) into out_dir.
inline std::string save_ensemble(const EnsembleTrainResult& trained,
                                 const LabeledDataset& ds, const RunConfig& rc,
                                 const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  EnsembleManifest manifest;
  manifest.classes = ds.class_names;
  manifest.model = rc.model;
  manifest.tau = rc.eval.tau;
  for (std::size_t r : trained.retained) {
    const MemberInfo& info = trained.members[r];
    char name[64];
    std::snprintf(name, sizeof name, "member_%03u.eidsw",
                  info.split.split_id);
    const std::string path = out_dir + "/" + name;
    tinyformer::save_weights(info.result.weights, rc.model, path);

    std::ofstream hist(out_dir + "/" +
                       std::string("member_") +
                       [&] {
                         char b[16];
                         std::snprintf(b, sizeof b, "%03u",
                                       info.split.split_id);
                         return std::string(b);
                       }() +
                       ".history.jsonl");
    for (const auto& e : info.result.history)
      hist << json{{"epoch", e.epoch},
                   {"loss", e.mean_loss},
                   {"accuracy", e.accuracy}}
                  .dump()
           << '\n';

    EnsembleManifest::Member mb;
    mb.weights_path = name;
    mb.split_id = info.split.split_id;
    mb.heldout = info.split.heldout;
    mb.val_accuracy = info.val_accuracy;
    mb.val_mean_earliness = info.val_mean_earliness;
    mb.val_max_earliness = info.val_max_earliness;
    manifest.members.push_back(std::move(mb));
  }
  const std::string manifest_path = out_dir + "/ensemble.json";
  std::ofstream mf(manifest_path);
  if (!mf) throw InputError("cannot open for writing: " + manifest_path);
  mf << ensemble_manifest_to_json(manifest).dump(2) << '\n';
  return manifest_path;
}

struct LoadedEnsemble {
  EnsembleManifest manifest;
  Ensemble ensemble;
};

inline LoadedEnsemble load_ensemble(const std::string& manifest_path,
                                    evalkit::Aggregation agg =
                                        evalkit::Aggregation::MeanSoftmax) {
  std::ifstream f(manifest_path);
  if (!f) throw InputError("cannot open ensemble manifest: " + manifest_path);
  LoadedEnsemble out;
  out.manifest = ensemble_manifest_from_json(json::parse(f));
  const std::filesystem::path dir =
      std::filesystem::path(manifest_path).parent_path();
  out.ensemble.aggregation = agg;
  for (const auto& mb : out.manifest.members) {
    const std::string wpath = (dir / mb.weights_path).string();
    tinyformer::LoadedWeights lw = tinyformer::load_weights(wpath);
    out.ensemble.members.push_back(
        {lw.config, std::move(lw.weights)});
  }
  out.ensemble.validate();
  return out;
}

// Test flows for `eval --from-manifest-splits`: the union multiset of the
// members' held-out flows, reconstructed from the manifest.
inline std::vector<FlowRecord> heldout_union_from_manifest(
    const LabeledDataset& ds, const EnsembleManifest& manifest) {
  const auto by_class = indices_by_class(ds);
  std::vector<FlowRecord> test;
  for (const auto& mb : manifest.members) {
    if (mb.heldout.size() != by_class.size())
      throw InvalidSpec("manifest split arity does not match the dataset");
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const int h = mb.heldout[c];
      if (h < 0 || static_cast<std::size_t>(h) >= by_class[c].size())
        throw InvalidSpec("manifest held-out index out of range");
      test.push_back(ds.records[by_class[c][static_cast<std::size_t>(h)]]);
    }
  }
  return test;
}

}  // namespace eids::pipeline
