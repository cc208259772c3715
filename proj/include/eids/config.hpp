#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/augment/augment.hpp"
#include "eids/evalkit/evalkit.hpp"
#include "eids/flowcap/dataset_io.hpp"
#include "eids/tinyformer/train.hpp"
#include "eids/tinyformer/weights_io.hpp"

namespace eids {

using nlohmann::json;

struct TrainSettings {
  int epochs = 30;
  int batch_size = 4;
  tinyformer::AdamConfig adam;  // lr 0.0002, conventional betas
  std::uint64_t seed = 42;
  int splits = 29;  // diverse split plans to train on
  int retain = 5;   // ensemble size kept from the trained pool
};

struct EvalSettings {
  float tau = 0.99f;
  std::vector<int> o_list{5};
  int benign_class = 0;
  evalkit::Aggregation aggregation = evalkit::Aggregation::MeanSoftmax;
};

// Aggregate configuration shared by every subcommand. Defaults reproduce
// the reference system end to end; a config file overrides per section and
// CLI flags override the file.
struct RunConfig {
  flowcap::PrepConfig prep;
  augment::AugConfig aug;
  tinyformer::ModelConfig model;
  TrainSettings train;
  EvalSettings eval;
};

namespace detail {

inline void reject_unknown_keys(const json& j,
                                std::initializer_list<const char*> known,
                                const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw InvalidSpec("unknown key \"" + key + "\" in config section " +
                        section);
  }
}

}  // namespace detail

inline json aug_config_to_json(const augment::AugConfig& a) {
  return json{{"jitter_frac", a.jitter_frac},
              {"scale_set", a.scale_set},
              {"drop_coeff", a.drop_coeff},
              {"drop_bias", a.drop_bias},
              {"insert_coeff", a.insert_coeff},
              {"insert_bias", a.insert_bias},
              {"noise_pkt_div", a.noise_pkt_div},
              {"noise_byte_div", a.noise_byte_div},
              {"noise_sigma", a.noise_sigma},
              {"oversample_factor", a.oversample_factor},
              {"seed", a.seed}};
}

inline augment::AugConfig aug_config_from_json(const json& j) {
  detail::reject_unknown_keys(
      j,
      {"jitter_frac", "scale_set", "drop_coeff", "drop_bias", "insert_coeff",
       "insert_bias", "noise_pkt_div", "noise_byte_div", "noise_sigma",
       "oversample_factor", "seed"},
      "aug");
  augment::AugConfig a;
  if (j.contains("jitter_frac")) a.jitter_frac = j.at("jitter_frac").get<float>();
  if (j.contains("scale_set"))
    a.scale_set = j.at("scale_set").get<std::vector<float>>();
  if (j.contains("drop_coeff")) a.drop_coeff = j.at("drop_coeff").get<float>();
  if (j.contains("drop_bias")) a.drop_bias = j.at("drop_bias").get<float>();
  if (j.contains("insert_coeff"))
    a.insert_coeff = j.at("insert_coeff").get<float>();
  if (j.contains("insert_bias")) a.insert_bias = j.at("insert_bias").get<float>();
  if (j.contains("noise_pkt_div"))
    a.noise_pkt_div = j.at("noise_pkt_div").get<int>();
  if (j.contains("noise_byte_div"))
    a.noise_byte_div = j.at("noise_byte_div").get<int>();
  if (j.contains("noise_sigma")) a.noise_sigma = j.at("noise_sigma").get<float>();
  if (j.contains("oversample_factor"))
    a.oversample_factor = j.at("oversample_factor").get<int>();
  if (j.contains("seed")) a.seed = j.at("seed").get<std::uint64_t>();
  a.validate();
  return a;
}

inline json run_config_to_json(const RunConfig& rc) {
  json train{{"epochs", rc.train.epochs},
             {"batch_size", rc.train.batch_size},
             {"lr", rc.train.adam.lr},
             {"adam_beta1", rc.train.adam.beta1},
             {"adam_beta2", rc.train.adam.beta2},
             {"adam_eps", rc.train.adam.eps},
             {"seed", rc.train.seed},
             {"splits", rc.train.splits},
             {"retain", rc.train.retain}};
  json eval{{"tau", rc.eval.tau},
            {"o_list", rc.eval.o_list},
            {"benign_class", rc.eval.benign_class},
            {"aggregation",
             rc.eval.aggregation == evalkit::Aggregation::MeanSoftmax
                 ? "mean_softmax"
                 : "majority_vote"}};
  return json{{"prep", flowcap::prep_config_to_json(rc.prep)},
              {"aug", aug_config_to_json(rc.aug)},
              {"model", tinyformer::model_config_to_json(rc.model)},
              {"train", train},
              {"eval", eval}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"prep", "aug", "model", "train", "eval"},
                              "(top level)");
  RunConfig rc;
  if (j.contains("prep"))
    rc.prep = flowcap::prep_config_from_json(j.at("prep"));
  if (j.contains("aug")) rc.aug = aug_config_from_json(j.at("aug"));
  if (j.contains("model"))
    rc.model = tinyformer::model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::reject_unknown_keys(t,
                                {"epochs", "batch_size", "lr", "adam_beta1",
                                 "adam_beta2", "adam_eps", "seed", "splits",
                                 "retain"},
                                "train");
    if (t.contains("epochs")) rc.train.epochs = t.at("epochs").get<int>();
    if (t.contains("batch_size"))
      rc.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("lr")) rc.train.adam.lr = t.at("lr").get<float>();
    if (t.contains("adam_beta1"))
      rc.train.adam.beta1 = t.at("adam_beta1").get<float>();
    if (t.contains("adam_beta2"))
      rc.train.adam.beta2 = t.at("adam_beta2").get<float>();
    if (t.contains("adam_eps")) rc.train.adam.eps = t.at("adam_eps").get<float>();
    if (t.contains("seed")) rc.train.seed = t.at("seed").get<std::uint64_t>();
    if (t.contains("splits")) rc.train.splits = t.at("splits").get<int>();
    if (t.contains("retain")) rc.train.retain = t.at("retain").get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::reject_unknown_keys(
        e, {"tau", "o_list", "benign_class", "aggregation"}, "eval");
    if (e.contains("tau")) rc.eval.tau = e.at("tau").get<float>();
    if (e.contains("o_list"))
      rc.eval.o_list = e.at("o_list").get<std::vector<int>>();
    if (e.contains("benign_class"))
      rc.eval.benign_class = e.at("benign_class").get<int>();
    if (e.contains("aggregation")) {
      const auto a = e.at("aggregation").get<std::string>();
      if (a == "mean_softmax")
        rc.eval.aggregation = evalkit::Aggregation::MeanSoftmax;
      else if (a == "majority_vote")
        rc.eval.aggregation = evalkit::Aggregation::MajorityVote;
      else
        throw InvalidSpec("aggregation must be mean_softmax or majority_vote");
    }
  }
  // Keep the dimensions the model and the preparation agree on in sync.
  rc.model.packet_len = rc.prep.packet_len;
  rc.model.max_flow_len = rc.prep.max_flow_len;
  rc.model.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config file: " + path);
  return run_config_from_json(json::parse(f));
}

}  // namespace eids
