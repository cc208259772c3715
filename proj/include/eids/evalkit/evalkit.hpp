#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eids/augment/augment.hpp"
#include "eids/core/error.hpp"
#include "eids/tinyformer/model.hpp"

namespace eids::evalkit {

using flowcap::FlowRecord;
using nlohmann::json;
using tinyformer::ModelConfig;
using tinyformer::ModelWeights;

enum class Aggregation : std::uint8_t { MeanSoftmax, MajorityVote };

struct EnsembleMember {
  ModelConfig config;
  ModelWeights<float> weights;
};

// A set of models trained on different splits, queried jointly. Members
// must agree on the class set and the positional-encoding family.
struct Ensemble {
  std::vector<EnsembleMember> members;
  Aggregation aggregation = Aggregation::MeanSoftmax;

  void validate() const {
    if (members.empty()) throw InvalidSpec("ensemble needs >= 1 member");
    const int c = members.front().config.num_classes;
    const auto fam = pe_family(members.front().config.pe);
    for (const auto& m : members) {
      if (m.config.num_classes != c)
        throw InvalidSpec("ensemble members disagree on the class count");
      if (pe_family(m.config.pe) != fam)
        throw InvalidSpec("ensemble members disagree on the PE family");
    }
  }

  int num_classes() const { return members.front().config.num_classes; }
};

// Element-wise mean of the members' softmax outputs (majority vote keeps
// the mean confidences but overrides the winner by modal argmax).
inline std::vector<float> ensemble_predict(const Ensemble& ens,
                                           const FlowRecord& prefix) {
  ens.validate();
  const auto c = static_cast<std::size_t>(ens.num_classes());
  std::vector<float> mean(c, 0.0f);
  std::vector<int> votes(c, 0);
  for (const auto& m : ens.members) {
    const std::vector<float> conf =
        tinyformer::forward<float>(m.weights, m.config, prefix, false,
                                   nullptr);
    for (std::size_t i = 0; i < c; ++i) mean[i] += conf[i];
    ++votes[static_cast<std::size_t>(
        std::max_element(conf.begin(), conf.end()) - conf.begin())];
  }
  for (float& v : mean) v /= static_cast<float>(ens.members.size());
  if (ens.aggregation == Aggregation::MajorityVote) {
    // Report the modal class's mean confidence in its slot and keep the
    // rest proportional; ties break toward the lower class id.
    const auto winner = static_cast<std::size_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
    // Nudge the winner to the top without destroying the distribution.
    const auto cur_top = static_cast<std::size_t>(
        std::max_element(mean.begin(), mean.end()) - mean.begin());
    if (cur_top != winner) std::swap(mean[cur_top], mean[winner]);
  }
  return mean;
}

struct Decision {
  std::string flow_id;
  int predicted = -1;
  float confidence = 0.0f;
  int k = 0;  // packets consumed when the decision was made
  bool crossed = false;
};

// Streaming protocol: evaluate the predictor on growing prefixes and stop
// at the first k whose top-1 confidence reaches tau; flows that never
// reach it are decided on the full sequence with crossed = false.
template <typename Predictor>
Decision stream_classify_with(Predictor&& predict, const FlowRecord& flow,
                              float tau) {
  if (!(tau > 0.0f && tau <= 1.0f))
    throw InvalidSpec("confidence threshold must be in (0, 1]");
  const int n = flow.valid_len();
  if (n < 1) throw EmptyFlow("cannot classify an empty flow");
  Decision d;
  for (int k = 1; k <= n; ++k) {
    const FlowRecord prefix = augment::subflow_prefix(flow, k);
    const std::vector<float> conf = predict(prefix);
    const auto top = static_cast<std::size_t>(
        std::max_element(conf.begin(), conf.end()) - conf.begin());
    d.predicted = static_cast<int>(top);
    d.confidence = conf[top];
    d.k = k;
    if (conf[top] >= tau) {
      d.crossed = true;
      return d;
    }
  }
  d.crossed = false;
  return d;
}

inline Decision stream_classify(const Ensemble& ens, const FlowRecord& flow,
                                float tau) {
  return stream_classify_with(
      [&](const FlowRecord& prefix) { return ensemble_predict(ens, prefix); },
      flow, tau);
}

struct ErdeCosts {
  float c_fn = 1.0f;
  float c_tp = 1.0f;
  // c_fp defaults to the attack prevalence (#attack flows / #flows) when
  // negative.
  float c_fp = -1.0f;
};

// Latency cost of a correct detection at delay k: 1 - 1/(1 + e^(k-o)).
inline double erde_latency_cost(int k, int o) {
  return 1.0 - 1.0 / (1.0 + std::exp(static_cast<double>(k - o)));
}

// Early Risk Detection Error with the binary attack/benign mapping:
// false positives cost c_fp, false negatives c_fn, true positives pay the
// sigmoid latency cost, true negatives are free; the score is the mean.
inline double erde(std::span<const Decision> decisions,
                   std::span<const int> labels, int benign_class, int o,
                   ErdeCosts costs = {}) {
  if (decisions.size() != labels.size())
    throw ShapeMismatch("erde: decisions/labels length mismatch");
  if (o < 1) throw InvalidSpec("erde horizon must be >= 1");
  if (decisions.empty()) return 0.0;
  std::size_t attacks = 0;
  for (int l : labels)
    if (l != benign_class) ++attacks;
  const double c_fp =
      costs.c_fp >= 0.0f
          ? static_cast<double>(costs.c_fp)
          : static_cast<double>(attacks) / static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool is_attack = labels[i] != benign_class;
    const bool said_attack = decisions[i].predicted != benign_class;
    if (!is_attack && said_attack) total += c_fp;
    else if (is_attack && !said_attack) total += costs.c_fn;
    else if (is_attack && said_attack)
      total += costs.c_tp * erde_latency_cost(decisions[i].k, o);
  }
  return total / static_cast<double>(decisions.size());
}

struct EvalReport {
  float tau = 0.99f;
  std::vector<Decision> decisions;
  std::vector<int> labels;
  double top1_accuracy = 0.0;
  int max_earliness = 0;        // over correct decisions that crossed tau
  double mean_earliness = 0.0;  // idem
  std::size_t earliness_flows = 0;
  double fnr = 0.0;
  double far = 0.0;
  std::map<int, double> erde_scores;
  std::vector<std::vector<int>> confusion;  // [label][predicted]
};

// Aggregates a decision set. Earliness statistics cover flows decided
// correctly after crossing the threshold; flows that never crossed still
// count toward accuracy, FNR, FAR and the confusion matrix at their k=n
// decision.
inline EvalReport compute_metrics(std::vector<Decision> decisions,
                                  std::vector<int> labels, int num_classes,
                                  int benign_class, float tau) {
  if (decisions.size() != labels.size())
    throw ShapeMismatch("compute_metrics: decisions/labels length mismatch");
  EvalReport rep;
  rep.tau = tau;
  rep.confusion.assign(static_cast<std::size_t>(num_classes),
                       std::vector<int>(static_cast<std::size_t>(num_classes),
                                        0));
  std::size_t correct = 0, early_sum = 0;
  std::size_t attacks = 0, benign = 0, fn = 0, fp = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    const int y = labels[i];
    if (y < 0 || y >= num_classes || d.predicted < 0 ||
        d.predicted >= num_classes)
      throw ShapeMismatch("compute_metrics: class id out of range");
    ++rep.confusion[static_cast<std::size_t>(y)]
                   [static_cast<std::size_t>(d.predicted)];
    const bool is_correct = d.predicted == y;
    if (is_correct) ++correct;
    if (is_correct && d.crossed) {
      rep.max_earliness = std::max(rep.max_earliness, d.k);
      early_sum += static_cast<std::size_t>(d.k);
      ++rep.earliness_flows;
    }
    if (y != benign_class) {
      ++attacks;
      if (d.predicted == benign_class) ++fn;
    } else {
      ++benign;
      if (d.predicted != benign_class) ++fp;
    }
  }
  const auto total = decisions.size();
  rep.top1_accuracy =
      total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  rep.mean_earliness =
      rep.earliness_flows
          ? static_cast<double>(early_sum) /
                static_cast<double>(rep.earliness_flows)
          : 0.0;
  rep.fnr = attacks ? static_cast<double>(fn) / static_cast<double>(attacks)
                    : 0.0;
  rep.far = benign ? static_cast<double>(fp) / static_cast<double>(benign)
                   : 0.0;
  rep.decisions = std::move(decisions);
  rep.labels = std::move(labels);
  return rep;
}

// Runs the streaming protocol over a test set and assembles the report.
inline EvalReport evaluate(const Ensemble& ens,
                           std::span<const FlowRecord> test_set, float tau,
                           std::span<const int> o_list, int benign_class) {
  ens.validate();
  if (test_set.empty()) throw EmptyDataset("evaluation set is empty");
  std::vector<Decision> decisions;
  std::vector<int> labels;
  decisions.reserve(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    Decision d = stream_classify(ens, test_set[i], tau);
    d.flow_id = to_string(test_set[i].key) + "#" + std::to_string(i);
    decisions.push_back(std::move(d));
    labels.push_back(test_set[i].label);
  }
  EvalReport rep = compute_metrics(std::move(decisions), std::move(labels),
                                   ens.num_classes(), benign_class, tau);
  for (int o : o_list)
    rep.erde_scores[o] = erde(rep.decisions, rep.labels, benign_class, o);
  return rep;
}

inline json report_to_json(const EvalReport& rep,
                           std::span<const std::string> class_names) {
  json decisions = json::array();
  for (std::size_t i = 0; i < rep.decisions.size(); ++i) {
    const Decision& d = rep.decisions[i];
    decisions.push_back(json{{"flow", d.flow_id},
                             {"label", rep.labels[i]},
                             {"predicted", d.predicted},
                             {"confidence", d.confidence},
                             {"k", d.k},
                             {"crossed", d.crossed}});
  }
  json erde_json = json::object();
  for (const auto& [o, v] : rep.erde_scores)
    erde_json[std::to_string(o)] = v;
  return json{{"tau", rep.tau},
              {"classes", std::vector<std::string>(class_names.begin(),
                                                   class_names.end())},
              {"top1_accuracy", rep.top1_accuracy},
              {"max_earliness", rep.max_earliness},
              {"mean_earliness", rep.mean_earliness},
              {"earliness_flows", rep.earliness_flows},
              {"fnr", rep.fnr},
              {"far", rep.far},
              {"erde", erde_json},
              {"confusion", rep.confusion},
              {"decisions", decisions}};
}

inline void render_report(std::ostream& os, const EvalReport& rep,
                          std::span<const std::string> class_names) {
  os << "flows evaluated : " << rep.decisions.size() << "\n";
  os << "tau             : " << rep.tau << "\n";
  os << std::fixed << std::setprecision(4);
  os << "top-1 accuracy  : " << rep.top1_accuracy << "\n";
  os << "max earliness   : " << rep.max_earliness << " packets ("
     << rep.earliness_flows << " confident flows)\n";
  os << "mean earliness  : " << rep.mean_earliness << " packets\n";
  os << "FNR             : " << rep.fnr << "\n";
  os << "FAR             : " << rep.far << "\n";
  for (const auto& [o, v] : rep.erde_scores)
    os << "ERDE_" << o << "          : " << v << "\n";
  os << "confusion (rows = label, cols = predicted):\n";
  for (std::size_t r = 0; r < rep.confusion.size(); ++r) {
    os << "  ";
    if (r < class_names.size())
      os << std::setw(12) << class_names[r] << " ";
    for (int v : rep.confusion[r]) os << std::setw(5) << v;
    os << "\n";
  }
  os.unsetf(std::ios::fixed);
}

}  // namespace eids::evalkit
