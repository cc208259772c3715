#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eids/augment/augment.hpp"
#include "eids/core/rng.hpp"
#include "eids/tinyformer/adam.hpp"
#include "eids/tinyformer/backward.hpp"
#include "eids/tinyformer/loss.hpp"
#include "eids/tinyformer/model.hpp"

namespace eids::tinyformer {

// Training corpus: the subflow records plus the oversampled index list.
// Entries of `order` reference `base`; per-epoch augmentation is what
// differentiates repeated references.
struct TrainSet {
  std::vector<FlowRecord> base;
  std::vector<std::uint32_t> order;

  static TrainSet from_flows(std::span<const FlowRecord> flows,
                             const augment::AugConfig& aug) {
    TrainSet ts;
    for (const FlowRecord& f : flows) {
      auto subs = augment::make_subflows(f);
      for (auto& s : subs) ts.base.push_back(std::move(s));
    }
    ts.order =
        augment::oversample_indices(ts.base.size(), aug.oversample_factor);
    return ts;
  }
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;  // mean over batches of the weighted batch loss
  double accuracy = 0.0;   // argmax accuracy over the epoch's samples
};

struct TrainHyper {
  int epochs = 30;
  int batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 42;
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<EpochStats> history;
};

// Epoch loop: re-augment every oversampled subflow, shuffle, and take Adam
// steps on the early-detection loss. Augmentation and dropout draw from
// per-(epoch, sample) sub-streams, so the result is a pure function of
// (dataset, configs, seed) regardless of batch-internal evaluation order.
inline TrainResult train(const TrainSet& data, const ModelConfig& cfg,
                         const augment::AugConfig& aug,
                         const TrainHyper& hyper) {
  cfg.validate();
  aug.validate();
  if (data.base.empty() || data.order.empty())
    throw EmptyDataset("training set has no samples");
  if (hyper.batch_size < 1) throw InvalidSpec("batch_size must be >= 1");

  TrainResult out;
  out.weights = init_weights<float>(cfg, hyper.seed);
  AdamState<float> state = AdamState<float>::make(out.weights, cfg);
  ModelWeights<float> grads = zero_weights<float>(cfg);

  std::vector<std::uint32_t> sample_ids(data.order.size());
  std::iota(sample_ids.begin(), sample_ids.end(), 0u);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng =
        Rng::derive(hyper.seed, stream_tag("shuffle"),
                    static_cast<std::uint64_t>(epoch));
    for (std::size_t i = sample_ids.size(); i > 1; --i) {
      const auto j =
          static_cast<std::size_t>(shuffle_rng.uniform_int(i - 1));
      std::swap(sample_ids[i - 1], sample_ids[j]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0, correct = 0;
    for (std::size_t start = 0; start < sample_ids.size();
         start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end =
          std::min(start + static_cast<std::size_t>(hyper.batch_size),
                   sample_ids.size());
      zero_gradients(grads);

      // Forward every sample first so normalized weights can see the
      // whole batch.
      struct SampleEval {
        FlowRecord rec;
        ForwardTrace<float> trace;
        std::vector<float> conf;
        float weight = 0;
      };
      std::vector<SampleEval> evals;
      evals.reserve(end - start);
      float weight_sum = 0;
      double batch_loss = 0;
      for (std::size_t s = start; s < end; ++s) {
        const std::uint32_t sample_id = sample_ids[s];
        SampleEval ev;
        ev.rec = augment::augment_pipeline(
            data.base[data.order[sample_id]], aug, cfg.max_flow_len,
            static_cast<std::uint64_t>(epoch), sample_id);
        Rng drop_rng =
            Rng::derive(hyper.seed, stream_tag("dropout"),
                        static_cast<std::uint64_t>(epoch), sample_id);
        ev.conf = forward<float>(out.weights, cfg, ev.rec, true, &drop_rng,
                                 &ev.trace);
        ev.weight = edl_weight<float>(ev.rec.valid_len());
        weight_sum += ev.weight;

        const int label = ev.rec.label;
        if (label < 0 || label >= cfg.num_classes)
          throw ShapeMismatch("training sample with out-of-range label");
        const float p = std::max(ev.conf[static_cast<std::size_t>(label)],
                                 1e-30f);
        batch_loss += static_cast<double>(ev.weight) * -std::log(p);
        const auto argmax = static_cast<int>(
            std::max_element(ev.conf.begin(), ev.conf.end()) -
            ev.conf.begin());
        if (argmax == label) ++correct;
        evals.push_back(std::move(ev));
      }
      if (cfg.edl_normalize && weight_sum > 0)
        batch_loss /= static_cast<double>(weight_sum);

      for (const SampleEval& ev : evals) {
        float w_eff = ev.weight;
        if (cfg.edl_normalize && weight_sum > 0) w_eff /= weight_sum;
        const std::vector<float> dlogits =
            edl_dlogits<float>(ev.conf, ev.rec.label, w_eff);
        backward<float>(out.weights, cfg, ev.rec, ev.trace, dlogits, grads);
      }
      adam_step(out.weights, grads, cfg, state, hyper.adam);
      loss_sum += batch_loss;
      ++batches;
    }

    EpochStats st;
    st.epoch = epoch;
    st.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    st.accuracy = sample_ids.empty()
                      ? 0.0
                      : static_cast<double>(correct) /
                            static_cast<double>(sample_ids.size());
    out.history.push_back(st);
  }
  return out;
}

}  // namespace eids::tinyformer
