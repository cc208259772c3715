#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eids/tinyformer/adam.hpp"
#include "eids/tinyformer/loss.hpp"

using namespace eids;
using namespace eids::tinyformer;

TEST_CASE("early-detection loss values match direct evaluation") {
  // Perfect prediction → zero loss.
  REQUIRE(edl_loss<double>({{0.0, 1.0, 0.0}}, std::vector<int>{1},
                           std::vector<int>{1}) == Catch::Approx(0.0));

  // conf[label] = e^-1 at n=1: L = e^-0.1 * 1 ≈ 0.904837.
  const double e1 = std::exp(-1.0);
  REQUIRE(edl_loss<double>({{1.0 - e1, e1}}, std::vector<int>{1},
                           std::vector<int>{1}) ==
          Catch::Approx(0.9048374180359595).epsilon(1e-12));

  // Two identical samples at n=1 and n=30: weight ratio e^{2.9} ≈ 18.174.
  const double w1 = edl_weight<double>(1);
  const double w30 = edl_weight<double>(30);
  REQUIRE(w1 / w30 == Catch::Approx(18.17414536944306).epsilon(1e-12));

  // The batch loss is the weighted sum of the individual losses.
  const double ce = -std::log(0.25);
  const double expect = w1 * ce + w30 * ce;
  REQUIRE(edl_loss<double>({{0.75, 0.25}, {0.75, 0.25}},
                           std::vector<int>{1, 1},
                           std::vector<int>{1, 30}) ==
          Catch::Approx(expect).epsilon(1e-12));

  // Normalized variant divides by the weight sum.
  REQUIRE(edl_loss<double>({{0.75, 0.25}, {0.75, 0.25}},
                           std::vector<int>{1, 1}, std::vector<int>{1, 30},
                           true) == Catch::Approx(ce).epsilon(1e-12));
}

TEST_CASE("edl_loss rejects malformed batches") {
  REQUIRE_THROWS_AS(edl_loss<double>({{1.0, 0.0}}, std::vector<int>{0, 1},
                                     std::vector<int>{1}),
                    ShapeMismatch);
  REQUIRE_THROWS_AS(edl_loss<double>({{1.0, 0.0}}, std::vector<int>{5},
                                     std::vector<int>{1}),
                    ShapeMismatch);
  REQUIRE_THROWS_AS(
      edl_loss<double>({}, std::vector<int>{}, std::vector<int>{}),
      EmptyDataset);
}

TEST_CASE("edl_dlogits is w * (softmax - onehot)") {
  const std::vector<double> conf = {0.2, 0.5, 0.3};
  const auto d = edl_dlogits<double>(conf, 1, 0.5);
  REQUIRE(d[0] == Catch::Approx(0.1));
  REQUIRE(d[1] == Catch::Approx(0.5 * (0.5 - 1.0)));
  REQUIRE(d[2] == Catch::Approx(0.15));
}

namespace {

ModelConfig one_param_config() {
  // Tiny but valid config; we only probe a couple of scalar weights.
  ModelConfig cfg;
  cfg.packet_len = 2;
  cfg.max_flow_len = 2;
  cfg.model_dim = 2;
  cfg.num_blocks = 1;
  cfg.num_heads = 1;
  cfg.head_dim = 2;
  cfg.ffn_dim = 2;
  cfg.num_classes = 2;
  cfg.pe = PeKind::None;
  return cfg;
}

}  // namespace

TEST_CASE("adam first step has the closed-form size") {
  const ModelConfig cfg = one_param_config();
  ModelWeights<float> w = init_weights<float>(cfg, 1);
  ModelWeights<float> g = zero_weights<float>(cfg);
  const float g0 = 0.37f;
  g.input.W(0, 0) = g0;
  AdamState<float> state = AdamState<float>::make(w, cfg);
  AdamConfig opt;
  const float before = w.input.W(0, 0);
  adam_step(w, g, cfg, state, opt);
  // First step: m̂ = g, v̂ = g² → Δw = -lr · g / (|g| + ε).
  const float expect =
      before - opt.lr * g0 / (std::abs(g0) + opt.eps);
  REQUIRE(w.input.W(0, 0) == Catch::Approx(expect).epsilon(1e-6));
  REQUIRE(state.step == 1);
}

TEST_CASE("adam with zero gradients leaves weights unchanged") {
  const ModelConfig cfg = one_param_config();
  ModelWeights<float> w = init_weights<float>(cfg, 2);
  const ModelWeights<float> w0 = init_weights<float>(cfg, 2);
  const ModelWeights<float> g = zero_weights<float>(cfg);
  AdamState<float> state = AdamState<float>::make(w, cfg);
  AdamConfig opt;
  adam_step(w, g, cfg, state, opt);
  REQUIRE(w.input.W.a == w0.input.W.a);
  REQUIRE(w.head.W.a == w0.head.W.a);
  REQUIRE(state.step == 1);

  // Once the moments carry history, zero gradients decay them.
  ModelWeights<float> g1 = zero_weights<float>(cfg);
  g1.input.W(0, 0) = 1.0f;
  adam_step(w, g1, cfg, state, opt);
  const float m_before = state.m[0][0];
  adam_step(w, g, cfg, state, opt);
  REQUIRE(state.m[0][0] == Catch::Approx(m_before * opt.beta1));
}

TEST_CASE("adam is deterministic across runs") {
  const ModelConfig cfg = one_param_config();
  auto run = [&] {
    ModelWeights<float> w = init_weights<float>(cfg, 3);
    AdamState<float> state = AdamState<float>::make(w, cfg);
    AdamConfig opt;
    Rng rng(12);
    for (int step = 0; step < 10; ++step) {
      ModelWeights<float> g = zero_weights<float>(cfg);
      for_each_tensor(g, cfg,
                      [&](const TensorInfo& info, std::vector<float>& t) {
                        if (!info.trainable) return;
                        for (auto& v : t)
                          v = static_cast<float>(rng.uniform(-1.0, 1.0));
                      });
      adam_step(w, g, cfg, state, opt);
    }
    return w;
  };
  const auto w1 = run();
  const auto w2 = run();
  REQUIRE(w1.input.W.a == w2.input.W.a);
  REQUIRE(w1.head.W.a == w2.head.W.a);
  REQUIRE(w1.blocks[0].ff1.W.a == w2.blocks[0].ff1.W.a);
}
