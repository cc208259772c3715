#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "eids/augment/augment.hpp"
#include "eids/core/rng.hpp"
#include "eids/tinyformer/model.hpp"

using namespace eids;
using namespace eids::tinyformer;
using flowcap::FlowRecord;

namespace {

FlowRecord random_flow(Rng& rng, const ModelConfig& cfg, int n) {
  FlowRecord rec;
  rec.label = 0;
  rec.packets = Mat<float>(static_cast<std::size_t>(n),
                           static_cast<std::size_t>(cfg.packet_len));
  for (auto& v : rec.packets.a)
    v = static_cast<float>(rng.uniform_int(255)) / 255.0f;
  rec.timestamps.resize(static_cast<std::size_t>(n));
  float t = 0.0f;
  for (auto& ts : rec.timestamps) {
    ts = t;
    t += static_cast<float>(rng.uniform(0.01, 1.5));
  }
  rec.mask.assign(static_cast<std::size_t>(n), 1);
  return rec;
}

}  // namespace

TEST_CASE("reference configuration has exactly 5086 trainable parameters") {
  ModelConfig cfg;  // defaults are the reference values
  const auto w = init_weights<float>(cfg, 1);
  REQUIRE(count_params(w, cfg, false) == 5086);

  // Per-tensor accounting.
  std::size_t input = 0, qkv = 0, oproj = 0, ff1 = 0, ff2 = 0, norms = 0,
              head = 0;
  for_each_tensor(w, cfg, [&](const TensorInfo& info,
                              const std::vector<float>& t) {
    if (info.name.rfind("input.", 0) == 0) input += t.size();
    else if (info.name.find(".q.") != std::string::npos ||
             info.name.find(".k.") != std::string::npos ||
             info.name.find(".v.") != std::string::npos) qkv += t.size();
    else if (info.name.find(".o.") != std::string::npos) oproj += t.size();
    else if (info.name.find(".ff1.") != std::string::npos) ff1 += t.size();
    else if (info.name.find(".ff2.") != std::string::npos) ff2 += t.size();
    else if (info.name.find(".ln") != std::string::npos) norms += t.size();
    else if (info.name.rfind("head.", 0) == 0) head += t.size();
  });
  REQUIRE(input == 3592);
  REQUIRE(qkv == 864);
  REQUIRE(oproj == 264);
  REQUIRE(ff1 == 144);
  REQUIRE(ff2 == 136);
  REQUIRE(norms == 32);
  REQUIRE(head == 54);
  REQUIRE(input + qkv + oproj + ff1 + ff2 + norms + head == 5086);
}

TEST_CASE("fourier frequencies add d_m/2 parameters when counted") {
  ModelConfig cfg;
  cfg.pe = PeKind::Fourier;
  const auto w = init_weights<float>(cfg, 1);
  REQUIRE(count_params(w, cfg, false) == 5086);
  REQUIRE(count_params(w, cfg, true) == 5090);  // +4 frequencies
}

TEST_CASE("static sinusoidal table is non-trainable and sized d_m * N") {
  ModelConfig cfg;
  cfg.pe = PeKind::Sin;
  const auto w = init_weights<float>(cfg, 1);
  REQUIRE(w.sin_table.size() == 240);  // 8 * 30
  REQUIRE(count_params(w, cfg, true) == 5086);
  std::size_t non_trainable = 0;
  for_each_tensor(w, cfg,
                  [&](const TensorInfo& info, const std::vector<float>& t) {
                    if (!info.trainable) non_trainable += t.size();
                  });
  REQUIRE(non_trainable == 240);
}

TEST_CASE("forward emits a probability vector of length c") {
  ModelConfig cfg;
  Rng rng(31);
  const auto w = init_weights<float>(cfg, 2);
  for (PeKind pe :
       {PeKind::None, PeKind::Sin, PeKind::Fourier, PeKind::Rope,
        PeKind::DynSin, PeKind::DynFourier, PeKind::DynRope}) {
    ModelConfig c2 = cfg;
    c2.pe = pe;
    const auto w2 = init_weights<float>(c2, 2);
    const FlowRecord flow = random_flow(rng, c2, 13);
    const auto conf = forward<float>(w2, c2, flow, false, nullptr);
    REQUIRE(conf.size() == 6);
    float sum = 0.0f;
    for (float v : conf) {
      REQUIRE(v >= 0.0f);
      sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0f).margin(1e-6));
  }
}

TEST_CASE("attention rows over valid keys sum to one") {
  ModelConfig cfg;
  Rng rng(32);
  const auto w = init_weights<float>(cfg, 3);
  const FlowRecord flow = random_flow(rng, cfg, 9);
  ForwardTrace<float> tr;
  forward<float>(w, cfg, flow, false, nullptr, &tr);
  REQUIRE(tr.n == 9);
  for (const auto& head : tr.blocks[0].attn) {
    REQUIRE(head.rows == 9);
    REQUIRE(head.cols == 9);
    for (std::size_t r = 0; r < head.rows; ++r) {
      float sum = 0.0f;
      for (std::size_t c = 0; c < head.cols; ++c) sum += head(r, c);
      REQUIRE(sum == Catch::Approx(1.0f).margin(1e-6));
    }
  }
}

TEST_CASE("without positional signal, permuting packets changes nothing") {
  ModelConfig cfg;
  cfg.pe = PeKind::None;
  Rng rng(33);
  const auto w = init_weights<float>(cfg, 4);
  FlowRecord flow = random_flow(rng, cfg, 8);
  const auto base = forward<float>(w, cfg, flow, false, nullptr);

  // Reverse the valid rows (timestamps too; they are unused).
  FlowRecord rev = flow;
  for (int i = 0; i < 8; ++i)
    for (std::size_t c = 0; c < flow.packets.cols; ++c)
      rev.packets(static_cast<std::size_t>(i), c) =
          flow.packets(static_cast<std::size_t>(7 - i), c);
  const auto permuted = forward<float>(w, cfg, rev, false, nullptr);
  for (std::size_t i = 0; i < base.size(); ++i)
    REQUIRE(permuted[i] == Catch::Approx(base[i]).margin(1e-6));
}

TEST_CASE("padded positions never influence the output") {
  ModelConfig cfg;
  Rng rng(34);
  const auto w = init_weights<float>(cfg, 5);
  for (PeKind pe : {PeKind::DynSin, PeKind::Sin, PeKind::Rope}) {
    ModelConfig c2 = cfg;
    c2.pe = pe;
    const auto w2 = init_weights<float>(c2, 5);
    FlowRecord flow = random_flow(rng, c2, 6);
    FlowRecord padded = augment::pad_and_mask(flow, c2.max_flow_len);
    const auto base = forward<float>(w2, c2, padded, false, nullptr);
    // Arbitrary garbage in the padded tail.
    for (std::size_t i = 6; i < padded.packets.rows; ++i) {
      for (std::size_t c = 0; c < padded.packets.cols; ++c)
        padded.packets(i, c) = static_cast<float>(rng.uniform01());
      padded.timestamps[i] = static_cast<float>(rng.uniform(0.0, 100.0));
    }
    const auto poked = forward<float>(w2, c2, padded, false, nullptr);
    REQUIRE(poked == base);
    // And the unpadded record gives the same answer as the padded one.
    const auto unpadded = forward<float>(w2, c2, flow, false, nullptr);
    REQUIRE(unpadded == base);
  }
}

TEST_CASE("dynamic encodings with T = 0..n-1 equal their static variants") {
  ModelConfig cfg;
  Rng rng(35);
  const std::pair<PeKind, PeKind> pairs[] = {
      {PeKind::Sin, PeKind::DynSin},
      {PeKind::Fourier, PeKind::DynFourier},
      {PeKind::Rope, PeKind::DynRope},
  };
  for (const auto& [stat, dyn] : pairs) {
    ModelConfig cs = cfg;
    cs.pe = stat;
    ModelConfig cd = cfg;
    cd.pe = dyn;
    const auto ws = init_weights<float>(cs, 6);
    const auto wd = convert_weights<float>(ws, cs);  // same tensors
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_int(29));
      FlowRecord flow = random_flow(rng, cfg, n);
      for (int i = 0; i < n; ++i)
        flow.timestamps[static_cast<std::size_t>(i)] =
            static_cast<float>(i);
      const auto a = forward<float>(ws, cs, flow, false, nullptr);
      const auto b = forward<float>(wd, cd, flow, false, nullptr);
      for (std::size_t i = 0; i < a.size(); ++i)
        REQUIRE(b[i] == Catch::Approx(a[i]).margin(1e-6));
    }
  }
}

TEST_CASE("inference is deterministic") {
  ModelConfig cfg;
  Rng rng(36);
  const auto w = init_weights<float>(cfg, 7);
  const FlowRecord flow = random_flow(rng, cfg, 17);
  const auto a = forward<float>(w, cfg, flow, false, nullptr);
  const auto b = forward<float>(w, cfg, flow, false, nullptr);
  REQUIRE(a == b);
}

TEST_CASE("forward validates shapes and masks") {
  ModelConfig cfg;
  Rng rng(37);
  const auto w = init_weights<float>(cfg, 8);
  FlowRecord flow = random_flow(rng, cfg, 5);
  flow.packets.cols = 64;  // lie about the width
  REQUIRE_THROWS_AS(forward<float>(w, cfg, flow, false, nullptr),
                    ShapeMismatch);

  FlowRecord holey = random_flow(rng, cfg, 5);
  holey.mask[2] = 0;  // hole in the mask
  REQUIRE_THROWS_AS(forward<float>(w, cfg, holey, false, nullptr),
                    ShapeMismatch);

  FlowRecord empty = random_flow(rng, cfg, 3);
  empty.mask.assign(3, 0);
  REQUIRE_THROWS_AS(forward<float>(w, cfg, empty, false, nullptr), EmptyFlow);
}

TEST_CASE("non-finite weights abort with the layer name") {
  ModelConfig cfg;
  Rng rng(38);
  auto w = init_weights<float>(cfg, 9);
  w.input.W(0, 0) = std::numeric_limits<float>::quiet_NaN();
  FlowRecord flow = random_flow(rng, cfg, 4);
  flow.packets(0, 0) = 1.0f;  // make sure the NaN cell is touched
  try {
    forward<float>(w, cfg, flow, false, nullptr);
    FAIL("expected NonFiniteActivation");
  } catch (const NonFiniteActivation& e) {
    REQUIRE(std::string(e.what()).find("input_proj") != std::string::npos);
  }
}

TEST_CASE("train-mode dropout draws from the provided stream only") {
  ModelConfig cfg;
  Rng rng(39);
  const auto w = init_weights<float>(cfg, 10);
  const FlowRecord flow = random_flow(rng, cfg, 10);
  Rng d1 = Rng::derive(77, 1);
  Rng d2 = Rng::derive(77, 1);
  const auto a = forward<float>(w, cfg, flow, true, &d1);
  const auto b = forward<float>(w, cfg, flow, true, &d2);
  REQUIRE(a == b);
  Rng d3 = Rng::derive(77, 2);
  const auto c = forward<float>(w, cfg, flow, true, &d3);
  REQUIRE(a != c);
  REQUIRE_THROWS_AS(forward<float>(w, cfg, flow, true, nullptr), InvalidSpec);
}
