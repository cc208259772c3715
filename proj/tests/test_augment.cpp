#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "eids/augment/augment.hpp"
#include "eids/core/rng.hpp"

using namespace eids;
using namespace eids::augment;
using flowcap::FlowRecord;

namespace {

FlowRecord make_record(const std::vector<float>& ts, int d = 16,
                       int label = 1, std::uint64_t fill_seed = 99) {
  FlowRecord rec;
  rec.label = label;
  const auto n = ts.size();
  rec.packets = Mat<float>(n, static_cast<std::size_t>(d));
  Rng rng(fill_seed);
  for (auto& v : rec.packets.a)
    v = static_cast<float>(rng.uniform_int(255)) / 255.0f;
  rec.timestamps = ts;
  rec.mask.assign(n, 1);
  return rec;
}

FlowRecord random_flow(Rng& rng, int max_n = 30, int d = 16) {
  const int n = 1 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_n - 1)));
  std::vector<float> ts(static_cast<std::size_t>(n));
  float t = 0.0f;
  for (auto& v : ts) {
    v = t;
    t += static_cast<float>(rng.uniform(0.0, 2.0));
  }
  return make_record(ts, d, static_cast<int>(rng.uniform_int(5)),
                     rng.next_u64());
}

void check_invariants(const FlowRecord& rec, int max_n) {
  REQUIRE_NOTHROW(flowcap::check_flow_record(rec, max_n));
}

}  // namespace

TEST_CASE("make_subflows yields every prefix exactly") {
  const FlowRecord rec = make_record({0.0f, 0.2f, 0.5f, 0.9f});
  const auto subs = make_subflows(rec);
  REQUIRE(subs.size() == 4);
  for (int k = 1; k <= 4; ++k) {
    const FlowRecord& s = subs[static_cast<std::size_t>(k - 1)];
    REQUIRE(s.valid_len() == k);
    REQUIRE(s.label == rec.label);
    for (int i = 0; i < k; ++i) {
      REQUIRE(s.timestamps[static_cast<std::size_t>(i)] ==
              rec.timestamps[static_cast<std::size_t>(i)]);
      for (std::size_t c = 0; c < rec.packets.cols; ++c)
        REQUIRE(s.packets(static_cast<std::size_t>(i), c) ==
                rec.packets(static_cast<std::size_t>(i), c));
    }
  }
  REQUIRE(subs[2].timestamps ==
          std::vector<float>{0.0f, 0.2f, 0.5f});

  const FlowRecord one = make_record({0.0f});
  const auto single = make_subflows(one);
  REQUIRE(single.size() == 1);
  REQUIRE(single[0].packets.a == one.packets.a);

  const FlowRecord full = make_record(std::vector<float>(30, 0.0f));
  REQUIRE(make_subflows(full).size() == 30);
}

TEST_CASE("jitter keeps the anchor, the bounds and monotonicity") {
  AugConfig cfg;
  const FlowRecord rec = make_record({0.0f, 1.0f, 2.0f});
  // 10^4 seeded draws: middle element stays inside (1 - 0.7, 1 + 0.7),
  // the vector stays sorted and starts at 0.
  for (int i = 0; i < 10000; ++i) {
    Rng rng = Rng::derive(123, static_cast<std::uint64_t>(i));
    const FlowRecord out = jitter(rec, cfg, rng);
    REQUIRE(out.timestamps[0] == 0.0f);
    REQUIRE(out.timestamps[1] >= out.timestamps[0]);
    REQUIRE(out.timestamps[2] >= out.timestamps[1]);
    // Pre-sort values: t1 in 1±0.7, t2 in 2±0.7; after sorting and
    // re-basing every entry stays within the combined envelope.
    REQUIRE(out.timestamps[2] <= Catch::Approx(2.7f + 0.7f));
  }

  FlowRecord single = make_record({0.0f});
  Rng rng(1);
  REQUIRE(jitter(single, cfg, rng).timestamps ==
          std::vector<float>{0.0f});

  // Zero-width uniform → bit-exact identity.
  AugConfig zero = cfg;
  zero.jitter_frac = 0.0f;
  Rng rng2(2);
  const FlowRecord out = jitter(rec, zero, rng2);
  REQUIRE(out.timestamps == rec.timestamps);
  REQUIRE(out.packets.a == rec.packets.a);

  // Zero gaps: nothing to jitter.
  const FlowRecord flat = make_record({0.0f, 0.0f});
  Rng rng3(3);
  REQUIRE(jitter(flat, cfg, rng3).timestamps == flat.timestamps);
}

TEST_CASE("jitter draw bounds match the per-element minimum gap") {
  AugConfig cfg;
  // Gaps 1.0 then 3.0: middle element bound is min(1,3)=1, last is 3.
  const FlowRecord rec = make_record({0.0f, 1.0f, 4.0f});
  for (int i = 0; i < 2000; ++i) {
    Rng rng = Rng::derive(77, static_cast<std::uint64_t>(i));
    // Reproduce the raw draws to verify the bound, pre-sort.
    const double d1 = rng.uniform(-0.7 * 1.0, 0.7 * 1.0);
    const double d2 = rng.uniform(-0.7 * 3.0, 0.7 * 3.0);
    REQUIRE(std::abs(d1) <= 0.7);
    REQUIRE(std::abs(d2) <= 2.1);
    Rng rng_replay = Rng::derive(77, static_cast<std::uint64_t>(i));
    const FlowRecord out = jitter(rec, cfg, rng_replay);
    // The multiset of output gaps re-sorts {1+d1-0, 4+d2-(1+d1)}.
    std::vector<float> expect = {0.0f, static_cast<float>(1.0 + d1),
                                 static_cast<float>(4.0 + d2)};
    std::sort(expect.begin(), expect.end());
    const float base = expect[0];
    for (auto& v : expect) v -= base;
    expect[0] = 0.0f;
    REQUIRE(out.timestamps == expect);
  }
}

TEST_CASE("traffic_scale multiplies gaps and rebuilds cumulatively") {
  AugConfig cfg;
  cfg.scale_set = {0.5f};
  const FlowRecord rec = make_record({0.0f, 1.0f, 3.0f});
  Rng rng(4);
  const FlowRecord out = traffic_scale(rec, cfg, rng);
  REQUIRE(out.timestamps ==
          std::vector<float>{0.0f, 0.5f, 1.5f});

  cfg.scale_set = {1.0f};
  Rng rng2(5);
  const FlowRecord same = traffic_scale(rec, cfg, rng2);
  REQUIRE(same.timestamps == rec.timestamps);

  // Any factor keeps T[0]=0 and the ordering.
  cfg.scale_set = {0.5f, 0.75f, 1.0f, 1.25f, 1.5f};
  for (int i = 0; i < 200; ++i) {
    Rng r = Rng::derive(6, static_cast<std::uint64_t>(i));
    const FlowRecord o = traffic_scale(rec, cfg, r);
    REQUIRE(o.timestamps[0] == 0.0f);
    REQUIRE(o.timestamps[1] <= o.timestamps[2]);
  }
}

TEST_CASE("packet_drop bounds follow the flow-length formula") {
  AugConfig cfg;
  REQUIRE(max_drop_count(1, cfg) == 0);   // floor(-0.25) clamps to 0
  REQUIRE(max_drop_count(2, cfg) == 0);   // floor(0.0) = 0
  REQUIRE(max_drop_count(6, cfg) == 1);   // floor(1.0) = 1
  REQUIRE(max_drop_count(10, cfg) == 2);  // floor(2.0) = 2
  REQUIRE(max_drop_count(30, cfg) == 7);  // floor(7.0) = 7

  const FlowRecord rec2 = make_record({0.0f, 1.0f});
  Rng rng(7);
  const FlowRecord out = packet_drop(rec2, cfg, rng);
  REQUIRE(out.valid_len() == 2);
  REQUIRE(out.packets.a == rec2.packets.a);

  // Position 0 is never dropped and survivors keep absolute timestamps.
  Rng flow_rng(8);
  for (int i = 0; i < 2000; ++i) {
    const FlowRecord rec = random_flow(flow_rng);
    Rng r = Rng::derive(9, static_cast<std::uint64_t>(i));
    const FlowRecord dropped = packet_drop(rec, cfg, r);
    const int removed = rec.valid_len() - dropped.valid_len();
    REQUIRE(removed >= 0);
    REQUIRE(removed <= max_drop_count(rec.valid_len(), cfg));
    REQUIRE(dropped.timestamps[0] == rec.timestamps[0]);
    for (std::size_t c = 0; c < rec.packets.cols; ++c)
      REQUIRE(dropped.packets(0, c) == rec.packets(0, c));
    // Every surviving timestamp appears in the original sequence.
    std::multiset<float> orig(rec.timestamps.begin(), rec.timestamps.end());
    for (float t : dropped.timestamps)
      REQUIRE(orig.count(t) > 0);
  }
}

TEST_CASE("packet_insert bounds, midpoint rule and flow cap") {
  AugConfig cfg;
  REQUIRE(max_insert_count(9, cfg) == 0);   // floor(0.85) = 0
  REQUIRE(max_insert_count(10, cfg) == 1);  // floor(1.0) = 1
  REQUIRE(max_insert_count(30, cfg) == 4);  // floor(4.0) = 4

  // Forced single insertion between known neighbours: inserted packet is
  // all zero and takes the midpoint timestamp.
  std::vector<float> ts(10);
  for (int i = 0; i < 10; ++i) ts[static_cast<std::size_t>(i)] = 0.2f * i;
  const FlowRecord rec = make_record(ts);
  bool saw_insert = false;
  for (int i = 0; i < 200 && !saw_insert; ++i) {
    Rng r = Rng::derive(10, static_cast<std::uint64_t>(i));
    const FlowRecord out = packet_insert(rec, cfg, 30, r);
    if (out.valid_len() == 11) {
      saw_insert = true;
      // Find the inserted row: the first index where timestamps diverge.
      std::size_t at = 0;
      while (at < 10 && out.timestamps[at] == rec.timestamps[at]) ++at;
      REQUIRE(at >= 1);
      for (std::size_t c = 0; c < out.packets.cols; ++c)
        REQUIRE(out.packets(at, c) == 0.0f);
      if (at < 10) {
        REQUIRE(out.timestamps[at] ==
                Catch::Approx((rec.timestamps[at - 1] +
                               rec.timestamps[at]) /
                              2.0f));
      } else {
        const float mean_gap = rec.timestamps.back() / 9.0f;
        REQUIRE(out.timestamps[at] ==
                Catch::Approx(rec.timestamps.back() + mean_gap));
      }
    }
  }
  REQUIRE(saw_insert);

  // Insertions never push the flow past the cap.
  AugConfig heavy = cfg;
  heavy.insert_coeff = 1.0f;
  heavy.insert_bias = 0.0f;
  const FlowRecord full = make_record(std::vector<float>(30, 0.0f));
  Rng r(11);
  REQUIRE(packet_insert(full, heavy, 30, r).valid_len() == 30);
}

TEST_CASE("noise_inject respects its budgets and the value range") {
  AugConfig cfg;
  // n=2 → floor(2/3)=0 packets modifiable → identity.
  const FlowRecord rec2 = make_record({0.0f, 1.0f});
  Rng rng(12);
  REQUIRE(noise_inject(rec2, cfg, rng).packets.a == rec2.packets.a);

  // d=448 → at most 4 bytes altered per chosen packet.
  FlowRecord wide = make_record(std::vector<float>(9, 0.0f), 448);
  int max_changed_bytes = 0;
  for (int i = 0; i < 500; ++i) {
    Rng r = Rng::derive(13, static_cast<std::uint64_t>(i));
    const FlowRecord out = noise_inject(wide, cfg, r);
    for (std::size_t p = 0; p < 9; ++p) {
      int changed = 0;
      for (std::size_t c = 0; c < 448; ++c)
        if (out.packets(p, c) != wide.packets(p, c)) ++changed;
      max_changed_bytes = std::max(max_changed_bytes, changed);
    }
  }
  REQUIRE(max_changed_bytes <= 4);
  REQUIRE(max_changed_bytes > 0);

  // All outputs stay in [0,1] over many seeded applications.
  Rng flow_rng(14);
  for (int i = 0; i < 10000; ++i) {
    const FlowRecord rec = random_flow(flow_rng, 12, 32);
    Rng r = Rng::derive(15, static_cast<std::uint64_t>(i));
    const FlowRecord out = noise_inject(rec, cfg, r);
    for (float v : out.packets.a) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("augment_pipeline identity config is a bit-exact identity") {
  const AugConfig id = AugConfig::identity();
  Rng flow_rng(16);
  for (int i = 0; i < 50; ++i) {
    const FlowRecord rec = random_flow(flow_rng);
    const FlowRecord out = augment_pipeline(rec, id, 30, 3, 7);
    REQUIRE(out.packets.a == rec.packets.a);
    REQUIRE(out.timestamps == rec.timestamps);
    REQUIRE(out.mask == rec.mask);
  }
}

TEST_CASE("augment_pipeline is deterministic per (seed, epoch, index)") {
  AugConfig cfg;
  cfg.seed = 2024;
  Rng flow_rng(17);
  const FlowRecord rec = random_flow(flow_rng);
  const FlowRecord a = augment_pipeline(rec, cfg, 30, 5, 11);
  const FlowRecord b = augment_pipeline(rec, cfg, 30, 5, 11);
  REQUIRE(a.packets.a == b.packets.a);
  REQUIRE(a.timestamps == b.timestamps);
  const FlowRecord c = augment_pipeline(rec, cfg, 30, 6, 11);
  const bool differs =
      c.timestamps != a.timestamps || c.packets.a != a.packets.a;
  REQUIRE(differs);
}

TEST_CASE("augment_pipeline preserves all flow-record invariants") {
  AugConfig cfg;
  cfg.seed = 31337;
  Rng flow_rng(18);
  for (int i = 0; i < 2000; ++i) {
    const FlowRecord rec = random_flow(flow_rng);
    const FlowRecord out = augment_pipeline(
        rec, cfg, 30, static_cast<std::uint64_t>(i % 7),
        static_cast<std::uint64_t>(i));
    check_invariants(out, 30);
    REQUIRE(out.valid_len() <= 30);
    REQUIRE(out.label == rec.label);
  }
}

TEST_CASE("pad_and_mask zero-pads to the cap") {
  const FlowRecord rec = make_record({0.0f, 0.1f, 0.3f, 0.6f});
  const FlowRecord padded = pad_and_mask(rec, 30);
  REQUIRE(padded.packets.rows == 30);
  REQUIRE(padded.timestamps.size() == 30);
  REQUIRE(padded.mask.size() == 30);
  REQUIRE(padded.valid_len() == 4);
  for (std::size_t i = 4; i < 30; ++i) {
    REQUIRE(padded.mask[i] == 0);
    REQUIRE(padded.timestamps[i] == 0.0f);
    for (std::size_t c = 0; c < padded.packets.cols; ++c)
      REQUIRE(padded.packets(i, c) == 0.0f);
  }

  const FlowRecord exact = make_record(std::vector<float>(30, 0.0f));
  const FlowRecord same = pad_and_mask(exact, 30);
  REQUIRE(same.valid_len() == 30);
  REQUIRE(same.packets.a == exact.packets.a);
}

TEST_CASE("oversample repeats every sample exactly factor times") {
  const auto idx = oversample_indices(60, 5);
  REQUIRE(idx.size() == 300);
  std::vector<int> counts(60, 0);
  for (auto i : idx) ++counts[i];
  for (int c : counts) REQUIRE(c == 5);

  const auto identity = oversample_indices(7, 1);
  REQUIRE(identity.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) REQUIRE(identity[i] == i);
}
