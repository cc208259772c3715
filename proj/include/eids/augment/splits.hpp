#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "eids/core/error.hpp"
#include "eids/core/rng.hpp"

namespace eids::augment {

// One train/test assignment: exactly one held-out sample per class, the
// rest train. split_id is the mixed-radix rank of the held-out vector.
struct SplitPlan {
  std::uint32_t split_id = 0;
  std::vector<int> heldout;  // heldout[c] = test sample index for class c

  std::vector<int> train_indices(int cls, int samples_per_class) const {
    std::vector<int> out;
    for (int i = 0; i < samples_per_class; ++i)
      if (i != heldout[static_cast<std::size_t>(cls)]) out.push_back(i);
    return out;
  }
};

// Every leave-one-out-per-class split: samples_per_class^classes plans in
// lexicographic order of the held-out vector.
inline std::vector<SplitPlan> enumerate_splits(int samples_per_class,
                                               int classes) {
  if (samples_per_class < 2)
    throw InsufficientSamples(
        "need at least 2 samples per class to hold one out");
  if (classes < 1) throw InvalidSpec("need at least one class");
  double total_d = 1;
  for (int c = 0; c < classes; ++c) total_d *= samples_per_class;
  if (total_d > (1 << 22))
    throw InvalidSpec("split space too large to enumerate");
  const auto total = static_cast<std::uint32_t>(total_d);

  std::vector<SplitPlan> plans;
  plans.reserve(total);
  std::vector<int> held(static_cast<std::size_t>(classes), 0);
  for (std::uint32_t id = 0; id < total; ++id) {
    plans.push_back(SplitPlan{id, held});
    for (int c = classes - 1; c >= 0; --c) {
      if (++held[static_cast<std::size_t>(c)] < samples_per_class) break;
      held[static_cast<std::size_t>(c)] = 0;
    }
  }
  return plans;
}

inline int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// Greedy diversity selection: seed the first pick, then repeatedly take
// the plan with the largest minimum Hamming distance to everything chosen
// so far (ties break toward the lower split_id, so the result is
// deterministic for a given seed).
inline std::vector<SplitPlan> select_diverse_splits(
    const std::vector<SplitPlan>& plans, int count, std::uint64_t seed) {
  if (count <= 0) throw InvalidSpec("split selection count must be > 0");
  if (static_cast<std::size_t>(count) >= plans.size()) return plans;
  Rng rng = Rng::derive(seed, stream_tag("split-select"));
  std::vector<bool> chosen(plans.size(), false);
  std::vector<SplitPlan> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t first =
      static_cast<std::size_t>(rng.uniform_int(plans.size() - 1));
  chosen[first] = true;
  out.push_back(plans[first]);
  std::vector<int> min_dist(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i)
    min_dist[i] = hamming(plans[i].heldout, plans[first].heldout);
  while (out.size() < static_cast<std::size_t>(count)) {
    std::size_t best = plans.size();
    for (std::size_t i = 0; i < plans.size(); ++i) {
      if (chosen[i]) continue;
      if (best == plans.size() || min_dist[i] > min_dist[best]) best = i;
    }
    chosen[best] = true;
    out.push_back(plans[best]);
    for (std::size_t i = 0; i < plans.size(); ++i)
      min_dist[i] =
          std::min(min_dist[i], hamming(plans[i].heldout, plans[best].heldout));
  }
  return out;
}

}  // namespace eids::augment
