#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "eids/augment/splits.hpp"

using namespace eids;
using namespace eids::augment;

TEST_CASE("enumerate_splits counts and structure") {
  const auto plans = enumerate_splits(3, 6);
  REQUIRE(plans.size() == 729);  // 3^6
  // Lexicographic, unique held-out vectors covering the whole space.
  std::set<std::vector<int>> seen;
  for (const auto& p : plans) {
    REQUIRE(p.heldout.size() == 6);
    for (int h : p.heldout) {
      REQUIRE(h >= 0);
      REQUIRE(h < 3);
    }
    seen.insert(p.heldout);
  }
  REQUIRE(seen.size() == 729);

  REQUIRE(enumerate_splits(2, 1).size() == 2);
  REQUIRE_THROWS_AS(enumerate_splits(1, 6), InsufficientSamples);
  REQUIRE_THROWS_AS(enumerate_splits(10, 12), InvalidSpec);
}

TEST_CASE("per class, train and test indices partition the samples") {
  const auto plans = enumerate_splits(3, 4);
  for (const auto& p : plans) {
    for (int c = 0; c < 4; ++c) {
      const auto train = p.train_indices(c, 3);
      REQUIRE(train.size() == 2);
      std::set<int> all(train.begin(), train.end());
      all.insert(p.heldout[static_cast<std::size_t>(c)]);
      REQUIRE(all == std::set<int>{0, 1, 2});
    }
  }
}

TEST_CASE("select_diverse_splits picks distinct plans deterministically") {
  const auto plans = enumerate_splits(3, 6);
  const auto sel = select_diverse_splits(plans, 29, 42);
  REQUIRE(sel.size() == 29);
  std::set<std::uint32_t> ids;
  for (const auto& p : sel) ids.insert(p.split_id);
  REQUIRE(ids.size() == 29);

  const auto again = select_diverse_splits(plans, 29, 42);
  for (std::size_t i = 0; i < sel.size(); ++i)
    REQUIRE(sel[i].split_id == again[i].split_id);

  // Greedy max-min Hamming keeps early picks far apart.
  REQUIRE(hamming(sel[0].heldout, sel[1].heldout) == 6);

  // Requesting at least as many as exist returns everything.
  REQUIRE(select_diverse_splits(plans, 729, 1).size() == 729);
  REQUIRE(select_diverse_splits(plans, 100000, 1).size() == 729);
}
