#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "eids/evalkit/evalkit.hpp"
#include "eids/flowcap/flow.hpp"

namespace eids::evalkit {

using flowcap::FlowKey;
using flowcap::Packet;
using flowcap::PrepConfig;

struct StreamEvent {
  double ts = 0.0;  // capture time of the packet that triggered the decision
  FlowKey key;
  Decision decision;
};

struct StreamStats {
  std::size_t packets = 0;
  std::size_t skipped = 0;         // unkeyable frames
  std::size_t forward_passes = 0;
  double mean_forward_us = 0.0;
  double p95_forward_us = 0.0;
};

struct StreamResult {
  std::vector<StreamEvent> events;
  StreamStats stats;
};

// Replays a capture in timestamp order and mirrors the batch evaluation
// protocol exactly: per flow, the first max_flow_len raw packets are
// considered, filtered packets join the growing prefix, and a decision is
// emitted the moment the ensemble crosses tau — or when the flow can
// receive no more packets (cap reached or end of capture).
//
// Given the same capture, prep config and ensemble, the emitted decisions
// equal stream_classify over the prepared dataset, bit for bit.
inline StreamResult stream_replay(
    const Ensemble& ens, std::span<const Packet> capture,
    const PrepConfig& prep, float tau,
    const std::function<void(const StreamEvent&)>& on_decision = {}) {
  ens.validate();
  prep.validate();
  if (!(tau > 0.0f && tau <= 1.0f))
    throw InvalidSpec("confidence threshold must be in (0, 1]");

  struct FlowState {
    FlowRecord prefix;       // filtered, preprocessed packets so far
    std::size_t raw_count = 0;
    bool has_base_ts = false;
    double base_ts = 0.0;
    double prev_rel = 0.0;
    bool decided = false;
  };

  std::vector<const Packet*> ordered;
  ordered.reserve(capture.size());
  for (const Packet& p : capture) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Packet* a, const Packet* b) { return a->ts < b->ts; });

  StreamResult out;
  std::map<FlowKey, FlowState> flows;
  std::vector<double> forward_us;

  auto evaluate_prefix = [&](FlowState& st) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<float> conf = ensemble_predict(ens, st.prefix);
    const auto t1 = std::chrono::steady_clock::now();
    forward_us.push_back(
        std::chrono::duration<double, std::micro>(t1 - t0).count());
    return conf;
  };

  auto emit = [&](const FlowKey& key, FlowState& st, Decision d, double ts) {
    d.flow_id = to_string(key);
    StreamEvent ev{ts, key, std::move(d)};
    if (on_decision) on_decision(ev);
    out.events.push_back(std::move(ev));
    st.decided = true;
  };

  const auto cap_len = static_cast<std::size_t>(prep.max_flow_len);
  for (const Packet* pp : ordered) {
    ++out.stats.packets;
    const auto meta = flowcap::classify_packet(pp->bytes);
    if (!meta) {
      ++out.stats.skipped;
      continue;
    }
    const FlowKey key = flowcap::make_flow_key(*meta, prep.flow_variant);
    FlowState& st = flows[key];
    if (st.decided || st.raw_count >= cap_len) continue;
    ++st.raw_count;
    if (flowcap::filter_matches(*pp, prep.filter)) {
      const std::vector<float> row =
          flowcap::preprocess_packet(*pp, prep.packet_len);
      if (!st.has_base_ts) {
        st.has_base_ts = true;
        st.base_ts = pp->ts;
        st.prefix.key = key;
        st.prefix.packets =
            Mat<float>(0, static_cast<std::size_t>(prep.packet_len));
      }
      double rel = pp->ts - st.base_ts;
      if (rel < st.prev_rel) rel = st.prev_rel;  // sorted replay; clamp ties
      st.prev_rel = rel;
      st.prefix.packets.a.insert(st.prefix.packets.a.end(), row.begin(),
                                 row.end());
      ++st.prefix.packets.rows;
      st.prefix.timestamps.push_back(static_cast<float>(rel));
      st.prefix.mask.push_back(1);

      const std::vector<float> conf = evaluate_prefix(st);
      const auto top = static_cast<std::size_t>(
          std::max_element(conf.begin(), conf.end()) - conf.begin());
      Decision d;
      d.predicted = static_cast<int>(top);
      d.confidence = conf[top];
      d.k = static_cast<int>(st.prefix.packets.rows);
      if (conf[top] >= tau) {
        d.crossed = true;
        emit(key, st, std::move(d), pp->ts);
        continue;
      }
      if (st.raw_count == cap_len) {
        d.crossed = false;
        emit(key, st, std::move(d), pp->ts);
      }
    } else if (st.raw_count == cap_len && st.has_base_ts) {
      // The cap was reached by a non-matching packet: the prefix is final.
      const std::vector<float> conf = evaluate_prefix(st);
      const auto top = static_cast<std::size_t>(
          std::max_element(conf.begin(), conf.end()) - conf.begin());
      Decision d;
      d.predicted = static_cast<int>(top);
      d.confidence = conf[top];
      d.k = static_cast<int>(st.prefix.packets.rows);
      d.crossed = false;
      emit(key, st, std::move(d), pp->ts);
    }
  }

  // End of capture: decide whatever is still pending on its full prefix.
  for (auto& [key, st] : flows) {
    if (st.decided || !st.has_base_ts) continue;
    const std::vector<float> conf = evaluate_prefix(st);
    const auto top = static_cast<std::size_t>(
        std::max_element(conf.begin(), conf.end()) - conf.begin());
    Decision d;
    d.predicted = static_cast<int>(top);
    d.confidence = conf[top];
    d.k = static_cast<int>(st.prefix.packets.rows);
    d.crossed = false;
    emit(key, st, std::move(d),
         st.base_ts + static_cast<double>(st.prefix.timestamps.back()));
  }

  out.stats.forward_passes = forward_us.size();
  if (!forward_us.empty()) {
    double sum = 0.0;
    for (double v : forward_us) sum += v;
    out.stats.mean_forward_us = sum / static_cast<double>(forward_us.size());
    std::sort(forward_us.begin(), forward_us.end());
    out.stats.p95_forward_us =
        forward_us[std::min(forward_us.size() - 1,
                            static_cast<std::size_t>(
                                0.95 * static_cast<double>(forward_us.size())))];
  }
  return out;
}

}  // namespace eids::evalkit
