// eids — early intrusion detection toolkit CLI.
//
// Subcommands: prepare, synth, train, eval, stream, bench.
// Exit codes: 0 ok, 1 usage, 2 input error, 3 numeric/runtime error,
//             4 empty result.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eids/config.hpp"
#include "eids/evalkit/bench.hpp"
#include "eids/evalkit/streamer.hpp"
#include "eids/pipeline.hpp"
#include "eids/synthgen/synthgen.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitEmpty = 4;

struct EmptyResult : eids::Error {
  using Error::Error;
};

eids::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return eids::RunConfig{};
  return eids::load_run_config(path);
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw eids::InputError("cannot open for writing: " + path);
  f << j.dump(2) << '\n';
}

int run_prepare(const std::vector<std::string>& pcaps,
                const std::string& labels_path, const std::string& config_path,
                const std::string& out_path) {
  eids::RunConfig rc = load_config_or_default(config_path);
  const auto labels = eids::pipeline::LabelsManifest::load(labels_path);
  eids::flowcap::LabeledDataset ds =
      eids::pipeline::prepare_dataset(pcaps, labels, rc.prep);
  eids::flowcap::write_dataset(out_path, ds);

  std::cout << "prepared " << ds.records.size() << " flows from "
            << pcaps.size() << " capture(s)\n";
  const auto counts = ds.per_class_counts();
  for (std::size_t i = 0; i < counts.size(); ++i)
    std::cout << "  " << ds.class_names[i] << ": " << counts[i] << "\n";
  std::cout << "skipped: " << ds.skipped_unparseable
            << " unparseable, " << ds.skipped_overflow << " over flow cap, "
            << ds.discarded_empty << " empty after filter, " << ds.unlabeled
            << " unlabeled\n";
  if (ds.records.empty())
    throw EmptyResult("no flows survived preparation (check the filter)");
  return kExitOk;
}

int run_synth(const std::string& preset, const std::string& spec_path,
              std::optional<std::uint64_t> seed, const std::string& out_path,
              const std::string& pcap_path, const std::string& labels_out) {
  eids::synthgen::SynthSpec spec;
  if (!spec_path.empty()) {
    std::ifstream f(spec_path);
    if (!f) throw eids::InputError("cannot open synth spec: " + spec_path);
    spec = eids::synthgen::spec_from_json(json::parse(f));
  } else if (preset == "six-class") {
    spec = eids::synthgen::six_class_preset(seed.value_or(1));
  } else if (preset == "timing-pair") {
    spec = eids::synthgen::timing_pair_preset(seed.value_or(1));
  } else {
    throw eids::InvalidSpec("unknown preset: " + preset);
  }
  if (seed) spec.seed = *seed;

  const eids::synthgen::SynthOutput out = eids::synthgen::generate(spec);
  eids::flowcap::write_dataset(out_path, out.dataset);
  std::cout << "generated " << out.dataset.records.size() << " flows ("
            << out.frames.size() << " packets) across "
            << spec.classes.size() << " classes\n";
  if (!pcap_path.empty()) {
    eids::synthgen::write_pcap(out, pcap_path);
    std::cout << "wrote capture: " << pcap_path << "\n";
  }
  if (!labels_out.empty()) {
    write_json_file(labels_out, eids::synthgen::labels_manifest(out));
    std::cout << "wrote labels manifest: " << labels_out << "\n";
  }
  return kExitOk;
}

int run_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_dir, std::optional<int> splits,
              std::optional<int> retain, std::optional<int> epochs,
              std::optional<std::string> pe, std::optional<std::uint64_t> seed,
              std::optional<float> tau) {
  eids::RunConfig rc = load_config_or_default(config_path);
  if (splits) rc.train.splits = *splits;
  if (retain) rc.train.retain = *retain;
  if (epochs) rc.train.epochs = *epochs;
  if (pe) rc.model.pe = eids::tinyformer::pe_kind_from_string(*pe);
  if (seed) rc.train.seed = *seed;
  if (tau) rc.eval.tau = *tau;

  eids::flowcap::LabeledDataset ds = eids::flowcap::read_dataset(dataset_path);
  rc.prep = ds.prep;
  rc.model.packet_len = ds.prep.packet_len;
  rc.model.max_flow_len = ds.prep.max_flow_len;
  if (static_cast<int>(ds.class_names.size()) != rc.model.num_classes)
    rc.model.num_classes = static_cast<int>(ds.class_names.size());

  const eids::pipeline::EnsembleTrainResult trained =
      eids::pipeline::train_ensemble(ds, rc);
  const std::string manifest_path =
      eids::pipeline::save_ensemble(trained, ds, rc, out_dir);

  std::cout << "trained " << trained.members.size() << " models, retained "
            << trained.retained.size() << "\n";
  std::printf("  %-8s %-10s %-12s %s\n", "split", "val-acc", "mean-earli",
              "retained");
  for (const auto& m : trained.members)
    std::printf("  %-8u %-10.4f %-12.2f %s\n", m.split.split_id,
                m.val_accuracy, m.val_mean_earliness,
                m.retained ? "yes" : "");
  std::cout << "ensemble manifest: " << manifest_path << "\n";
  return kExitOk;
}

int run_eval(const std::string& manifest_path, const std::string& dataset_path,
             std::optional<float> tau, bool from_manifest_splits,
             const std::string& report_path, const std::string& decisions_path,
             const std::string& config_path) {
  eids::RunConfig rc = load_config_or_default(config_path);
  const auto loaded =
      eids::pipeline::load_ensemble(manifest_path, rc.eval.aggregation);
  eids::flowcap::LabeledDataset ds = eids::flowcap::read_dataset(dataset_path);
  if (ds.records.empty()) throw EmptyResult("evaluation dataset is empty");

  const float tau_eff = tau.value_or(loaded.manifest.tau);
  std::vector<eids::flowcap::FlowRecord> test =
      from_manifest_splits
          ? eids::pipeline::heldout_union_from_manifest(ds, loaded.manifest)
          : ds.records;
  const eids::evalkit::EvalReport rep = eids::evalkit::evaluate(
      loaded.ensemble, test, tau_eff, rc.eval.o_list, rc.eval.benign_class);

  eids::evalkit::render_report(std::cout, rep, ds.class_names);
  if (!report_path.empty())
    write_json_file(report_path,
                    eids::evalkit::report_to_json(rep, ds.class_names));
  if (!decisions_path.empty()) {
    std::ofstream f(decisions_path);
    if (!f) throw eids::InputError("cannot open for writing: " + decisions_path);
    for (std::size_t i = 0; i < rep.decisions.size(); ++i) {
      const auto& d = rep.decisions[i];
      f << json{{"flow", d.flow_id},
                {"label", rep.labels[i]},
                {"predicted", d.predicted},
                {"class",
                 ds.class_names[static_cast<std::size_t>(d.predicted)]},
                {"confidence", d.confidence},
                {"k", d.k},
                {"crossed", d.crossed}}
               .dump()
        << '\n';
    }
  }
  return kExitOk;
}

int run_stream(const std::string& manifest_path, const std::string& pcap_path,
               std::optional<float> tau, const std::string& log_path,
               const std::string& config_path) {
  eids::RunConfig rc = load_config_or_default(config_path);
  const auto loaded =
      eids::pipeline::load_ensemble(manifest_path, rc.eval.aggregation);
  rc.prep.packet_len = loaded.manifest.model.packet_len;
  rc.prep.max_flow_len = loaded.manifest.model.max_flow_len;
  const float tau_eff = tau.value_or(loaded.manifest.tau);

  const std::vector<eids::flowcap::Packet> capture =
      eids::flowcap::parse_pcap_file(pcap_path);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw eids::InputError("cannot open for writing: " + log_path);
  }
  auto on_decision = [&](const eids::evalkit::StreamEvent& ev) {
    const json line{{"ts", ev.ts},
                    {"flow", ev.decision.flow_id},
                    {"predicted", ev.decision.predicted},
                    {"class",
                     loaded.manifest.classes[static_cast<std::size_t>(
                         ev.decision.predicted)]},
                    {"confidence", ev.decision.confidence},
                    {"k", ev.decision.k},
                    {"crossed", ev.decision.crossed}};
    std::cout << line.dump() << "\n";
    if (log) log << line.dump() << '\n';
  };
  const eids::evalkit::StreamResult res = eids::evalkit::stream_replay(
      loaded.ensemble, capture, rc.prep, tau_eff, on_decision);

  std::cout << "# packets=" << res.stats.packets
            << " skipped=" << res.stats.skipped
            << " decisions=" << res.events.size()
            << " forward_passes=" << res.stats.forward_passes
            << " mean_forward_us=" << res.stats.mean_forward_us
            << " p95_forward_us=" << res.stats.p95_forward_us << "\n";
  return kExitOk;
}

int run_bench(const std::string& manifest_path, int runs,
              const std::string& report_path) {
  const auto loaded = eids::pipeline::load_ensemble(manifest_path);
  const eids::evalkit::BenchReport rep =
      eids::evalkit::run_bench(loaded.ensemble, runs);
  json j{{"runs", rep.runs},
         {"median_us", rep.median_us},
         {"p95_us", rep.p95_us},
         {"mean_us", rep.mean_us},
         {"min_us", rep.min_us},
         {"max_us", rep.max_us},
         {"weight_bytes", rep.weight_bytes},
         {"activation_bytes", rep.activation_bytes},
         {"input_bytes", rep.input_bytes},
         {"analytic_total_bytes", rep.analytic_total_bytes},
         {"vm_hwm_kb", rep.vm_hwm_kb}};
  std::cout << "latency over " << rep.runs << " runs (ensemble of "
            << loaded.ensemble.members.size() << "):\n";
  std::printf("  median %.1f us, p95 %.1f us, mean %.1f us\n", rep.median_us,
              rep.p95_us, rep.mean_us);
  std::printf(
      "memory: weights %zu B + activations %zu B + input %zu B = %zu B "
      "analytic",
      rep.weight_bytes, rep.activation_bytes, rep.input_bytes,
      rep.analytic_total_bytes);
  if (rep.vm_hwm_kb > 0)
    std::printf(" (process VmHWM %ld kB)", rep.vm_hwm_kb);
  std::printf("\n");
  if (!report_path.empty()) write_json_file(report_path, j);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"early intrusion detection toolkit"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand(
      "prepare", "convert labeled captures into a flow dataset");
  std::vector<std::string> pcaps;
  std::string labels_path, config_path, out_path;
  prepare->add_option("--pcap", pcaps, "capture file(s)")->required();
  prepare->add_option("--labels", labels_path, "labels manifest (JSON)")
      ->required();
  prepare->add_option("--config", config_path, "run config (JSON)");
  prepare->add_option("--out", out_path, "output dataset path")->required();

  // synth
  auto* synth = app.add_subcommand(
      "synth", "generate a deterministic synthetic dataset");
  std::string preset = "six-class", spec_path, synth_out, synth_pcap,
              synth_labels;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--preset", preset,
                    "built-in spec: six-class | timing-pair");
  synth->add_option("--spec", spec_path, "synth spec file (JSON)");
  synth->add_option("--seed", synth_seed, "override the spec seed");
  synth->add_option("--out", synth_out, "output dataset path")->required();
  synth->add_option("--pcap", synth_pcap, "also write the capture here");
  synth->add_option("--labels-out", synth_labels,
                    "also write a labels manifest here");

  // train
  auto* train = app.add_subcommand(
      "train", "train an ensemble over diverse dataset splits");
  std::string train_dataset, train_config, train_outdir;
  std::optional<int> train_splits, train_retain, train_epochs;
  std::optional<std::string> train_pe;
  std::optional<std::uint64_t> train_seed;
  std::optional<float> train_tau;
  train->add_option("--dataset", train_dataset, "dataset path")->required();
  train->add_option("--config", train_config, "run config (JSON)");
  train->add_option("--outdir", train_outdir, "output directory")->required();
  train->add_option("--splits", train_splits, "diverse splits to train");
  train->add_option("--retain", train_retain, "models kept in the ensemble");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--pe", train_pe,
                    "positional encoding: none|sin|fourier|rope|dyn_sin|"
                    "dyn_fourier|dyn_rope");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--tau", train_tau, "confidence threshold");

  // eval
  auto* eval = app.add_subcommand(
      "eval", "streaming evaluation of an ensemble on a dataset");
  std::string eval_manifest, eval_dataset, eval_report, eval_decisions,
      eval_config;
  std::optional<float> eval_tau;
  bool from_manifest_splits = false;
  eval->add_option("--manifest", eval_manifest, "ensemble manifest")
      ->required();
  eval->add_option("--dataset", eval_dataset, "dataset path")->required();
  eval->add_option("--tau", eval_tau, "confidence threshold");
  eval->add_flag("--from-manifest-splits", from_manifest_splits,
                 "evaluate on the union of the members' held-out flows");
  eval->add_option("--report", eval_report, "write the JSON report here");
  eval->add_option("--decisions", eval_decisions,
                   "write the per-flow decision log here");
  eval->add_option("--config", eval_config, "run config (JSON)");

  // stream
  auto* stream = app.add_subcommand(
      "stream", "replay a capture and emit decisions as flows cross tau");
  std::string stream_manifest, stream_pcap, stream_log, stream_config;
  std::optional<float> stream_tau;
  stream->add_option("--manifest", stream_manifest, "ensemble manifest")
      ->required();
  stream->add_option("--pcap", stream_pcap, "capture to replay")->required();
  stream->add_option("--tau", stream_tau, "confidence threshold");
  stream->add_option("--log", stream_log, "decision log path");
  stream->add_option("--config", stream_config, "run config (JSON)");

  // bench
  auto* bench = app.add_subcommand(
      "bench", "measure single-flow inference latency and memory");
  std::string bench_manifest, bench_report;
  int bench_runs = 1000;
  bench->add_option("--manifest", bench_manifest, "ensemble manifest")
      ->required();
  bench->add_option("--runs", bench_runs, "timed runs");
  bench->add_option("--report", bench_report, "write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed())
      return run_prepare(pcaps, labels_path, config_path, out_path);
    if (synth->parsed())
      return run_synth(preset, spec_path, synth_seed, synth_out, synth_pcap,
                       synth_labels);
    if (train->parsed())
      return run_train(train_dataset, train_config, train_outdir,
                       train_splits, train_retain, train_epochs, train_pe,
                       train_seed, train_tau);
    if (eval->parsed())
      return run_eval(eval_manifest, eval_dataset, eval_tau,
                      from_manifest_splits, eval_report, eval_decisions,
                      eval_config);
    if (stream->parsed())
      return run_stream(stream_manifest, stream_pcap, stream_tau, stream_log,
                        stream_config);
    if (bench->parsed())
      return run_bench(bench_manifest, bench_runs, bench_report);
  } catch (const EmptyResult& e) {
    std::cerr << "warning: " << e.what() << "\n";
    return kExitEmpty;
  } catch (const eids::NonFiniteActivation& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const eids::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}
