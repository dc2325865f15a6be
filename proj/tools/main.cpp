#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "serval/graph.hpp"
#include "serval/verifier.hpp"
#include "serval/workload.hpp"

namespace {

using namespace serval;

int cmd_verify(const std::string& path, const VerifyOptions& opts,
               const std::string& report, const std::string& dump_graph,
               bool stats, bool solver_stats) {
  ObservedHistory h;
  try {
    h = load_history_file(path);
  } catch (const HistoryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(Status::InvalidHistory);
  }

  if (!dump_graph.empty()) {
    try {
      validate_history(h);
      if (detect_read_anomalies(h).empty()) {
        TxnOrder ord = TxnOrder::build(h, !opts.time_edges);
        KnownGraph g = build_known_graph(h, ord, opts.time_edges);
        std::ofstream out(dump_graph);
        if (!out) {
          std::cerr << "error: cannot write " << dump_graph << '\n';
          return exit_code(Status::InvalidHistory);
        }
        g.dump_dot(out);
      }
    } catch (const HistoryError&) {
      // The verdict below reports the problem.
    }
  }

  Verdict v = verify(h, opts);
  if (report == "machine") {
    write_machine_report(v, std::cout);
  } else {
    write_text_report(v, std::cout);
    if (stats) {
      std::cout << "item_constraints.total=" << v.stats.item_total << '\n'
                << "item_constraints.after_avoidance="
                << v.stats.item_after_avoidance << '\n'
                << "item_constraints.after_reduction="
                << v.stats.item_after_reduction << '\n'
                << "pred_constraints.total=" << v.stats.pred_total << '\n'
                << "pred_constraints.after_avoidance="
                << v.stats.pred_after_avoidance << '\n'
                << "pred_constraints.after_reduction="
                << v.stats.pred_after_reduction << '\n';
    }
    if (solver_stats) {
      std::cout << "decisions=" << v.stats.decisions << '\n'
                << "conflicts=" << v.stats.conflicts << '\n'
                << "learned=" << v.stats.learned << '\n'
                << "propagations=" << v.stats.propagations << '\n';
    }
  }
  return exit_code(v.status);
}

int cmd_generate(workload::GenParams params, const std::string& inject,
                 std::uint64_t inject_seed, const std::string& out_path) {
  ObservedHistory h = workload::generate_serializable(params);
  if (!inject.empty()) {
    auto kind = workload::anomaly_kind_from(inject);
    if (!kind) {
      std::cerr << "error: unknown anomaly '" << inject << "'\n";
      return 2;
    }
    h = workload::inject_anomaly(h, *kind, inject_seed);
  }
  if (out_path.empty() || out_path == "-") {
    serialize_history(h, std::cout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot write " << out_path << '\n';
      return 2;
    }
    serialize_history(h, out);
  }
  return 0;
}

int cmd_bench(const std::string& preset_name, const std::vector<std::uint64_t>& sizes,
              std::uint64_t seed) {
  std::cout << "size\tgen_ms\tverify_ms\tclosure_cells\tverdict\n";
  for (std::uint64_t size : sizes) {
    auto params = workload::preset(preset_name, size, seed);
    if (!params) {
      std::cerr << "error: unknown preset '" << preset_name << "'\n";
      return 2;
    }
    auto t0 = std::chrono::steady_clock::now();
    ObservedHistory h = workload::generate_serializable(*params);
    auto t1 = std::chrono::steady_clock::now();
    Verdict v = verify(h);
    double gen_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    std::cout << size << '\t' << gen_ms << '\t' << v.stats.wall_ms << '\t'
              << v.stats.closure_cells << '\t' << to_string(v.status) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"black-box serializability checker for transaction histories"};
  app.require_subcommand(1);

  // verify
  auto* verify_cmd =
      app.add_subcommand("verify", "decide whether a history is serializable");
  std::string in_path, report = "text", dump_graph;
  VerifyOptions vopts;
  bool no_time = false, no_pruning = false, stats = false, solver_stats = false;
  verify_cmd->add_option("history", in_path, "history file")->required();
  verify_cmd->add_flag("--no-time-edges", no_time,
                       "ignore client timestamps entirely");
  verify_cmd->add_flag("--no-pruning", no_pruning,
                       "skip the constraint-reduction fixpoint");
  verify_cmd->add_flag("--oracle", vopts.run_oracle,
                       "cross-check against the exhaustive oracle");
  verify_cmd->add_flag("--stats", stats, "print constraint counters");
  verify_cmd->add_flag("--solver-stats", solver_stats,
                       "print search counters");
  verify_cmd->add_option("--budget", vopts.conflict_budget,
                         "conflict budget; 0 means unlimited");
  verify_cmd->add_option("--report", report, "text or machine")
      ->check(CLI::IsMember({"text", "machine"}));
  verify_cmd->add_option("--dump-graph", dump_graph,
                         "write the known graph as DOT to this path");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "emit a synthetic history");
  std::string preset_name = "blindw-wr", inject, out_path;
  std::uint64_t txns = 1000, seed = 1;
  workload::GenParams gp;
  bool have_objects = false, have_sessions = false, have_overlap = false;
  std::uint64_t objects = 0;
  std::uint32_t sessions = 0;
  double overlap = 0;
  gen_cmd->add_option("--preset", preset_name, workload::preset_names());
  gen_cmd->add_option("--txns", txns, "transaction count");
  gen_cmd->add_option("--seed", seed, "generator seed");
  gen_cmd->add_option("--objects", objects, "row count")
      ->each([&](const std::string&) { have_objects = true; });
  gen_cmd->add_option("--sessions", sessions, "client count")
      ->each([&](const std::string&) { have_sessions = true; });
  gen_cmd->add_option("--overlap", overlap,
                      "mean fraction of concurrently open transactions")
      ->each([&](const std::string&) { have_overlap = true; });
  gen_cmd->add_option("--inject", inject,
                      "graft an anomaly: aborted-read, intermediate-read, "
                      "lost-update, write-skew, dirty-write-cycle, phantom");
  std::uint64_t inject_seed = 1;
  gen_cmd->add_option("--inject-seed", inject_seed, "seed for the gadget");
  gen_cmd->add_option("--out", out_path, "output path; - for stdout");

  // bench
  auto* bench_cmd =
      app.add_subcommand("bench", "generate and verify a size sweep");
  std::string bench_preset = "blindw-wr";
  std::vector<std::uint64_t> sizes{1000, 5000, 10000};
  std::uint64_t bench_seed = 1;
  bench_cmd->add_option("--preset", bench_preset, workload::preset_names());
  bench_cmd->add_option("--sizes", sizes, "transaction counts")->delimiter(',');
  bench_cmd->add_option("--seed", bench_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify_cmd->parsed()) {
      vopts.time_edges = !no_time;
      vopts.pruning = !no_pruning;
      return cmd_verify(in_path, vopts, report, dump_graph, stats,
                        solver_stats);
    }
    if (gen_cmd->parsed()) {
      auto params = workload::preset(preset_name, txns, seed);
      if (!params) {
        std::cerr << "error: unknown preset '" << preset_name << "'; choose "
                  << workload::preset_names() << '\n';
        return 2;
      }
      gp = *params;
      if (have_objects) gp.object_count = objects;
      if (have_sessions) gp.session_count = sessions;
      if (have_overlap) gp.overlap_factor = overlap;
      return cmd_generate(gp, inject, inject_seed, out_path);
    }
    if (bench_cmd->parsed()) return cmd_bench(bench_preset, sizes, bench_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
