// Command-line front end: headless experiments, analysis, dataset ingestion,
// log replay and the live service.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "confslate/analysis.hpp"
#include "confslate/error.hpp"
#include "confslate/experiment.hpp"
#include "confslate/server.hpp"
#include "confslate/service.hpp"
#include "confslate/session.hpp"

namespace fs = std::filesystem;
using namespace confslate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::EmptyInput:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

int simulate(const fs::path& config_path, const std::optional<fs::path>& out_override) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, fmt::format("cannot read {}", config_path.string()));
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ValidationError, fmt::format("{}: {}", config_path.string(), e.what()));
  }
  auto config = experiment::experiment_from_json(j, config_path.parent_path());
  if (out_override) config.output_dir = *out_override;
  const auto out = experiment::run_experiment(config);
  fmt::print("{} sessions, {} scored trials -> {}\n", config.n_sessions, out.records.size(),
             config.output_dir.string());
  return kExitOk;
}

int analyze(const fs::path& dir, const std::optional<fs::path>& out_dir, bool no_exclusions) {
  // A run_experiment output directory is accepted as well as a bare records directory.
  const fs::path records = fs::is_directory(dir / "records") ? dir / "records" : dir;
  const fs::path out = out_dir.value_or(dir / "summary");
  analysis::AnalyzeOptions options;
  options.apply_exclusions = !no_exclusions;
  for (const auto& f : analysis::analyze(records, out, options)) {
    fmt::print("{}\n", f.string());
  }
  return kExitOk;
}

int ingest(const fs::path& csv, const std::optional<fs::path>& out_dir) {
  const fs::path out = out_dir.value_or(csv.parent_path() / "tables");
  for (const auto& f : experiment::ingest(csv, out)) {
    fmt::print("{}\n", f.string());
  }
  return kExitOk;
}

int replay(const fs::path& log_path, const std::optional<fs::path>& csv_out) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, fmt::format("cannot read {}", log_path.string()));
  }
  const auto log = session::EventLog::read_jsonl(in);
  const auto records = session::replay(log);
  if (csv_out) {
    std::ofstream out(*csv_out, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", csv_out->string()));
    session::write_records_csv(out, records);
  }
  fmt::print("replay ok: {} records, hash {}\n", records.size(), session::hex64(session::records_hash(records)));
  return kExitOk;
}

service::Server* g_server = nullptr;

int serve(const std::string& addr, const std::optional<fs::path>& log_dir, int threads) {
  const auto [host, port] = service::parse_address(addr);
  service::ServiceOptions options;
  options.log_dir = log_dir;
  service::SessionManager manager(options);
  service::Server server(manager, host, port, threads);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  fmt::print("listening on {}:{}\n", host, server.port());
  std::fflush(stdout);
  server.run();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confslate: confidence-based human-AI joint inference for teleoperation"};
  app.require_subcommand(1);

  fs::path config_path;
  std::optional<fs::path> out_dir;
  auto* sim_cmd = app.add_subcommand("simulate", "run synthetic sessions end to end");
  sim_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  sim_cmd->add_option("--out", out_dir, "override output_dir");

  fs::path analyze_dir;
  bool no_exclusions = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "write summary tables from trial-record CSVs");
  analyze_cmd->add_option("dir", analyze_dir, "records directory or experiment output")->required();
  analyze_cmd->add_option("--out", out_dir, "output directory (default <dir>/summary)");
  analyze_cmd->add_flag("--no-exclusions", no_exclusions, "keep sessions failing the exclusion rules");

  fs::path csv_path;
  auto* ingest_cmd = app.add_subcommand("ingest", "build decision-support tables from a dataset CSV");
  ingest_cmd->add_option("csv", csv_path, "participant_id,level,correct,confidence")->required();
  ingest_cmd->add_option("--out", out_dir, "output directory (default <csv dir>/tables)");

  fs::path log_path;
  std::optional<fs::path> records_out;
  auto* replay_cmd = app.add_subcommand("replay", "verify an event log and rebuild its records");
  replay_cmd->add_option("log", log_path, "session event log (JSONL)")->required();
  replay_cmd->add_option("--records", records_out, "write the rebuilt records CSV here");

  std::string addr = "127.0.0.1:8080";
  std::optional<fs::path> log_dir;
  int threads = 1;
  auto* serve_cmd = app.add_subcommand("serve", "run the live-session service");
  serve_cmd->add_option("--addr", addr, "host:port")->capture_default_str();
  serve_cmd->add_option("--log-dir", log_dir, "append session event logs here");
  serve_cmd->add_option("--threads", threads, "I/O threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*sim_cmd) return simulate(config_path, out_dir);
    if (*analyze_cmd) return analyze(analyze_dir, out_dir, no_exclusions);
    if (*ingest_cmd) return ingest(csv_path, out_dir);
    if (*replay_cmd) return replay(log_path, records_out);
    if (*serve_cmd) return serve(addr, log_dir, threads);
  } catch (const Error& e) {
    fmt::print(stderr, "error [{}]: {}\n", to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error [IoError]: {}\n", e.what());
    return kExitIo;
  }
  return kExitValidation;
}
