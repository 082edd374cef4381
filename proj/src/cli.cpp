#include "costforge/cli.hpp"

#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "costforge/config.hpp"
#include "costforge/dataset.hpp"
#include "costforge/error.hpp"
#include "costforge/eval.hpp"
#include "costforge/parallel.hpp"
#include "costforge/pipeline.hpp"
#include "costforge/records.hpp"
#include "costforge/reward_service.hpp"

namespace costforge::cli {

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

class SigintScope {
 public:
  SigintScope() {
    g_cancel.store(false);
    previous_ = std::signal(SIGINT, on_sigint);
  }
  ~SigintScope() { std::signal(SIGINT, previous_); }

 private:
  void (*previous_)(int);
};

using records::Json;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> backends;
  std::string prompts_dir;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--backend", opts.backends, "Backend as [TAG=]mock:SCRIPT or [TAG=]http:MODEL (repeatable)");
  cmd->add_option("--prompts", opts.prompts_dir, "Directory overriding the built-in prompt templates")
      ->check(CLI::ExistingDirectory);
}

config::AppConfig load_app_config(const CommonOptions& opts, bool need_backends) {
  config::AppConfig cfg = opts.config_path.empty() ? config::AppConfig{} : config::load_config(opts.config_path);
  for (const auto& flag : opts.backends) {
    auto [tag, spec] = config::parse_backend_flag(flag);
    cfg.backends[tag] = spec;
  }
  if (!opts.prompts_dir.empty()) cfg.prompts_dir = opts.prompts_dir;
  if (opts.workers > 0) cfg.pipeline.workers = opts.workers;
  if (need_backends) {
    if (cfg.backends.empty()) throw ConfigError("no backend configured; pass --backend or a config file");
    config::resolve_roles(cfg);
  }
  return cfg;
}

config::Runtime make_runtime(const config::AppConfig& cfg, std::shared_ptr<llm::Clock> clock) {
  try {
    return config::build_runtime(cfg, std::move(clock));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

llm::TemplateStore load_templates(const config::AppConfig& cfg) {
  return cfg.prompts_dir.empty() ? llm::TemplateStore::embedded() : llm::TemplateStore::from_directory(cfg.prompts_dir);
}

template <typename T, typename Decode>
std::vector<T> read_input(const std::string& path, Decode decode) {
  const records::JsonlContents contents = records::read_jsonl(path);
  return records::decode_lines<T>(path, contents, decode);
}

std::string failures_path(const std::string& out) { return out + ".failures"; }

// Writes <out>.failures, or removes a stale one when there is nothing to report.
void write_failures(const std::string& out, const std::vector<Json>& failures) {
  const std::string path = failures_path(out);
  if (failures.empty()) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    return;
  }
  records::write_jsonl(path, failures);
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << records::dump(j) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

Json failure_record(const std::string& id, const std::string& stage, const std::string& error) {
  return records::to_json(pipeline::SampleFailure{id, stage, error, {}});
}

// --- generate ------------------------------------------------------------------------

struct GenerateOptions {
  CommonOptions common;
  std::string in;
  std::string out;
  bool dry_run = false;
};

int cmd_generate(const GenerateOptions& opts) {
  const auto samples = read_input<QASample>(opts.in, records::qa_from_json);
  if (opts.dry_run) {
    const config::AppConfig cfg = load_app_config(opts.common, false);
    for (const auto& p : pipeline::dry_run(samples, load_templates(cfg)))
      std::cout << "=== " << p.sample_id << " / " << llm::template_name(p.template_id) << " ===\n" << p.prompt << "\n";
    std::cout << "backend calls: 0\n";
    return kExitOk;
  }
  if (opts.out.empty()) throw ConfigError("generate needs --out unless --dry-run is given");
  const config::AppConfig cfg = load_app_config(opts.common, true);
  config::Runtime rt = make_runtime(cfg, std::make_shared<llm::SteadyClock>());

  SigintScope sigint;
  const auto outcomes = pipeline::run_batch(samples, cfg.pipeline, rt.roles, &g_cancel);

  std::vector<Json> curated;
  std::vector<Json> failures;
  std::size_t kept = 0;
  std::size_t skipped = 0;
  for (const auto& outcome : outcomes) {
    if (!outcome) {
      ++skipped;
      continue;
    }
    if (const auto* c = std::get_if<pipeline::CuratedSample>(&*outcome)) {
      try {
        curated.push_back(records::to_json(*c));
        kept += c->kept ? 1 : 0;
      } catch (const Error& e) {
        failures.push_back(failure_record(c->qa.id, "record", e.what()));
      }
    } else {
      failures.push_back(records::to_json(std::get<pipeline::SampleFailure>(*outcome)));
    }
  }
  records::write_jsonl(opts.out, curated);
  write_failures(opts.out, failures);
  std::cout << "curated " << curated.size() << " of " << samples.size() << " samples (" << kept << " kept), "
            << failures.size() << " failed";
  if (skipped) std::cout << ", " << skipped << " not started (interrupted)";
  std::cout << "; backend calls: " << rt.gateway->calls_made() << "\n";
  if (!failures.empty()) std::cerr << "failures written to " << failures_path(opts.out) << "\n";
  return failures.empty() && skipped == 0 ? kExitOk : kExitPartialFailure;
}

// --- build-dataset -------------------------------------------------------------------

struct BuildOptions {
  std::string in;
  std::string out;
  std::string stats;
  std::optional<std::uint64_t> shuffle_seed;
};

int cmd_build_dataset(const BuildOptions& opts) {
  const auto curated = read_input<pipeline::CuratedSample>(opts.in, records::curated_from_json);
  std::vector<dataset::TrainingSample> samples;
  std::vector<Json> failures;
  for (const auto& c : curated) {
    try {
      samples.push_back(dataset::build_training_sample(c));
    } catch (const Error& e) {
      failures.push_back(failure_record(c.qa.id, "build_dataset", e.what()));
    }
  }
  if (opts.shuffle_seed) dataset::seeded_shuffle(samples, *opts.shuffle_seed);
  dataset::write_records(opts.out, samples);
  write_failures(opts.out, failures);
  const dataset::CorpusStats stats = dataset::corpus_stats(samples);
  if (!opts.stats.empty()) write_json_file(opts.stats, dataset::to_json(stats));
  std::cout << "training samples: " << stats.total << " (" << stats.kept << " kept for SFT)";
  for (const auto& [kind, n] : stats.by_kind) std::cout << ", " << sso::kind_name(kind) << "=" << n;
  std::cout << "\n";
  return failures.empty() ? kExitOk : kExitPartialFailure;
}

// --- score -------------------------------------------------------------------------

struct ScoreOptions {
  CommonOptions common;
  std::string in;
  std::string group;
  std::string out;
};

int cmd_score(const ScoreOptions& opts) {
  const bool grouped = !opts.group.empty();
  if (grouped == !opts.in.empty()) throw ConfigError("score needs exactly one of --in or --group");
  const std::string input = grouped ? opts.group : opts.in;
  const auto requests = read_input<records::RewardRequest>(input, records::reward_request_from_json);
  const config::AppConfig cfg = load_app_config(opts.common, true);
  config::Runtime rt = make_runtime(cfg, std::make_shared<llm::SteadyClock>());
  const llm::ModelHandle& judge = rt.roles.judge;

  std::vector<Json> lines;
  std::vector<Json> failures;
  if (!grouped) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      try {
        lines.push_back(records::to_json(reward::score_rollout(requests[i].input, cfg.reward, judge)));
      } catch (const Error& e) {
        failures.push_back(failure_record("rollout-" + std::to_string(i + 1), "score", e.what()));
      }
    }
  } else {
    // Groups in order of first appearance; rollouts without a group_id form one group.
    std::vector<std::string> order;
    std::map<std::string, std::vector<const records::RewardRequest*>> groups;
    for (const auto& r : requests) {
      const std::string id = r.group_id.value_or("");
      if (!groups.count(id)) order.push_back(id);
      groups[id].push_back(&r);
    }
    for (const auto& id : order) {
      try {
        Json breakdowns = Json::array();
        std::vector<double> totals;
        for (const auto* r : groups[id]) {
          const reward::RewardBreakdown b = reward::score_rollout(r->input, cfg.reward, judge);
          totals.push_back(b.total);
          breakdowns.push_back(records::to_json(b));
        }
        const std::vector<double> adv = reward::group_advantages(totals, cfg.reward.std_floor);
        lines.push_back(Json{{"group_id", id},
                             {"breakdowns", std::move(breakdowns)},
                             {"advantages", adv},
                             {"version", records::kFormatVersion}});
        std::cout << "group '" << id << "': " << totals.size() << " rollouts, totals";
        for (double t : totals) std::cout << ' ' << t;
        std::cout << ", advantages";
        for (double a : adv) std::cout << ' ' << a;
        std::cout << "\n";
      } catch (const Error& e) {
        failures.push_back(failure_record(id, "score_group", e.what()));
      }
    }
  }
  if (opts.out.empty()) {
    for (const auto& l : lines) std::cout << records::dump(l) << "\n";
    for (const auto& f : failures) std::cerr << records::dump(f) << "\n";
  } else {
    records::write_jsonl(opts.out, lines);
    write_failures(opts.out, failures);
    std::cout << "scored " << lines.size() << (grouped ? " groups" : " rollouts") << ", " << failures.size()
              << " failed\n";
  }
  return failures.empty() ? kExitOk : kExitPartialFailure;
}

// --- reward-serve ------------------------------------------------------------------

struct ServeOptions {
  CommonOptions common;
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string port_file;
};

int cmd_reward_serve(const ServeOptions& opts) {
  const config::AppConfig cfg = load_app_config(opts.common, true);
  config::Runtime rt = make_runtime(cfg, std::make_shared<llm::SteadyClock>());
  SigintScope sigint;
  auto handler = std::make_shared<const service::RewardHandler>(cfg.reward, rt.roles.judge);
  service::RewardServer server(handler);
  const int port = server.bind(opts.bind, opts.port);
  if (!opts.port_file.empty()) {
    std::ofstream pf(opts.port_file, std::ios::trunc);
    pf << port << "\n";
  }
  std::cout << "reward service listening on " << opts.bind << ":" << port << " (config hash "
            << handler->config_hash() << ")" << std::endl;
  server.start();
  while (!g_cancel.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::cout << "reward service stopped\n";
  return kExitOk;
}

// --- eval --------------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string in;
  std::string out;
  std::string records_out;
};

int cmd_eval(const EvalOptions& opts) {
  const auto curated = read_input<pipeline::CuratedSample>(opts.in, records::curated_from_json);
  const config::AppConfig cfg = load_app_config(opts.common, true);
  config::Runtime rt = make_runtime(cfg, std::make_shared<llm::SteadyClock>());

  SigintScope sigint;
  std::vector<std::optional<eval::EvalRecord>> results(curated.size());
  std::vector<std::optional<std::string>> errors(curated.size());
  parallel_for(curated.size(), cfg.pipeline.workers, [&](std::size_t i) {
    if (g_cancel.load()) return;
    try {
      results[i] = eval::evaluate_sample(curated[i].qa, curated[i].sso, rt.roles.reasoner, rt.roles.judge);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<eval::EvalRecord> done;
  std::vector<Json> record_lines;
  std::vector<Json> failures;
  for (std::size_t i = 0; i < curated.size(); ++i) {
    if (results[i]) {
      done.push_back(*results[i]);
      record_lines.push_back(records::to_json(*results[i]));
    } else {
      failures.push_back(failure_record(curated[i].qa.id, "eval", errors[i].value_or("not started (interrupted)")));
    }
  }
  const std::string failure_base = !opts.out.empty() ? opts.out : opts.records_out;
  if (!opts.records_out.empty()) records::write_jsonl(opts.records_out, record_lines);
  if (!failure_base.empty()) write_failures(failure_base, failures);
  for (const auto& f : failures) std::cerr << records::dump(f) << "\n";
  const eval::EvalReport report = eval::aggregate(done);
  if (!opts.out.empty()) write_json_file(opts.out, records::to_json(report));
  std::cout << eval::format_report_table(report);
  return failures.empty() ? kExitOk : kExitPartialFailure;
}

// --- latency -----------------------------------------------------------------------

struct LatencyOptions {
  CommonOptions common;
  std::string in;
  std::string out;
  bool fake_clock = false;
};

int cmd_latency(const LatencyOptions& opts) {
  const auto samples = read_input<QASample>(opts.in, records::qa_from_json);
  const config::AppConfig cfg = load_app_config(opts.common, true);
  std::shared_ptr<llm::Clock> clock;
  if (opts.fake_clock) {
    clock = std::make_shared<llm::FakeClock>();
  } else {
    clock = std::make_shared<llm::SteadyClock>();
  }
  config::Runtime rt = make_runtime(cfg, clock);

  SigintScope sigint;
  Json per_sample = Json::array();
  std::vector<double> timings;
  std::vector<Json> failures;
  for (const auto& qa : samples) {
    if (g_cancel.load()) break;
    std::optional<pipeline::SampleOutcome> outcome;
    const double seconds =
        eval::measure_latency(*clock, [&] { outcome = pipeline::run_sample(qa, cfg.pipeline, rt.roles); });
    const auto* failure = std::get_if<pipeline::SampleFailure>(&*outcome);
    per_sample.push_back(Json{{"id", qa.id}, {"seconds", seconds}, {"ok", failure == nullptr}});
    if (failure) {
      failures.push_back(records::to_json(*failure));
    } else {
      timings.push_back(seconds);
    }
    std::cout << std::left << std::setw(24) << qa.id << std::right << std::fixed << std::setprecision(3) << seconds
              << "s" << (failure ? "  (failed)" : "") << "\n";
  }
  const eval::LatencySummary summary = eval::summarize_latency(timings);
  std::cout << "mean latency over " << timings.size() << " samples: " << std::fixed << std::setprecision(3)
            << summary.mean << "s\n";
  if (!opts.out.empty()) {
    write_json_file(opts.out, Json{{"per_sample", std::move(per_sample)},
                                   {"mean_seconds", summary.mean},
                                   {"n", timings.size()},
                                   {"version", records::kFormatVersion}});
    write_failures(opts.out, failures);
  }
  return failures.empty() && timings.size() + failures.size() == samples.size() ? kExitOk : kExitPartialFailure;
}

}  // namespace

std::atomic<bool>& cancel_flag() { return g_cancel; }

int run_command(int argc, const char* const* argv) {
  CLI::App app{"costforge: structured-knowledge curation, reward scoring and evaluation"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Curate (trace, structured output) pairs from question records");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--in", gen.in, "Question records (.jsonl)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Curated records (.jsonl)");
  gen_cmd->add_option("--workers", gen.common.workers, "Worker threads")->check(CLI::PositiveNumber);
  gen_cmd->add_flag("--dry-run", gen.dry_run, "Print the opening prompts without calling any backend");

  BuildOptions build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Render curated records into training samples");
  build_cmd->add_option("--in", build.in, "Curated records (.jsonl)")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", build.out, "Training samples (.jsonl)")->required();
  build_cmd->add_option("--stats", build.stats, "Corpus statistics (.json)");
  build_cmd->add_option("--shuffle-seed", build.shuffle_seed, "Shuffle samples with this seed");

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score rollouts against reference targets");
  add_common(score_cmd, score.common);
  score_cmd->add_option("--in", score.in, "Reward requests (.jsonl), one breakdown per line")
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--group", score.group, "Reward requests (.jsonl) scored per group_id with advantages")
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--out", score.out, "Output (.jsonl); stdout when omitted");

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("reward-serve", "Serve the reward engine over HTTP");
  add_common(serve_cmd, serve.common);
  serve_cmd->add_option("--bind", serve.bind, "Address to bind")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port; 0 picks a free one")->capture_default_str()->check(
      CLI::Range(0, 65535));
  serve_cmd->add_option("--port-file", serve.port_file, "Write the bound port to this file");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Two-hop evaluation of curated structured outputs");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--in", ev.in, "Curated records (.jsonl)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Report (.json)");
  eval_cmd->add_option("--records", ev.records_out, "Per-sample evaluation records (.jsonl)");
  eval_cmd->add_option("--workers", ev.common.workers, "Worker threads")->check(CLI::PositiveNumber);

  LatencyOptions lat;
  auto* lat_cmd = app.add_subcommand("latency", "Time end-to-end generation per sample");
  add_common(lat_cmd, lat.common);
  lat_cmd->add_option("--in", lat.in, "Question records (.jsonl)")->required()->check(CLI::ExistingFile);
  lat_cmd->add_option("--out", lat.out, "Timings (.json)");
  lat_cmd->add_flag("--fake-clock", lat.fake_clock, "Measure scripted delays on a simulated clock");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*gen_cmd) return cmd_generate(gen);
    if (*build_cmd) return cmd_build_dataset(build);
    if (*score_cmd) return cmd_score(score);
    if (*serve_cmd) return cmd_reward_serve(serve);
    if (*eval_cmd) return cmd_eval(ev);
    if (*lat_cmd) return cmd_latency(lat);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartialFailure;
  }
  return kExitConfigError;
}

}  // namespace costforge::cli
