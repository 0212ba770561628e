#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbm/cbm.h"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  cbm_status status;
  std::string message;
};

void Check(cbm_status status) {
  if (status != CBM_OK) throw Failure{status, cbm_last_error()};
}

struct ConfigDeleter {
  void operator()(cbm_config* c) const { cbm_config_free(c); }
};
struct ModelDeleter {
  void operator()(cbm_model* m) const { cbm_model_free(m); }
};
struct CorpusDeleter {
  void operator()(cbm_corpus* c) const { cbm_corpus_free(c); }
};
using ConfigPtr = std::unique_ptr<cbm_config, ConfigDeleter>;

std::string Take(char* s) {
  std::string out = s ? s : "";
  cbm_string_free(s);
  return out;
}

// Options shared by every subcommand; applied as defaults < file < CBM_SEED < flags.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> value, from named flags

  void Attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value config file, or a report.json to re-run");
    cmd->add_option("--set", sets, "override one config key (key=value); repeatable");
  }

  void Flag(CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(name, [this, key](const std::string& v) { flags[key] = v; }, help);
  }

  ConfigPtr Build() const {
    cbm_config* raw = nullptr;
    Check(cbm_config_new(&raw));
    ConfigPtr config(raw);
    if (!config_file.empty()) Check(cbm_config_load(config.get(), config_file.c_str()));
    Check(cbm_config_apply_env(config.get()));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Failure{CBM_ERR_CONFIG, "--set expects key=value, got '" + s + "'"};
      Check(cbm_config_set(config.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
    }
    for (const auto& [key, value] : flags) Check(cbm_config_set(config.get(), key.c_str(), value.c_str()));
    Check(cbm_config_validate(config.get()));
    return config;
  }
};

void AddInputFlags(CommonOptions& opts, CLI::App* cmd) {
  opts.Flag(cmd, "--records", "records", "records file (omit to synthesize)");
  opts.Flag(cmd, "--ties", "ties", "social ties file");
  opts.Flag(cmd, "--venues", "venues", "venue coordinates file");
  opts.Flag(cmd, "--stopwords", "stopwords", "stopword list");
  opts.Flag(cmd, "--seed", "seed", "master seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite behavioral model: identity theft detection from check-ins and tips"};
  app.set_version_flag("--version", std::string(cbm_version()));
  app.require_subcommand(1);

  CommonOptions synth_opts, run_opts, score_opts, stats_opts;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and its true model");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth_opts.Attach(synth);
  synth_opts.Flag(synth, "--seed", "seed", "master seed");
  synth_opts.Flag(synth, "--users", "synth.users", "number of users");
  synth_opts.Flag(synth, "--venues", "synth.venues", "number of venues");
  synth_opts.Flag(synth, "--words", "synth.words", "vocabulary size");
  synth_opts.Flag(synth, "--communities", "synth.C", "number of communities");
  synth_opts.Flag(synth, "--topics", "synth.Z", "number of topics");
  synth_opts.Flag(synth, "--behaviors", "synth.behaviors_per_user", "behaviors per user, e.g. fixed:20");

  auto* run = app.add_subcommand("run", "run an experiment and write its report directory");
  std::string run_out;
  run->add_option("--out", run_out, "report directory")->required();
  run_opts.Attach(run);
  AddInputFlags(run_opts, run);
  run_opts.Flag(run, "--experiment", "experiment", "main | grid | latency | robustness | windowed | baselines");
  run_opts.Flag(run, "--c", "grid.C", "community counts for the grid, e.g. 10,20,30");
  run_opts.Flag(run, "--z", "grid.Z", "topic counts for the grid, e.g. 10,20,30");
  run_opts.Flag(run, "--communities", "C", "number of communities");
  run_opts.Flag(run, "--topics", "Z", "number of topics");
  run_opts.Flag(run, "--latency", "latency.k", "latency values, e.g. 1,2,3,4,5");
  run_opts.Flag(run, "--swap-mode", "swap_mode", "both | venue | ugc");
  run_opts.Flag(run, "--augment", "augment", "true to add latent behaviors before training");

  auto* score = app.add_subcommand("score", "score a records file with a trained model");
  std::string model_path, records_path, score_out, expect_hash;
  int latency = 1;
  score->add_option("--model", model_path, "model file")->required();
  score->add_option("--records", records_path, "records file")->required();
  score->add_option("--out", score_out, "scores file")->required();
  score->add_option("--latency", latency, "score each row with the user's k most recent rows")
      ->check(CLI::PositiveNumber);
  score->add_option("--expect-hash", expect_hash, "fail unless the model's id-table hash matches");
  score_opts.Attach(score);
  score_opts.Flag(score, "--seed", "seed", "master seed");

  auto* stats = app.add_subcommand("stats", "print corpus statistics");
  stats_opts.Attach(stats);
  AddInputFlags(stats_opts, stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (synth->parsed()) {
      auto config = synth_opts.Build();
      size_t behaviors = 0;
      Check(cbm_synth(config.get(), synth_out.c_str(), &behaviors));
      std::printf("wrote %zu behaviors to %s\n", behaviors, synth_out.c_str());
    } else if (run->parsed()) {
      auto config = run_opts.Build();
      char* summary = nullptr;
      Check(cbm_run(config.get(), run_out.c_str(), &summary));
      std::fputs(Take(summary).c_str(), stdout);
      std::printf("report written to %s\n", run_out.c_str());
    } else if (score->parsed()) {
      auto config = score_opts.Build();
      cbm_model* raw = nullptr;
      Check(cbm_model_load(model_path.c_str(), &raw));
      std::unique_ptr<cbm_model, ModelDeleter> model(raw);
      size_t rows = 0, errors = 0;
      Check(cbm_score(model.get(), config.get(), records_path.c_str(), score_out.c_str(), latency,
                      expect_hash.empty() ? nullptr : expect_hash.c_str(), &rows, &errors));
      std::printf("scored %zu rows (%zu with errors) into %s\n", rows, errors, score_out.c_str());
    } else if (stats->parsed()) {
      auto config = stats_opts.Build();
      cbm_corpus* raw = nullptr;
      Check(cbm_corpus_load(config.get(), &raw));
      std::unique_ptr<cbm_corpus, CorpusDeleter> corpus(raw);
      char* text = nullptr;
      Check(cbm_corpus_stats(corpus.get(), &text));
      std::fputs(Take(text).c_str(), stdout);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "cbm: %s\n", f.message.c_str());
    return f.status == CBM_ERR_CONFIG ? kExitConfig : kExitRuntime;
  }
  return 0;
}
