#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cbm/augment.hpp"
#include "cbm/baselines.hpp"
#include "cbm/corpus.hpp"
#include "cbm/model.hpp"

namespace cbm {

struct SynthConfig {
  int users = 200;
  int venues = 60;
  int words = 400;
  int communities = 3;
  int topics = 4;
  double alpha = 0.1;
  double beta = 0.05;
  double gamma = 0.1;
  double eta = 0.05;
  std::string behaviors_per_user = "fixed:20";
  std::string words_per_tip = "fixed:8";
  int friends_per_user = 3;
  double homophily = 0.8;
  double drift_after = 0.0;
};

struct RunConfig {
  std::string experiment = "main";  // main | grid | latency | robustness | windowed | baselines
  std::uint64_t seed = 42;

  // Inputs; an empty records path means "synthesize a corpus".
  std::string records;
  std::string ties;
  std::string venues;
  std::string stopwords;
  int min_token_length = 2;
  int min_word_frequency = 1;

  // Model.
  int communities = 30;
  int topics = 20;
  std::optional<double> alpha;  // unset: 50 / Z
  double beta = 0.01;
  std::optional<double> gamma;  // unset: 50 / C
  double eta = 0.01;
  int iterations = 1000;
  int burn_in = 500;
  int lag = 50;
  TopicConditional z_conditional = TopicConditional::kCollapsed;

  // Split and theft simulation.
  double train_fraction = 0.8;
  bool simulate = true;
  double swap_fraction = 0.05;
  SwapMode swap_mode = SwapMode::kBoth;

  // Scoring.
  int reference_count = 40;
  bool uniform_prior = false;
  double threshold_lo = 0.975;
  double threshold_hi = 1.0;
  double threshold_step = 0.001;

  // Augmentation.
  bool augment = false;
  LdaConfig augment_lda{10, 200, 0.1, 0.01, 20};
  TuckerConfig tucker;
  int augment_top_k = 20;
  int augment_words = 3;

  // Baselines.
  double kde_mix_alpha = 0.5;
  double kde_floor_km = 0.05;
  MfConfig mf;
  LdaConfig lda;
  int fused_grid = 50;

  // Experiment drivers.
  std::vector<int> grid_c{10, 20, 30};
  std::vector<int> grid_z{10, 20, 30};
  std::vector<int> latency_k{1, 2, 3, 4, 5};
  std::string latency_blocks = "case";  // case | history | test
  double window_size = 0.5;   // fraction of behaviors in each training window
  double window_step = 0.1;   // fraction of behaviors scored per window
  double window_admission = 0.99;
  bool window_admit_all = false;

  SynthConfig synth;

  Hyperparams Hyper() const;
  TrainSchedule Schedule() const;
  GeneratorConfig Generator() const;

  // Sets one key from its text form; throws kConfig for unknown keys or bad values.
  void Set(std::string_view key, std::string_view value);
  // Throws kConfig if any value is out of range.
  void Validate() const;
  // Every key with its value in text form, in a fixed order.
  std::vector<std::pair<std::string, std::string>> Items() const;
};

// "key = value" lines; blank lines and lines starting with '#' are ignored.
void ApplyConfigText(RunConfig& config, std::string_view text, const std::string& origin = "config");

// Reads a key=value file, or the "config" object of a report.json.
void ApplyConfigFile(RunConfig& config, const std::filesystem::path& path);

// Applies CBM_SEED from the environment when set.
void ApplySeedEnvironment(RunConfig& config);

std::string ConfigText(const RunConfig& config);

}  // namespace cbm
