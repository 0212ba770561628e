#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cbm/config.hpp"
#include "cbm/corpus.hpp"
#include "cbm/metrics.hpp"
#include "cbm/model.hpp"
#include "cbm/scoring.hpp"

namespace cbm {

// Stage seeds derived from the master seed.
struct StageSeeds {
  std::uint64_t synth, theft, train, score, null_labels, baselines;
  static StageSeeds From(std::uint64_t seed);
};

struct Dataset {
  Corpus corpus;
  std::optional<CbmModel> truth;  // set for synthesized corpora
  bool synthesized = false;
};

// Ingests the configured records, or synthesizes a corpus when none is set.
Dataset LoadDataset(const RunConfig& config);

struct EvalReport {
  double auc = 0.0;
  double auc_log_score = 0.0;  // the same run ranked by s_l
  double null_auc = 0.0;       // s_r against shuffled labels
  Curves curves;
  ThresholdSelection threshold;
  ConfusionMatrix confusion;
  double tpr_at_fpr_1pct = 0.0;
  double tpr_at_fpr_01pct = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

EvalReport Evaluate(std::span<const ScoredBehavior> scored, const RunConfig& config, std::uint64_t null_seed);

struct TrainedModel {
  TrainResult result;
  UserPrior prior;
  std::size_t injected = 0;  // synthetic latent behaviors added to training
};

// Trains CBM on the training part of the split (plus latent behaviors when
// augmentation is on). Theft simulation never touches training behaviors, so
// one trained model serves every swap mode.
TrainedModel TrainCbm(const RunConfig& config, const Corpus& corpus, std::span<const std::size_t> train,
                      std::uint64_t train_seed);

struct DetectionRun {
  Corpus original;
  Corpus labeled;
  Split split;
  SwapMode swap_mode = SwapMode::kBoth;
  std::vector<std::pair<std::size_t, std::size_t>> theft_pairs;
  TrainedModel trained;
  std::vector<ScoredBehavior> scored;
  EvalReport report;
};

// Split, simulate theft (unless disabled), train, score and evaluate.
DetectionRun RunDetection(const RunConfig& config, const Corpus& corpus);

struct LatencyRow {
  int k = 0;
  std::size_t blocks = 0;
  std::size_t positive_blocks = 0;
  std::size_t excluded_users = 0;
  double auc = 0.0;                // NaN when a class is missing
  double tpr_at_fpr_1pct = 0.0;
  double tpr_at_fpr_01pct = 0.0;
};

enum class BlockMode {
  kCase,     // per test behavior, its k most recent behaviors; a swapped one takes the donor's k instead
  kHistory,  // per test behavior, that behavior and the user's k-1 preceding ones, as labeled
  kTest,     // per user, consecutive non-overlapping blocks of k test behaviors; leftovers dropped
};

BlockMode ParseBlockMode(std::string_view name);

struct LatencyBlock {
  std::vector<Behavior> behaviors;  // oldest first, all claimed by one user
  std::size_t key = 0;              // corpus index of the newest test behavior; seeds the reference draw
  bool positive = false;            // contains a swapped behavior
};

// Blocks grouped by user (ascending), in time order. Users that lose a test
// behavior for lack of a full block are counted in excluded_users.
std::vector<LatencyBlock> LatencyBlocks(const DetectionRun& run, int k, BlockMode mode,
                                        std::size_t* excluded_users = nullptr);

LatencyRow ScoreLatency(const RunConfig& config, const DetectionRun& run, int k);

struct RobustnessRow {
  SwapMode mode = SwapMode::kBoth;
  double auc = 0.0;
  double tpr_at_fpr_1pct = 0.0;
  std::size_t anomalies = 0;
};

// Scores the test set under every swap mode with the model of `run`.
std::vector<RobustnessRow> RunRobustness(const RunConfig& config, const Corpus& corpus, const DetectionRun& run);

struct GridCell {
  int communities = 0;
  int topics = 0;
  double auc = 0.0;
};

std::vector<GridCell> RunGrid(const RunConfig& config, const Corpus& corpus);

struct WindowRow {
  std::size_t window = 0;
  std::size_t train_size = 0;
  std::size_t chunk_begin = 0;
  std::size_t chunk_end = 0;
  std::size_t admitted = 0;  // chunk behaviors admitted into later training windows
  std::size_t anomalies = 0;
  double auc = 0.0;         // NaN when the chunk lacks a class
  double static_auc = 0.0;  // same chunk scored by the first window's model
};

struct WindowedResult {
  std::vector<WindowRow> rows;
  double pooled_auc = 0.0;
  double pooled_static_auc = 0.0;
};

// Chronological sliding windows. Window i trains from scratch on the
// behaviors in [i*step, i*step + size) that are trusted (the initial window,
// or later behaviors admitted because their S_r was below the admission
// threshold), then scores the following step-sized chunk.
WindowedResult RunWindowed(const RunConfig& config, const Corpus& corpus);

struct DetectorScores {
  std::string name;
  std::vector<double> scores;  // aligned with DetectionRun::scored
  double auc = 0.0;
};

struct BaselineResult {
  std::vector<DetectorScores> detectors;  // mkde, cfkde, lda, joint
  FusedResult fused;
};

BaselineResult RunBaselines(const RunConfig& config, const DetectionRun& run);

// Everything a run emits, held in memory so it can be written (or compared)
// byte for byte.
struct ExperimentOutput {
  std::string summary;                                      // one-screen text
  std::vector<std::pair<std::string, std::string>> files;  // name, contents (report.json last)
};

ExperimentOutput RunExperiment(const RunConfig& config);
void WriteOutput(const ExperimentOutput& output, const std::filesystem::path& dir);

std::string ScoresFile(const Corpus& corpus, std::span<const ScoredBehavior> scored);

}  // namespace cbm
