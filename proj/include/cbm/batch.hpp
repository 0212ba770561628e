#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "cbm/config.hpp"
#include "cbm/corpus.hpp"
#include "cbm/model.hpp"

namespace cbm {

struct SynthOutput {
  CorpusFiles files;
  std::filesystem::path truth;  // ground-truth model file
  std::size_t behaviors = 0;
};

// Generates a corpus from the synth.* settings and writes it with the true
// model (truth.cbm) into dir.
SynthOutput Synthesize(const RunConfig& config, const std::filesystem::path& dir);

struct BatchScores {
  std::string text;  // tab-separated, one row per record
  std::size_t rows = 0;
  std::size_t errors = 0;
  double mean_log_score = 0.0;  // over rows without errors
};

// Scores a records file against a trained model, mapping ids by name. Rows
// whose user or venue the model does not know get an error entry instead of
// scores; words outside the model vocabulary are dropped. With latency k > 1,
// each row's S_r is the block score of that row and the same user's k-1
// preceding rows. The user prior is uniform (a model file carries no counts).
BatchScores ScoreRecords(const CbmModel& model, const RunConfig& config, const std::filesystem::path& records,
                         int latency = 1);

// Throws kMismatch naming both hashes unless the model's tables hash is expected.
void CheckTablesHash(const CbmModel& model, const std::string& expected);

std::string StatsText(const CorpusStats& stats);

}  // namespace cbm
