#include "cbm/batch.hpp"

#include <cmath>
#include <sstream>

#include "cbm/error.hpp"
#include "cbm/experiment.hpp"
#include "cbm/random.hpp"
#include "cbm/scoring.hpp"
#include "cbm/text.hpp"

namespace cbm {

SynthOutput Synthesize(const RunConfig& config, const std::filesystem::path& dir) {
  config.Validate();
  const auto generated = GenerateCorpus(config.Generator(), StageSeeds::From(config.seed).synth);
  SynthOutput out;
  out.files = WriteCorpus(generated.corpus, dir);
  out.truth = dir / "truth.cbm";
  SaveModel(generated.truth, out.truth);
  out.behaviors = generated.corpus.behaviors.size();
  return out;
}

BatchScores ScoreRecords(const CbmModel& model, const RunConfig& config, const std::filesystem::path& records,
                         int latency) {
  Require(latency >= 1, "latency must be at least 1");
  IngestOptions options;
  options.tokenizer.min_token_length = config.min_token_length;
  if (!config.stopwords.empty()) options.tokenizer.stopwords = LoadStopwords(config.stopwords);
  const Corpus input = Ingest(records, {}, std::nullopt, options);

  const std::size_t n = input.behaviors.size();
  std::vector<Behavior> mapped(n);
  std::vector<std::string> error(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = input.behaviors[i];
    auto& m = mapped[i];
    m.timestamp = b.timestamp;
    m.label = b.label;
    const auto user = model.users.Find(input.users.Name(b.user));
    const auto venue = model.venues.Find(input.venues.Name(b.venue));
    if (!user) error[i] = "unknown user";
    else if (!venue) error[i] = "unknown venue";
    if (user) m.user = *user;
    if (venue) m.venue = *venue;
    for (WordId w : b.words) {
      if (auto id = model.vocabulary.Find(input.vocabulary.Name(w))) m.words.push_back(*id);
    }
  }

  const auto prior = UserPrior::Uniform(model.num_users());
  const auto seed = StageSeeds::From(config.seed).score;
  std::vector<std::vector<std::size_t>> history(static_cast<std::size_t>(model.num_users()));

  BatchScores out;
  out.text = "row\tuser\tvenue\ttimestamp\ts_l\ts_r\terror\n";
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = input.behaviors[i];
    std::string s_l = "nan", s_r = "nan";
    std::string err = error[i];
    if (err.empty()) {
      auto& past = history[static_cast<std::size_t>(mapped[i].user)];
      past.push_back(i);
      const double l = LogarithmicScore(model, mapped[i]);
      s_l = text::FormatDouble(l);
      total += l;
      const auto k = static_cast<std::size_t>(latency);
      if (past.size() < k) {
        err = "fewer than " + std::to_string(latency) + " behaviors";
      } else {
        std::vector<Behavior> block;
        for (std::size_t j = past.size() - k; j < past.size(); ++j) block.push_back(mapped[past[j]]);
        s_r = text::FormatDouble(
            BlockRelativeScore(model, block, prior, config.reference_count, DeriveSeed(seed, i)));
      }
    }
    if (!err.empty()) ++out.errors;
    out.text += std::to_string(i) + '\t' + input.users.Name(b.user) + '\t' + input.venues.Name(b.venue) + '\t' +
                std::to_string(b.timestamp) + '\t' + s_l + '\t' + s_r + '\t' + err + '\n';
  }
  out.rows = n;
  std::size_t scored = 0;
  for (const auto& e : error) scored += e.empty() ? 1 : 0;
  out.mean_log_score = scored ? total / static_cast<double>(scored) : std::nan("");
  return out;
}

void CheckTablesHash(const CbmModel& model, const std::string& expected) {
  const auto actual = HashHex(model.tables_hash());
  if (actual != expected) {
    Fail(ErrorKind::kMismatch, "model id tables hash " + actual + " does not match expected hash " + expected);
  }
}

std::string StatsText(const CorpusStats& s) {
  std::ostringstream out;
  out << "users          " << s.users << "\n";
  out << "venues         " << s.venues << "\n";
  out << "behaviors      " << s.behaviors << "\n";
  out << "vocabulary     " << s.vocabulary << "\n";
  out << "word tokens    " << s.word_tokens << "\n";
  out << "empty bags     " << s.empty_behaviors << "\n";
  out << "friend pairs   " << s.friend_pairs << "\n";
  out << "anomalous      " << s.anomalous << "\n";
  out << "records per user\n";
  for (const auto& [bucket, count] : s.record_histogram) out << "  " << bucket << "\t" << count << "\n";
  return out.str();
}

}  // namespace cbm
