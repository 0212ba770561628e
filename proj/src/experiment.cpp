#include "cbm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cbm/augment.hpp"
#include "cbm/baselines.hpp"
#include "cbm/error.hpp"
#include "cbm/random.hpp"
#include "cbm/text.hpp"

namespace cbm {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> Positives(std::span<const ScoredBehavior> scored) {
  std::vector<int> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.label == Label::kAnomalous ? 1 : 0);
  return out;
}

bool BothClasses(std::span<const int> positive) {
  const auto pos = std::count(positive.begin(), positive.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(positive.size());
}

double AucOrNaN(std::span<const double> scores, std::span<const int> positive) {
  return BothClasses(positive) ? ComputeAuc(scores, positive) : kNaN;
}

double TprOrNaN(std::span<const double> scores, std::span<const int> positive, double max_fpr) {
  if (!BothClasses(positive)) return kNaN;
  return TprAtFpr(ComputeCurves(scores, positive).roc, max_fpr);
}

std::string Num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return text::FormatDouble(v);
}

Json JsonNumber(double v) {
  if (!std::isfinite(v)) return Json(nullptr);
  return Json(v);
}

UserPrior MakePrior(const RunConfig& config, int users, std::span<const Behavior> train) {
  return config.uniform_prior ? UserPrior::Uniform(users) : UserPrior::Empirical(users, train);
}

std::uint64_t ScoreSeed(const RunConfig& config) { return StageSeeds::From(config.seed).score; }

std::string FormatStage(const std::string& stage, const std::exception& e) {
  return stage + ": " + e.what();
}

// Runs fn, prefixing any cbm::Error with the stage name.
template <typename F>
auto Stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), FormatStage(name, e));
  }
}

}  // namespace

StageSeeds StageSeeds::From(std::uint64_t seed) {
  return StageSeeds{DeriveSeed(seed, "synth"), DeriveSeed(seed, "theft"),     DeriveSeed(seed, "train"),
                    DeriveSeed(seed, "score"), DeriveSeed(seed, "null"), DeriveSeed(seed, "baselines")};
}

Dataset LoadDataset(const RunConfig& config) {
  Dataset data;
  if (config.records.empty()) {
    auto generated = GenerateCorpus(config.Generator(), StageSeeds::From(config.seed).synth);
    data.corpus = std::move(generated.corpus);
    data.truth = std::move(generated.truth);
    data.synthesized = true;
    return data;
  }
  IngestOptions options;
  options.tokenizer.min_token_length = config.min_token_length;
  options.tokenizer.min_word_frequency = config.min_word_frequency;
  if (!config.stopwords.empty()) options.tokenizer.stopwords = LoadStopwords(config.stopwords);
  std::optional<std::filesystem::path> venues;
  if (!config.venues.empty()) venues = config.venues;
  data.corpus = Ingest(config.records, config.ties, venues, options);
  return data;
}

EvalReport Evaluate(std::span<const ScoredBehavior> scored, const RunConfig& config, std::uint64_t null_seed) {
  EvalReport report;
  const auto positive = Positives(scored);
  std::vector<double> s_r, s_l;
  std::vector<Label> labels;
  for (const auto& s : scored) {
    s_r.push_back(s.s_r);
    s_l.push_back(s.s_l);
    labels.push_back(s.label);
  }
  report.positives = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
  report.negatives = positive.size() - report.positives;
  report.threshold = SelectThreshold(s_r, labels, config.threshold_lo, config.threshold_hi, config.threshold_step);
  report.confusion = Confusion(s_r, positive, report.threshold.threshold);
  if (!BothClasses(positive)) {
    report.auc = report.auc_log_score = report.null_auc = kNaN;
    report.tpr_at_fpr_1pct = report.tpr_at_fpr_01pct = kNaN;
    return report;
  }
  report.auc = ComputeAuc(s_r, positive);
  report.auc_log_score = ComputeAuc(s_l, positive);
  auto shuffled = positive;
  Rng rng(null_seed);
  rng.Shuffle(shuffled);
  report.null_auc = ComputeAuc(s_r, shuffled);
  report.curves = ComputeCurves(s_r, positive);
  report.tpr_at_fpr_1pct = TprAtFpr(report.curves.roc, 0.01);
  report.tpr_at_fpr_01pct = TprAtFpr(report.curves.roc, 0.001);
  return report;
}

TrainedModel TrainCbm(const RunConfig& config, const Corpus& corpus, std::span<const std::size_t> train,
                      std::uint64_t train_seed) {
  TrainedModel out;
  const auto real = Gather(corpus, train);
  std::vector<Behavior> docs = real;
  if (config.augment) {
    const auto topics = Stage("augment", [&] {
      return AssignTopics(corpus, train, config.augment_lda, DeriveSeed(train_seed, "augment.lda"));
    });
    const auto tensor = BuildTensor(corpus, train, topics.topic, config.augment_lda.topics);
    const auto factors = Stage("augment", [&] {
      return TuckerDecompose(tensor.Dense(), corpus.friend_pairs(), config.tucker,
                             DeriveSeed(train_seed, "augment.tucker"));
    });
    std::int64_t last = 0;
    for (const auto& b : real) last = std::max(last, b.timestamp);
    auto injected = InjectLatentBehaviors(corpus, tensor, factors, topics.phi, config.augment_top_k,
                                          config.augment_words, last);
    out.injected = injected.size();
    docs.insert(docs.end(), injected.begin(), injected.end());
  }
  out.result = Stage("train", [&] {
    return Train(docs, corpus.num_users(), corpus.num_venues(), corpus.num_words(), config.Hyper(),
                 config.Schedule(), train_seed);
  });
  out.result.model.users = corpus.users;
  out.result.model.venues = corpus.venues;
  out.result.model.vocabulary = corpus.vocabulary;
  out.prior = MakePrior(config, corpus.num_users(), real);
  return out;
}

DetectionRun RunDetection(const RunConfig& config, const Corpus& corpus) {
  const auto seeds = StageSeeds::From(config.seed);
  DetectionRun run;
  run.original = corpus;
  run.swap_mode = config.swap_mode;
  run.split = Stage("split", [&] { return ChronologicalSplit(corpus, config.train_fraction); });
  run.labeled = config.simulate ? Stage("theft", [&] {
    return SimulateTheft(corpus, run.split, config.swap_fraction, config.swap_mode, seeds.theft,
                         &run.theft_pairs);
  })
                                : corpus;
  run.trained = TrainCbm(config, run.labeled, run.split.train, seeds.train);
  run.scored = Stage("score", [&] {
    return ScoreBehaviors(run.trained.result.model, run.labeled, run.split.test, run.trained.prior,
                          config.reference_count, seeds.score);
  });
  run.report = Stage("evaluate", [&] { return Evaluate(run.scored, config, seeds.null_labels); });
  return run;
}

BlockMode ParseBlockMode(std::string_view name) {
  if (name == "case") return BlockMode::kCase;
  if (name == "history") return BlockMode::kHistory;
  if (name == "test") return BlockMode::kTest;
  Fail(ErrorKind::kConfig, "unknown latency block mode '" + std::string(name) + "'");
}

std::vector<LatencyBlock> LatencyBlocks(const DetectionRun& run, int k, BlockMode mode,
                                        std::size_t* excluded_users) {
  Require(k >= 1, "latency k must be at least 1");
  const auto& labeled = run.labeled;
  const auto users = static_cast<std::size_t>(labeled.num_users());
  const auto width = static_cast<std::size_t>(k);
  if (mode == BlockMode::kCase && run.theft_pairs.empty()) mode = BlockMode::kHistory;

  std::vector<std::vector<std::size_t>> test_of(users), timeline(users);
  for (std::size_t i : run.split.test) test_of[static_cast<std::size_t>(labeled.behaviors[i].user)].push_back(i);
  for (std::size_t i = 0; i < labeled.behaviors.size(); ++i) {
    timeline[static_cast<std::size_t>(labeled.behaviors[i].user)].push_back(i);
  }
  std::vector<std::size_t> partner(labeled.behaviors.size(), SIZE_MAX);
  for (auto [a, b] : run.theft_pairs) {
    partner[a] = b;
    partner[b] = a;
  }
  // The k most recent indices of the owner of t, ending at t; empty if too few.
  auto recent = [&](std::size_t t) {
    const auto& line = timeline[static_cast<std::size_t>(labeled.behaviors[t].user)];
    const auto pos = static_cast<std::size_t>(std::lower_bound(line.begin(), line.end(), t) - line.begin());
    if (pos + 1 < width) return std::vector<std::size_t>{};
    return std::vector<std::size_t>(line.begin() + static_cast<std::ptrdiff_t>(pos + 1 - width),
                                    line.begin() + static_cast<std::ptrdiff_t>(pos + 1));
  };
  auto from = [](const Corpus& corpus, const std::vector<std::size_t>& indices) {
    LatencyBlock block;
    for (std::size_t i : indices) {
      block.behaviors.push_back(corpus.behaviors[i]);
      if (corpus.behaviors[i].label == Label::kAnomalous) block.positive = true;
    }
    block.key = indices.back();
    return block;
  };

  std::vector<LatencyBlock> blocks;
  std::size_t excluded = 0;
  for (std::size_t u = 0; u < users; ++u) {
    auto& tests = test_of[u];
    std::sort(tests.begin(), tests.end());
    bool dropped = false;
    if (mode == BlockMode::kTest) {
      std::size_t start = 0;
      for (; start + width <= tests.size(); start += width) {
        blocks.push_back(from(labeled, std::vector<std::size_t>(tests.begin() + static_cast<std::ptrdiff_t>(start),
                                                                tests.begin() +
                                                                    static_cast<std::ptrdiff_t>(start + width))));
      }
      dropped = start < tests.size();
    } else {
      for (std::size_t t : tests) {
        const auto own = recent(t);
        if (own.empty()) {
          dropped = true;
          continue;
        }
        if (mode == BlockMode::kHistory || partner[t] == SIZE_MAX) {
          blocks.push_back(from(mode == BlockMode::kHistory ? labeled : run.original, own));
          continue;
        }
        // The thief's k most recent behaviors, claimed under the victim's identity.
        const auto donor = recent(partner[t]);
        if (donor.empty()) {
          dropped = true;
          continue;
        }
        LatencyBlock block;
        block.key = t;
        block.positive = true;
        for (std::size_t j = 0; j < width; ++j) {
          Behavior b = run.original.behaviors[own[j]];
          const auto& d = run.original.behaviors[donor[j]];
          if (run.swap_mode != SwapMode::kUgcOnly) b.venue = d.venue;
          if (run.swap_mode != SwapMode::kVenueOnly) b.words = d.words;
          block.behaviors.push_back(std::move(b));
        }
        blocks.push_back(std::move(block));
      }
    }
    if (dropped) ++excluded;
  }
  if (excluded_users) *excluded_users = excluded;
  return blocks;
}

LatencyRow ScoreLatency(const RunConfig& config, const DetectionRun& run, int k) {
  LatencyRow row;
  row.k = k;
  const auto blocks = LatencyBlocks(run, k, ParseBlockMode(config.latency_blocks), &row.excluded_users);
  const auto score_seed = ScoreSeed(config);
  std::vector<double> scores;
  std::vector<int> positive;
  for (const auto& block : blocks) {
    // Keyed by the newest test behavior, so k = 1 reproduces the main scoring.
    scores.push_back(BlockRelativeScore(run.trained.result.model, block.behaviors, run.trained.prior,
                                        config.reference_count, DeriveSeed(score_seed, block.key)));
    positive.push_back(block.positive ? 1 : 0);
  }
  row.blocks = blocks.size();
  row.positive_blocks = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
  row.auc = AucOrNaN(scores, positive);
  row.tpr_at_fpr_1pct = TprOrNaN(scores, positive, 0.01);
  row.tpr_at_fpr_01pct = TprOrNaN(scores, positive, 0.001);
  return row;
}

std::vector<RobustnessRow> RunRobustness(const RunConfig& config, const Corpus& corpus, const DetectionRun& run) {
  Require(config.simulate, "the robustness study needs theft simulation");
  const auto seeds = StageSeeds::From(config.seed);
  std::vector<RobustnessRow> rows;
  for (SwapMode mode : {SwapMode::kBoth, SwapMode::kVenueOnly, SwapMode::kUgcOnly}) {
    const auto labeled = SimulateTheft(corpus, run.split, config.swap_fraction, mode, seeds.theft);
    const auto scored = ScoreBehaviors(run.trained.result.model, labeled, run.split.test, run.trained.prior,
                                       config.reference_count, seeds.score);
    const auto positive = Positives(scored);
    std::vector<double> s_r;
    for (const auto& s : scored) s_r.push_back(s.s_r);
    RobustnessRow row;
    row.mode = mode;
    row.auc = AucOrNaN(s_r, positive);
    row.tpr_at_fpr_1pct = TprOrNaN(s_r, positive, 0.01);
    row.anomalies = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
    rows.push_back(row);
  }
  return rows;
}

std::vector<GridCell> RunGrid(const RunConfig& config, const Corpus& corpus) {
  std::vector<std::future<GridCell>> cells;
  for (int c : config.grid_c) {
    for (int z : config.grid_z) {
      cells.push_back(std::async(std::launch::async, [&config, &corpus, c, z] {
        RunConfig cell = config;
        cell.communities = c;
        cell.topics = z;
        return GridCell{c, z, RunDetection(cell, corpus).report.auc};
      }));
    }
  }
  std::vector<GridCell> out;
  for (auto& f : cells) out.push_back(f.get());
  return out;
}

WindowedResult RunWindowed(const RunConfig& config, const Corpus& corpus) {
  const auto seeds = StageSeeds::From(config.seed);
  const std::size_t n = corpus.behaviors.size();
  const auto size = static_cast<std::size_t>(std::ceil(config.window_size * static_cast<double>(n)));
  const auto step = static_cast<std::size_t>(std::ceil(config.window_step * static_cast<double>(n)));
  if (size == 0 || step == 0 || size >= n) {
    Fail(ErrorKind::kInvalidArgument, "windowed driver: corpus of " + std::to_string(n) +
                                          " behaviors is too short for window " + std::to_string(size));
  }

  Split theft_split;
  for (std::size_t i = 0; i < n; ++i) (i < size ? theft_split.train : theft_split.test).push_back(i);
  const Corpus labeled = config.simulate ? Stage("theft", [&] {
    return SimulateTheft(corpus, theft_split, config.swap_fraction, config.swap_mode, seeds.theft);
  })
                                         : corpus;

  std::vector<bool> trusted(n, false);
  for (std::size_t i = 0; i < size; ++i) trusted[i] = true;

  WindowedResult result;
  std::optional<TrainedModel> first;
  std::vector<double> pooled, pooled_static;
  std::vector<int> pooled_positive;
  for (std::size_t w = 0;; ++w) {
    const std::size_t begin = w * step;
    const std::size_t chunk_begin = begin + size;
    if (chunk_begin >= n) break;
    const std::size_t chunk_end = std::min(n, chunk_begin + step);

    std::vector<std::size_t> train;
    for (std::size_t i = begin; i < chunk_begin; ++i) {
      if (trusted[i]) train.push_back(i);
    }
    if (train.empty()) Fail(ErrorKind::kRuntime, "windowed driver: window " + std::to_string(w) + " is empty");
    const auto seed = w == 0 ? seeds.train : DeriveSeed(seeds.train, w);
    auto trained = TrainCbm(config, labeled, train, seed);

    std::vector<std::size_t> chunk;
    for (std::size_t i = chunk_begin; i < chunk_end; ++i) chunk.push_back(i);
    const auto scored = ScoreBehaviors(trained.result.model, labeled, chunk, trained.prior, config.reference_count,
                                       seeds.score);
    if (!first) first = trained;
    const auto baseline = ScoreBehaviors(first->result.model, labeled, chunk, first->prior, config.reference_count,
                                         seeds.score);

    WindowRow row;
    row.window = w;
    row.train_size = train.size();
    row.chunk_begin = chunk_begin;
    row.chunk_end = chunk_end;
    std::vector<double> s, s_static;
    const auto positive = Positives(scored);
    for (std::size_t j = 0; j < scored.size(); ++j) {
      s.push_back(scored[j].s_r);
      s_static.push_back(baseline[j].s_r);
      const bool admit = config.window_admit_all || scored[j].s_r < config.window_admission;
      trusted[scored[j].index] = admit;
      if (admit) ++row.admitted;
    }
    row.anomalies = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
    row.auc = AucOrNaN(s, positive);
    row.static_auc = AucOrNaN(s_static, positive);
    pooled.insert(pooled.end(), s.begin(), s.end());
    pooled_static.insert(pooled_static.end(), s_static.begin(), s_static.end());
    pooled_positive.insert(pooled_positive.end(), positive.begin(), positive.end());
    result.rows.push_back(row);
  }
  result.pooled_auc = AucOrNaN(pooled, pooled_positive);
  result.pooled_static_auc = AucOrNaN(pooled_static, pooled_positive);
  return result;
}

BaselineResult RunBaselines(const RunConfig& config, const DetectionRun& run) {
  const auto& corpus = run.labeled;
  if (!corpus.has_coordinates()) {
    Fail(ErrorKind::kInvalidArgument, "baselines need venue coordinates (set venues)");
  }
  const auto seed = StageSeeds::From(config.seed).baselines;
  const auto& train = run.split.train;
  const auto kde = BuildKde(corpus, train, config.kde_mix_alpha, config.kde_floor_km);
  const auto mf = Stage("mf", [&] { return MfTrain(corpus, train, config.mf, DeriveSeed(seed, "mf")); });
  const auto lda = Stage("lda", [&] { return LdaTrain(corpus, train, config.lda, DeriveSeed(seed, "lda")); });

  BaselineResult out;
  DetectorScores mkde{"mkde", {}, 0.0}, cfkde{"cfkde", {}, 0.0}, topic{"lda", {}, 0.0}, joint{"joint", {}, 0.0};
  std::vector<bool> located;
  for (const auto& s : run.scored) {
    const auto& b = corpus.behaviors[s.index];
    const auto& xy = corpus.venue_xy[static_cast<std::size_t>(b.venue)];
    located.push_back(xy.has_value());
    mkde.scores.push_back(xy ? MkdeSurprise(kde, b.user, *xy) : 0.0);
    cfkde.scores.push_back(xy ? CfkdeSurprise(kde, mf, b.user, *xy) : 0.0);
    const auto theta = LdaFoldIn(lda, b.words, config.lda.fold_in_passes, DeriveSeed(seed, s.index));
    topic.scores.push_back(JsDivergence(lda.theta_his.row(static_cast<std::size_t>(b.user)), theta));
    joint.scores.push_back(s.s_r);
  }
  // Behaviors at venues without coordinates carry no spatial evidence; rank them lowest.
  for (auto* d : {&mkde, &cfkde}) {
    double low = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d->scores.size(); ++i) {
      if (located[i] && std::isfinite(d->scores[i])) low = std::min(low, d->scores[i]);
    }
    if (!std::isfinite(low)) low = 0.0;
    for (std::size_t i = 0; i < d->scores.size(); ++i) {
      if (!located[i]) d->scores[i] = low;
    }
  }
  const auto positive = Positives(run.scored);
  for (auto* d : {&mkde, &cfkde, &topic, &joint}) d->auc = AucOrNaN(d->scores, positive);
  if (BothClasses(positive)) out.fused = FusedEvaluate(cfkde.scores, topic.scores, positive, config.fused_grid);
  else out.fused.auc = kNaN;
  out.detectors = {std::move(mkde), std::move(cfkde), std::move(topic), std::move(joint)};
  return out;
}

std::string ScoresFile(const Corpus& corpus, std::span<const ScoredBehavior> scored) {
  std::string out = "index\tuser\ts_l\ts_r\tlabel\n";
  for (const auto& s : scored) {
    out += std::to_string(s.index) + '\t' + corpus.users.Name(s.user) + '\t' + Num(s.s_l) + '\t' + Num(s.s_r) +
           '\t' + (s.label == Label::kAnomalous ? "1" : "0") + '\n';
  }
  return out;
}

namespace {

std::string CurveCsv(const std::vector<std::pair<double, double>>& points) {
  std::string out = "x,y\n";
  for (const auto& [x, y] : points) out += Num(x) + "," + Num(y) + "\n";
  return out;
}

Json MainResults(const DetectionRun& run) {
  const auto& r = run.report;
  Json j;
  j["auc"] = JsonNumber(r.auc);
  j["auc_log_score"] = JsonNumber(r.auc_log_score);
  j["null_auc"] = JsonNumber(r.null_auc);
  j["threshold"] = JsonNumber(r.threshold.threshold);
  j["threshold_qualified"] = r.threshold.qualified;
  j["tpr_at_fpr_0.01"] = JsonNumber(r.tpr_at_fpr_1pct);
  j["tpr_at_fpr_0.001"] = JsonNumber(r.tpr_at_fpr_01pct);
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  const auto& c = r.confusion;
  j["confusion"] = Json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
  j["metrics"] = Json{{"precision", JsonNumber(c.Precision())}, {"recall", JsonNumber(c.Recall())},
                      {"fpr", JsonNumber(c.Fpr())},             {"tnr", JsonNumber(c.Tnr())},
                      {"fnr", JsonNumber(c.Fnr())},             {"accuracy", JsonNumber(c.Accuracy())},
                      {"f1", JsonNumber(c.F1())}};
  j["train_size"] = run.split.train.size();
  j["test_size"] = run.split.test.size();
  j["injected_behaviors"] = run.trained.injected;
  j["accumulated_estimates"] = run.trained.result.accumulated;
  Json empty = Json::array();
  for (const auto& s : run.scored) {
    if (s.empty_words) empty.push_back(s.index);
  }
  j["empty_word_bags"] = empty.size();
  j["empty_word_bag_indices"] = empty;
  return j;
}

void AddMainFiles(ExperimentOutput& out, const DetectionRun& run) {
  std::vector<std::pair<double, double>> roc, pr;
  for (const auto& p : run.report.curves.roc) roc.emplace_back(p.fpr, p.tpr);
  for (const auto& p : run.report.curves.pr) pr.emplace_back(p.recall, p.precision);
  out.files.emplace_back("roc.csv", CurveCsv(roc));
  out.files.emplace_back("pr.csv", CurveCsv(pr));
  out.files.emplace_back("cost.csv", CurveCsv(run.report.threshold.cost_curve));
  out.files.emplace_back("scores.tsv", ScoresFile(run.labeled, run.scored));
  std::ostringstream model;
  WriteModel(run.trained.result.model, model);
  out.files.emplace_back("model.cbm", model.str());
}

std::string MainSummary(const DetectionRun& run) {
  const auto& r = run.report;
  std::ostringstream s;
  s << "test behaviors  " << run.scored.size() << " (" << r.positives << " anomalous)\n";
  s << "AUC (S_r)       " << Num(r.auc) << "\n";
  s << "AUC (S_l)       " << Num(r.auc_log_score) << "\n";
  s << "null AUC        " << Num(r.null_auc) << "\n";
  s << "TPR @ FPR=1%    " << Num(r.tpr_at_fpr_1pct) << "\n";
  s << "threshold       " << Num(r.threshold.threshold) << (r.threshold.qualified ? "" : " (no cost < 1)") << "\n";
  return s.str();
}

}  // namespace

ExperimentOutput RunExperiment(const RunConfig& config) {
  config.Validate();
  const auto seeds = StageSeeds::From(config.seed);
  const auto data = Stage("load", [&] { return LoadDataset(config); });
  const auto& corpus = data.corpus;

  ExperimentOutput out;
  Json results;
  std::ostringstream summary;
  summary << "experiment " << config.experiment << ", seed " << config.seed << ", " << corpus.behaviors.size()
          << " behaviors\n";

  const auto& e = config.experiment;
  if (e == "grid") {
    const auto cells = RunGrid(config, corpus);
    std::string csv = "C,Z,auc\n";
    Json grid = Json::array();
    summary << "C\\Z";
    for (int z : config.grid_z) summary << '\t' << z;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      csv += std::to_string(cells[i].communities) + "," + std::to_string(cells[i].topics) + "," +
             Num(cells[i].auc) + "\n";
      grid.push_back(Json{{"C", cells[i].communities}, {"Z", cells[i].topics}, {"auc", JsonNumber(cells[i].auc)}});
      if (i % config.grid_z.size() == 0) summary << '\n' << cells[i].communities;
      summary << '\t' << Num(cells[i].auc);
    }
    summary << '\n';
    results["grid"] = grid;
    out.files.emplace_back("grid.csv", csv);
  } else if (e == "windowed") {
    const auto windowed = RunWindowed(config, corpus);
    std::string csv = "window,train_size,chunk_begin,chunk_end,admitted,anomalies,auc,static_auc\n";
    Json rows = Json::array();
    for (const auto& r : windowed.rows) {
      csv += std::to_string(r.window) + "," + std::to_string(r.train_size) + "," + std::to_string(r.chunk_begin) +
             "," + std::to_string(r.chunk_end) + "," + std::to_string(r.admitted) + "," +
             std::to_string(r.anomalies) + "," + Num(r.auc) + "," + Num(r.static_auc) + "\n";
      rows.push_back(Json{{"window", r.window},
                          {"train_size", r.train_size},
                          {"chunk_begin", r.chunk_begin},
                          {"chunk_end", r.chunk_end},
                          {"admitted", r.admitted},
                          {"anomalies", r.anomalies},
                          {"auc", JsonNumber(r.auc)},
                          {"static_auc", JsonNumber(r.static_auc)}});
    }
    results["windows"] = rows;
    results["pooled_auc"] = JsonNumber(windowed.pooled_auc);
    results["pooled_static_auc"] = JsonNumber(windowed.pooled_static_auc);
    out.files.emplace_back("windows.csv", csv);
    summary << "windows         " << windowed.rows.size() << "\n";
    summary << "pooled AUC      " << Num(windowed.pooled_auc) << " (static " << Num(windowed.pooled_static_auc)
            << ")\n";
  } else {
    const auto run = RunDetection(config, corpus);
    results["main"] = MainResults(run);
    AddMainFiles(out, run);
    summary << MainSummary(run);

    if (e == "latency") {
      std::string csv = "k,blocks,positive_blocks,excluded_users,auc,tpr_at_fpr_0.01,tpr_at_fpr_0.001\n";
      Json rows = Json::array();
      summary << "k\tblocks\tAUC\tTPR@1%\tTPR@0.1%\n";
      for (int k : config.latency_k) {
        const auto r = Stage("latency", [&] { return ScoreLatency(config, run, k); });
        csv += std::to_string(k) + "," + std::to_string(r.blocks) + "," + std::to_string(r.positive_blocks) + "," +
               std::to_string(r.excluded_users) + "," + Num(r.auc) + "," + Num(r.tpr_at_fpr_1pct) + "," +
               Num(r.tpr_at_fpr_01pct) + "\n";
        rows.push_back(Json{{"k", k},
                            {"blocks", r.blocks},
                            {"positive_blocks", r.positive_blocks},
                            {"excluded_users", r.excluded_users},
                            {"auc", JsonNumber(r.auc)},
                            {"tpr_at_fpr_0.01", JsonNumber(r.tpr_at_fpr_1pct)},
                            {"tpr_at_fpr_0.001", JsonNumber(r.tpr_at_fpr_01pct)}});
        summary << k << '\t' << r.blocks << '\t' << Num(r.auc) << '\t' << Num(r.tpr_at_fpr_1pct) << '\t'
                << Num(r.tpr_at_fpr_01pct) << '\n';
      }
      results["latency"] = rows;
      out.files.emplace_back("latency.csv", csv);
    } else if (e == "robustness") {
      const auto rows = Stage("robustness", [&] { return RunRobustness(config, corpus, run); });
      std::string csv = "mode,anomalies,auc,tpr_at_fpr_0.01\n";
      Json table = Json::array();
      summary << "mode\tAUC\tTPR@1%\n";
      for (const auto& r : rows) {
        const std::string mode(SwapModeName(r.mode));
        csv += mode + "," + std::to_string(r.anomalies) + "," + Num(r.auc) + "," + Num(r.tpr_at_fpr_1pct) + "\n";
        table.push_back(Json{{"mode", mode},
                             {"anomalies", r.anomalies},
                             {"auc", JsonNumber(r.auc)},
                             {"tpr_at_fpr_0.01", JsonNumber(r.tpr_at_fpr_1pct)}});
        summary << mode << '\t' << Num(r.auc) << '\t' << Num(r.tpr_at_fpr_1pct) << '\n';
      }
      results["robustness"] = table;
      out.files.emplace_back("robustness.csv", csv);
    } else if (e == "baselines") {
      const auto base = RunBaselines(config, run);
      std::string csv = "detector,auc\n";
      Json table = Json::array();
      summary << "detector\tAUC\n";
      for (const auto& d : base.detectors) {
        std::string file = "index\tuser\tscore\tlabel\n";
        for (std::size_t i = 0; i < run.scored.size(); ++i) {
          const auto& s = run.scored[i];
          file += std::to_string(s.index) + '\t' + corpus.users.Name(s.user) + '\t' + Num(d.scores[i]) + '\t' +
                  (s.label == Label::kAnomalous ? "1" : "0") + '\n';
        }
        out.files.emplace_back("scores_" + d.name + ".tsv", file);
        csv += d.name + "," + Num(d.auc) + "\n";
        table.push_back(Json{{"detector", d.name}, {"auc", JsonNumber(d.auc)}});
        summary << d.name << "\t\t" << Num(d.auc) << '\n';
      }
      csv += "fused," + Num(base.fused.auc) + "\n";
      table.push_back(Json{{"detector", "fused"}, {"auc", JsonNumber(base.fused.auc)}});
      summary << "fused\t\t" << Num(base.fused.auc) << '\n';
      std::vector<std::pair<double, double>> frontier;
      for (const auto& p : base.fused.frontier) frontier.emplace_back(p.fpr, p.tpr);
      out.files.emplace_back("fused_roc.csv", CurveCsv(frontier));
      out.files.emplace_back("baselines.csv", csv);
      results["baselines"] = table;
    }
  }

  Json report;
  report["experiment"] = config.experiment;
  report["seed"] = config.seed;
  Json cfg = Json::object();
  for (const auto& [key, value] : config.Items()) cfg[key] = value;
  report["config"] = cfg;
  report["seeds"] = Json{{"synth", seeds.synth},         {"theft", seeds.theft}, {"train", seeds.train},
                         {"score", seeds.score},         {"null", seeds.null_labels},
                         {"baselines", seeds.baselines}};
  report["corpus"] = Json{{"users", corpus.num_users()},
                          {"venues", corpus.num_venues()},
                          {"words", corpus.num_words()},
                          {"behaviors", corpus.behaviors.size()},
                          {"synthesized", data.synthesized}};
  report["results"] = results;
  out.files.emplace_back("report.json", report.dump(2) + "\n");
  out.summary = summary.str();
  return out;
}

void WriteOutput(const ExperimentOutput& output, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& [name, contents] : output.files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + (dir / name).string());
    out << contents;
    if (!out) Fail(ErrorKind::kIo, "failed writing " + (dir / name).string());
  }
}

}  // namespace cbm
