#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cbm/config.hpp"
#include "cbm/error.hpp"
#include "cbm/experiment.hpp"
#include "cbm/metrics.hpp"
#include "cbm/random.hpp"
#include "oracles.hpp"

using namespace cbm;

namespace {

RunConfig SmallConfig() {
  RunConfig c;
  c.synth.users = 40;
  c.synth.venues = 20;
  c.synth.words = 60;
  c.synth.communities = 2;
  c.synth.topics = 2;
  c.synth.behaviors_per_user = "fixed:10";
  c.synth.words_per_tip = "fixed:4";
  c.communities = 2;
  c.topics = 2;
  c.iterations = 40;
  c.burn_in = 20;
  c.lag = 10;
  c.reference_count = 10;
  return c;
}

double Trapezoid(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

std::string FileOf(const ExperimentOutput& out, const std::string& name) {
  for (const auto& [n, body] : out.files) {
    if (n == name) return body;
  }
  return {};
}

}  // namespace

TEST_CASE("auc matches pair counting exactly on random inputs with ties") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.Index(199);
    std::vector<double> scores(n);
    std::vector<int> positive(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::floor(rng.Uniform() * (trial % 2 ? 5.0 : 1e6));
      positive[i] = rng.Uniform() < 0.3 ? 1 : 0;
    }
    positive[0] = 1;
    positive[1] = 0;
    CHECK(AucTwiceNumerator(scores, positive) == oracle::PairCountTwiceNumerator(scores, positive));
    CHECK(ComputeAuc(scores, positive) == oracle::PairCountAuc(scores, positive));
  }
}

TEST_CASE("auc edge cases") {
  const std::vector<double> flat(6, 0.3);
  const std::vector<int> labels = {1, 0, 1, 0, 0, 0};
  CHECK(ComputeAuc(flat, labels) == 0.5);
  const std::vector<double> separated = {0.9, 0.1, 0.8, 0.2, 0.3, 0.4};
  CHECK(ComputeAuc(separated, labels) == 1.0);
  const std::vector<int> one_class(6, 1);
  CHECK_THROWS_AS(ComputeAuc(flat, one_class), Error);
  CHECK_THROWS_AS(ComputeCurves(flat, one_class), Error);
}

TEST_CASE("curves are anchored, monotone and consistent with auc") {
  Rng rng(5);
  std::vector<double> scores(150);
  std::vector<int> positive(150);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    positive[i] = i % 7 == 0 ? 1 : 0;
    pos += static_cast<std::size_t>(positive[i]);
    scores[i] = rng.Uniform() + 0.3 * positive[i];  // untied with probability one
  }
  const auto curves = ComputeCurves(scores, positive);
  REQUIRE(curves.roc.size() == scores.size() + 1);
  CHECK(curves.roc.front() == RocPoint{0.0, 0.0});
  CHECK(curves.roc.back() == RocPoint{1.0, 1.0});
  for (std::size_t i = 1; i < curves.roc.size(); ++i) {
    CHECK(curves.roc[i].fpr >= curves.roc[i - 1].fpr);
    CHECK(curves.roc[i].tpr >= curves.roc[i - 1].tpr);
  }
  CHECK(Trapezoid(curves.roc) == doctest::Approx(ComputeAuc(scores, positive)).epsilon(1e-9));
  CHECK(curves.pr.back().recall == 1.0);
  CHECK(curves.pr.back().precision == static_cast<double>(pos) / static_cast<double>(scores.size()));

  const std::vector<double> sep = {0.9, 0.8, 0.1, 0.2};
  const std::vector<int> lab = {1, 1, 0, 0};
  const auto s = ComputeCurves(sep, lab);
  CHECK(std::find(s.roc.begin(), s.roc.end(), RocPoint{0.0, 1.0}) != s.roc.end());
}

TEST_CASE("tpr at fpr reads the best admissible point") {
  const std::vector<RocPoint> roc = {{0, 0}, {0, 0.4}, {0.005, 0.6}, {0.02, 0.9}, {1, 1}};
  CHECK(TprAtFpr(roc, 0.01) == 0.6);
  CHECK(TprAtFpr(roc, 0.001) == 0.4);
  CHECK(TprAtFpr(roc, 1.0) == 1.0);
}

TEST_CASE("confusion matrix identities") {
  Rng rng(2);
  std::vector<double> scores(300);
  std::vector<int> positive(300);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.Uniform();
    positive[i] = rng.Uniform() < 0.2 ? 1 : 0;
  }
  const auto pos = static_cast<std::uint64_t>(std::count(positive.begin(), positive.end(), 1));
  for (double t : {0.0, 0.25, 0.5, 0.9, 1.1}) {
    const auto m = Confusion(scores, positive, t);
    CHECK(m.tp + m.fn == pos);
    CHECK(m.fp + m.tn == scores.size() - pos);
    CHECK(m.Accuracy() == static_cast<double>(m.tp + m.tn) / static_cast<double>(scores.size()));
    const double p = m.Precision(), r = m.Recall();
    CHECK(m.F1() == (p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r)));
    CHECK(m.Tnr() + m.Fpr() == doctest::Approx(1.0));
    CHECK(m.Fnr() + m.Recall() == doctest::Approx(1.0));
  }
  const std::vector<double> s = {0.5, 0.4};
  const std::vector<int> l = {1, 0};
  const auto at = Confusion(s, l, 0.5);
  CHECK(at.tp == 1);
  CHECK(at.fp == 0);
}

TEST_CASE("config parsing") {
  RunConfig c;
  CHECK_NOTHROW(c.Validate());
  ApplyConfigText(c, "# comment\n\nC = 7\nZ=5\nalpha = 0.3\nswap_mode = venue\ngrid.C = 1,2\n");
  CHECK(c.communities == 7);
  CHECK(c.topics == 5);
  CHECK(*c.alpha == 0.3);
  CHECK(c.swap_mode == SwapMode::kVenueOnly);
  CHECK(c.grid_c == std::vector<int>{1, 2});
  CHECK(c.Hyper().gamma == 50.0 / 7);
  c.Set("alpha", "auto");
  CHECK_FALSE(c.alpha.has_value());

  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kRuntime;
  };
  CHECK(kind([&] { c.Set("no_such_key", "1"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { c.Set("C", "many"); }) == ErrorKind::kConfig);
  CHECK(kind([&] { ApplyConfigText(c, "C 3\n"); }) == ErrorKind::kConfig);
  RunConfig bad;
  bad.burn_in = bad.iterations;
  CHECK(kind([&] { bad.Validate(); }) == ErrorKind::kConfig);
  bad = RunConfig{};
  bad.experiment = "everything";
  CHECK(kind([&] { bad.Validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("config text round trips every key") {
  RunConfig c;
  ApplyConfigText(c, "seed = 9\nbeta = 0.125\nlatency.k = 1,3\nprior = uniform\naugment.social = difference\n");
  RunConfig back;
  ApplyConfigText(back, ConfigText(c));
  CHECK(back.Items() == c.Items());
}

TEST_CASE("seed environment override") {
  RunConfig c;
  setenv("CBM_SEED", "1234", 1);
  ApplySeedEnvironment(c);
  unsetenv("CBM_SEED");
  CHECK(c.seed == 1234);
  RunConfig d;
  ApplySeedEnvironment(d);
  CHECK(d.seed == 42);
}

TEST_CASE("main run and report") {
  auto config = SmallConfig();
  const auto out = RunExperiment(config);
  const auto report = nlohmann::json::parse(FileOf(out, "report.json"));
  CHECK(report["results"]["main"].contains("auc"));
  CHECK(report["results"]["main"].contains("threshold"));
  CHECK(report["config"]["C"] == "2");
  for (const char* f : {"roc.csv", "pr.csv", "cost.csv", "scores.tsv", "model.cbm"}) {
    CHECK(FileOf(out, f).size() > 0);
  }
  CHECK(FileOf(out, "roc.csv").rfind("x,y\n", 0) == 0);
  CHECK(out.files.back().first == "report.json");
  const double threshold = report["results"]["main"]["threshold"];
  CHECK(threshold >= config.threshold_lo);
  CHECK(threshold <= config.threshold_hi);
}

TEST_CASE("latency blocks") {
  auto config = SmallConfig();
  const auto data = LoadDataset(config);
  const auto run = RunDetection(config, data.corpus);

  SUBCASE("k = 1 reproduces the main scoring in every mode") {
    for (const char* mode : {"case", "history", "test"}) {
      config.latency_blocks = mode;
      const auto row = ScoreLatency(config, run, 1);
      CHECK(row.blocks == run.scored.size());
      CHECK(row.auc == run.report.auc);
    }
  }
  SUBCASE("case blocks carry the donor's recent behaviors") {
    const int k = 3;
    const auto blocks = LatencyBlocks(run, k, BlockMode::kCase);
    std::size_t positives = 0;
    for (const auto& b : blocks) {
      REQUIRE(b.behaviors.size() == static_cast<std::size_t>(k));
      for (const auto& x : b.behaviors) CHECK(x.user == b.behaviors.back().user);
      if (!b.positive) continue;
      ++positives;
      const auto& donor = run.labeled.behaviors[b.key].donor;
      REQUIRE(donor.has_value());
      // The newest behavior of the block is the swapped one as labeled.
      CHECK(b.behaviors.back().venue == run.labeled.behaviors[b.key].venue);
      CHECK(b.behaviors.back().words == run.labeled.behaviors[b.key].words);
    }
    CHECK(positives == 2 * run.theft_pairs.size());
  }
  SUBCASE("test blocks do not overlap and leftovers are counted") {
    std::size_t excluded = 0;
    const auto blocks = LatencyBlocks(run, 3, BlockMode::kTest, &excluded);
    std::set<std::size_t> seen;
    for (const auto& b : blocks) {
      CHECK(b.behaviors.size() == 3);
      CHECK(seen.insert(b.key).second);
    }
    // 2 test behaviors per user: nobody fits a block of 3.
    CHECK(blocks.empty());
    CHECK(excluded == static_cast<std::size_t>(data.corpus.num_users()));
  }
}

TEST_CASE("robustness both mode equals the main run") {
  auto config = SmallConfig();
  const auto data = LoadDataset(config);
  const auto run = RunDetection(config, data.corpus);
  const auto rows = RunRobustness(config, data.corpus, run);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mode == SwapMode::kBoth);
  CHECK(rows[0].auc == run.report.auc);
  CHECK(rows[1].anomalies == rows[0].anomalies);
  CHECK(rows[2].anomalies == rows[0].anomalies);
}

TEST_CASE("a single window degenerates to the main run") {
  auto config = SmallConfig();
  config.window_size = 0.8;
  config.window_step = 0.2;
  const auto data = LoadDataset(config);
  const auto windowed = RunWindowed(config, data.corpus);
  REQUIRE(windowed.rows.size() == 1);
  const auto run = RunDetection(config, data.corpus);
  CHECK(windowed.rows[0].auc == run.report.auc);
  CHECK(windowed.rows[0].static_auc == run.report.auc);
  CHECK(windowed.rows[0].train_size == run.split.train.size());
}

TEST_CASE("windows respect time order") {
  auto config = SmallConfig();
  config.window_size = 0.5;
  config.window_step = 0.1;
  const auto data = LoadDataset(config);
  const auto windowed = RunWindowed(config, data.corpus);
  CHECK(windowed.rows.size() == 5);
  for (std::size_t i = 0; i < windowed.rows.size(); ++i) {
    const auto& r = windowed.rows[i];
    CHECK(r.chunk_begin == 200 + 40 * i);
    CHECK(r.chunk_end == r.chunk_begin + 40);
    CHECK(r.train_size <= 200);
    CHECK(data.corpus.behaviors[r.chunk_begin - 1].timestamp <= data.corpus.behaviors[r.chunk_begin].timestamp);
  }
  config.window_size = 0.95;
  config.window_step = 0.2;
  RunConfig tiny = config;
  tiny.synth.users = 1;
  tiny.synth.behaviors_per_user = "fixed:1";
  CHECK_THROWS_AS(RunWindowed(tiny, LoadDataset(tiny).corpus), Error);
}

TEST_CASE("grid has one cell per pair") {
  auto config = SmallConfig();
  config.grid_c = {1, 2};
  config.grid_z = {1, 2, 3};
  const auto data = LoadDataset(config);
  const auto cells = RunGrid(config, data.corpus);
  REQUIRE(cells.size() == 6);
  CHECK(cells[4].communities == 2);
  CHECK(cells[4].topics == 2);
  RunConfig same = config;
  same.communities = 2;
  same.topics = 2;
  CHECK(cells[4].auc == RunDetection(same, data.corpus).report.auc);
}

TEST_CASE("baselines emit four detectors and a fused curve") {
  auto config = SmallConfig();
  config.experiment = "baselines";
  config.mf.epochs = 30;
  config.lda.topics = 3;
  config.lda.iterations = 30;
  config.fused_grid = 10;
  const auto out = RunExperiment(config);
  for (const char* f : {"scores_mkde.tsv", "scores_cfkde.tsv", "scores_lda.tsv", "scores_joint.tsv", "baselines.csv"}) {
    CHECK(FileOf(out, f).size() > 0);
  }
  const auto report = nlohmann::json::parse(FileOf(out, "report.json"));
  CHECK(report["results"]["baselines"].size() == 5);
}

TEST_CASE("experiments are reproducible from their report") {
  for (const char* experiment : {"main", "latency", "robustness", "windowed"}) {
    auto config = SmallConfig();
    config.experiment = experiment;
    const auto first = RunExperiment(config);
    const auto dir = std::filesystem::temp_directory_path() / ("cbm_eval_repro_" + std::string(experiment));
    WriteOutput(first, dir);
    RunConfig reloaded;
    ApplyConfigFile(reloaded, dir / "report.json");
    const auto second = RunExperiment(reloaded);
    CHECK(second.files == first.files);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("augmented training injects latent behaviors") {
  auto config = SmallConfig();
  config.augment = true;
  config.augment_lda.topics = 3;
  config.augment_lda.iterations = 20;
  config.tucker.dim_users = 3;
  config.tucker.dim_venues = 3;
  config.tucker.dim_topics = 2;
  config.tucker.iterations = 20;
  config.augment_top_k = 2;
  const auto data = LoadDataset(config);
  const auto run = RunDetection(config, data.corpus);
  CHECK(run.trained.injected > 0);
  CHECK(run.trained.injected <= static_cast<std::size_t>(2 * data.corpus.num_users()));
  CHECK(std::isfinite(run.report.auc));
}

TEST_CASE("windowed retraining recovers from drift") {
  RunConfig c;
  c.synth.users = 100;
  c.synth.venues = 40;
  c.synth.words = 200;
  c.synth.communities = 3;
  c.synth.topics = 4;
  c.synth.behaviors_per_user = "fixed:30";
  c.synth.drift_after = 0.5;
  c.communities = 3;
  c.topics = 4;
  c.iterations = 200;
  c.burn_in = 100;
  c.lag = 20;
  c.window_size = 0.3;
  c.window_step = 0.1;
  c.swap_fraction = 0.1;
  const auto data = LoadDataset(c);
  const auto w = RunWindowed(c, data.corpus);
  double windowed = 0.0, fixed = 0.0;
  int chunks = 0;
  for (const auto& r : w.rows) {
    if (r.chunk_begin < data.corpus.behaviors.size() / 2) continue;
    windowed += r.auc;
    fixed += r.static_auc;
    ++chunks;
  }
  REQUIRE(chunks >= 3);
  CHECK(windowed / chunks > fixed / chunks);
}
