#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "cbm/error.hpp"
#include "cbm/model.hpp"
#include "cbm/random.hpp"
#include "cbm/scoring.hpp"
#include "oracles.hpp"

using namespace cbm;

namespace {

Behavior Make(int user, int venue, std::vector<int> words) {
  Behavior b;
  b.user = user;
  b.venue = venue;
  b.words = std::move(words);
  return b;
}

Hyperparams Priors(int C, int Z, double alpha, double beta, double gamma, double eta) {
  Hyperparams h;
  h.communities = C;
  h.topics = Z;
  h.alpha = alpha;
  h.beta = beta;
  h.gamma = gamma;
  h.eta = eta;
  return h;
}

double MaxRelError(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
  }
  return worst;
}

// Mean total-variation distance between matched rows, minimized over row
// permutations of the estimate.
double BestPermutationTv(const MatrixD& truth, const MatrixD& est) {
  std::vector<std::size_t> perm(truth.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e9;
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < truth.rows(); ++r) {
      double tv = 0.0;
      for (std::size_t c = 0; c < truth.cols(); ++c) tv += std::abs(truth(r, c) - est(perm[r], c));
      total += 0.5 * tv;
    }
    best = std::min(best, total / static_cast<double>(truth.rows()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("default hyperparameters follow the fixed-value rule") {
  auto h = Hyperparams::Defaults();
  CHECK(h.communities == 30);
  CHECK(h.topics == 20);
  CHECK(h.alpha == doctest::Approx(2.5));
  CHECK(h.gamma == doctest::Approx(50.0 / 30));
  CHECK(h.beta == 0.01);
  CHECK(h.eta == 0.01);
  h.eta = 0.0;
  CHECK_THROWS_AS(h.Validate(), Error);
}

TEST_CASE("community conditional") {
  SUBCASE("all counts zero gives a uniform conditional") {
    auto h = Priors(3, 2, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(2, 4, 5, h);
    auto p = CommunityConditional(state, h, Make(0, 1, {2}), 0);
    for (double x : p) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  SUBCASE("user counts [3, 0] with gamma 1 give a 4:1 ratio") {
    auto h = Priors(2, 1, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 1, h);
    state.n_uc(0, 0) = 3;
    state.n_u[0] = 3;
    auto w = CommunityWeights(state, h, Make(0, 0, {}), 0);
    CHECK(w[0] / w[1] == doctest::Approx(4.0).epsilon(1e-14));
  }
}

TEST_CASE("topic conditional") {
  SUBCASE("all counts zero gives a uniform conditional") {
    auto h = Priors(2, 4, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 6, h);
    auto p = TopicConditionalProbabilities(state, h, Make(0, 0, {1, 3, 3}), 1);
    for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("single word with counts 5 vs 0 gives ratio 501") {
    auto h = Priors(1, 2, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 2, h);
    state.n_zw(0, 0) = 5;
    state.n_zw(0, 1) = 5;
    state.n_zw(1, 1) = 10;
    state.n_z = {10, 10};
    for (auto form : {TopicConditional::kCollapsed, TopicConditional::kLiteral}) {
      auto lw = TopicLogWeights(state, h, Make(0, 0, {0}), 0, form);
      CHECK(std::exp(lw[0] - lw[1]) == doctest::Approx(501.0).epsilon(1e-12));
    }
  }
  SUBCASE("empty bag falls back to the community-topic counts") {
    auto h = Priors(1, 2, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 2, h);
    state.n_cz(0, 0) = 3;
    state.n_c_z[0] = 3;
    auto lw = TopicLogWeights(state, h, Make(0, 0, {}), 0);
    CHECK(std::exp(lw[0] - lw[1]) == doctest::Approx(3.5 / 0.5));
  }
  SUBCASE("literal and collapsed forms differ once a word repeats") {
    auto h = Priors(1, 2, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 2, h);
    state.n_zw(0, 0) = 2;
    state.n_z = {2, 0};
    auto collapsed = TopicConditionalProbabilities(state, h, Make(0, 0, {0, 0}), 0);
    auto literal = TopicConditionalProbabilities(state, h, Make(0, 0, {0, 0}), 0,
                                                 TopicConditional::kLiteral);
    CHECK(std::abs(collapsed[0] - literal[0]) > 1e-6);
  }
}

TEST_CASE("conditionals equal ratios of the enumerated collapsed joint") {
  Rng gen(2024);
  int instances = 0;
  for (int trial = 0; trial < 60; ++trial) {
    oracle::ToyPriors p{};
    p.C = 1 + static_cast<int>(gen.Index(3));
    p.Z = 1 + static_cast<int>(gen.Index(3));
    p.U = 2;
    p.V = 2 + static_cast<int>(gen.Index(2));
    p.W = 2 + static_cast<int>(gen.Index(2));
    p.alpha = 0.1 + 2.0 * gen.Uniform();
    p.beta = 0.01 + gen.Uniform();
    p.gamma = 0.1 + 2.0 * gen.Uniform();
    p.eta = 0.01 + gen.Uniform();
    auto hyper = Priors(p.C, p.Z, p.alpha, p.beta, p.gamma, p.eta);
    const int n = 1 + static_cast<int>(gen.Index(3));
    std::vector<Behavior> docs;
    for (int i = 0; i < n; ++i) {
      std::vector<int> words;
      const int len = static_cast<int>(gen.Index(3));
      for (int k = 0; k < len; ++k) words.push_back(static_cast<int>(gen.Index(p.W)));
      docs.push_back(Make(static_cast<int>(gen.Index(p.U)), static_cast<int>(gen.Index(p.V)), words));
    }
    const int per = p.C * p.Z;
    int configs = 1;
    for (int i = 0; i < n; ++i) configs *= per;
    for (int code = 0; code < configs; ++code) {
      std::vector<int> comm(n), top(n);
      for (int i = 0, rest = code; i < n; ++i, rest /= per) {
        comm[i] = (rest % per) / p.Z;
        top[i] = (rest % per) % p.Z;
      }
      for (int i = 0; i < n; ++i) {
        GibbsState state(p.U, p.V, p.W, hyper);
        for (int j = 0; j < n; ++j) {
          if (j != i) state.Apply(docs[j], comm[j], top[j], +1);
        }
        std::vector<double> logs_c(p.C);
        for (int c = 0; c < p.C; ++c) {
          auto cc = comm;
          cc[i] = c;
          logs_c[c] = oracle::CollapsedLogJoint(docs, cc, top, p);
        }
        std::vector<double> logs_z(p.Z);
        for (int z = 0; z < p.Z; ++z) {
          auto tt = top;
          tt[i] = z;
          logs_z[z] = oracle::CollapsedLogJoint(docs, comm, tt, p);
        }
        CHECK(MaxRelError(CommunityConditional(state, hyper, docs[i], top[i]),
                          oracle::NormalizeLog(logs_c)) <= 1e-10);
        CHECK(MaxRelError(TopicConditionalProbabilities(state, hyper, docs[i], comm[i]),
                          oracle::NormalizeLog(logs_z)) <= 1e-10);
      }
    }
    ++instances;
  }
  CHECK(instances == 60);
}

TEST_CASE("gibbs sweep") {
  GeneratorConfig g;
  g.hyper = Priors(3, 4, 0.5, 0.05, 0.2, 0.05);
  g.users = 20;
  g.venues = 15;
  g.words = 40;
  g.behaviors_per_user = CountDistribution::Parse("fixed:6", 1);
  g.words_per_tip = CountDistribution::Parse("poisson:4", 0);
  auto gen = GenerateCorpus(g, 11);
  const auto& docs = gen.corpus.behaviors;
  auto h = Hyperparams::Defaults(3, 4);

  SUBCASE("single behavior with one community and topic is a fixed point") {
    auto h1 = Hyperparams::Defaults(1, 1);
    std::vector<Behavior> one = {Make(0, 0, {0, 1})};
    Rng rng(5);
    auto state = InitializeState(one, 1, 1, 2, h1, rng);
    GibbsSweep(state, h1, one, rng);
    CHECK(state.community[0] == 0);
    CHECK(state.topic[0] == 0);
  }
  SUBCASE("count tables are conserved and consistent") {
    Rng rng(7);
    auto state = InitializeState(docs, g.users, g.venues, g.words, h, rng);
    auto total = [](const MatrixI& m) { return std::accumulate(m.data().begin(), m.data().end(), 0L); };
    const long uc = total(state.n_uc), cz = total(state.n_cz), cv = total(state.n_cv), zw = total(state.n_zw);
    std::vector<int> per_user(g.users, 0);
    for (const auto& b : docs) ++per_user[b.user];
    for (int s = 0; s < 5; ++s) {
      GibbsSweep(state, h, docs, rng);
      CHECK_NOTHROW(state.CheckConsistency(docs));
      CHECK(total(state.n_uc) == uc);
      CHECK(total(state.n_cz) == cz);
      CHECK(total(state.n_cv) == cv);
      CHECK(total(state.n_zw) == zw);
      for (int u = 0; u < g.users; ++u) CHECK(state.n_u[u] == per_user[u]);
    }
  }
  SUBCASE("fixed seed reproduces the assignment sequence") {
    Rng a(99), b(99);
    auto sa = InitializeState(docs, g.users, g.venues, g.words, h, a);
    auto sb = InitializeState(docs, g.users, g.venues, g.words, h, b);
    for (int s = 0; s < 3; ++s) {
      GibbsSweep(sa, h, docs, a);
      GibbsSweep(sb, h, docs, b);
      CHECK(sa.community == sb.community);
      CHECK(sa.topic == sb.topic);
    }
  }
}

TEST_CASE("estimate") {
  SUBCASE("zero counts give uniform rows") {
    auto h = Priors(2, 3, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(4, 5, 6, h);
    auto m = Estimate(state, h);
    CHECK(m.pi(3, 1) == doctest::Approx(0.5));
    CHECK(m.theta(1, 2) == doctest::Approx(1.0 / 3));
    CHECK(m.vartheta(0, 4) == doctest::Approx(0.2));
    CHECK(m.phi(2, 5) == doctest::Approx(1.0 / 6));
  }
  SUBCASE("theta row from counts [3, 1] with alpha 0.5 is [0.7, 0.3]") {
    auto h = Priors(1, 2, 0.5, 0.01, 1.0, 0.01);
    GibbsState state(1, 1, 1, h);
    state.n_cz(0, 0) = 3;
    state.n_cz(0, 1) = 1;
    auto m = Estimate(state, h);
    CHECK(m.theta(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(m.theta(0, 1) == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("rows of random count tables sum to one") {
    auto h = Priors(4, 5, 0.3, 0.02, 0.7, 0.05);
    GibbsState state(6, 7, 9, h);
    Rng rng(3);
    for (auto* m : {&state.n_uc, &state.n_cz, &state.n_cv, &state.n_zw}) {
      for (int& x : m->data()) x = static_cast<int>(rng.Index(50));
    }
    auto m = Estimate(state, h);
    CHECK_NOTHROW(m.CheckNormalized(1e-9));
    for (double x : m.phi.data()) CHECK(x > 0.0);
  }
}

TEST_CASE("generative process") {
  SUBCASE("counts follow the configuration") {
    GeneratorConfig g;
    g.hyper = Hyperparams::Defaults();
    g.users = 100;
    g.venues = 50;
    g.words = 300;
    g.behaviors_per_user = CountDistribution::Parse("fixed:20", 1);
    g.words_per_tip = CountDistribution::Parse("fixed:8", 0);
    auto gen = GenerateCorpus(g, 1);
    CHECK(gen.corpus.behaviors.size() == 2000);
    for (const auto& b : gen.corpus.behaviors) CHECK(b.words.size() == 8);
    CHECK_NOTHROW(gen.truth.CheckNormalized(1e-9));
    for (std::size_t i = 0; i < gen.corpus.behaviors.size(); ++i) {
      CHECK(gen.corpus.behaviors[i].timestamp == static_cast<std::int64_t>(i));
    }
  }
  SUBCASE("single community: venue frequencies match vartheta (chi-square)") {
    GeneratorConfig g;
    g.hyper = Priors(1, 1, 1.0, 1.0, 1.0, 1.0);
    g.users = 50;
    g.venues = 10;
    g.words = 5;
    g.behaviors_per_user = CountDistribution::Parse("fixed:200", 1);
    g.words_per_tip = CountDistribution::Parse("fixed:0", 0);
    auto gen = GenerateCorpus(g, 8);
    std::vector<double> counts(10, 0.0);
    for (const auto& b : gen.corpus.behaviors) counts[b.venue] += 1;
    const double n = static_cast<double>(gen.corpus.behaviors.size());
    double chi2 = 0.0;
    for (int v = 0; v < 10; ++v) {
      const double expected = n * gen.truth.vartheta(0, v);
      chi2 += (counts[v] - expected) * (counts[v] - expected) / expected;
    }
    // df = 9; the 0.9999 quantile is about 33.7.
    CHECK(chi2 < 33.7);
  }
  SUBCASE("word frequencies within a topic match phi on 1e5 tokens") {
    GeneratorConfig g;
    g.hyper = Priors(1, 1, 1.0, 1.0, 1.0, 1.0);
    g.users = 100;
    g.venues = 3;
    g.words = 20;
    g.behaviors_per_user = CountDistribution::Parse("fixed:100", 1);
    g.words_per_tip = CountDistribution::Parse("fixed:10", 0);
    auto gen = GenerateCorpus(g, 21);
    std::vector<double> counts(20, 0.0);
    double n = 0;
    for (const auto& b : gen.corpus.behaviors) {
      for (int w : b.words) {
        counts[w] += 1;
        n += 1;
      }
    }
    CHECK(n == 100000);
    double chi2 = 0.0;
    for (int w = 0; w < 20; ++w) {
      const double expected = n * gen.truth.phi(0, w);
      chi2 += (counts[w] - expected) * (counts[w] - expected) / expected;
    }
    // df = 19; the 0.9999 quantile is about 49.0.
    CHECK(chi2 < 49.0);
  }
  SUBCASE("same seed, same corpus") {
    GeneratorConfig g;
    g.users = 10;
    auto a = GenerateCorpus(g, 5);
    auto b = GenerateCorpus(g, 5);
    CHECK(a.corpus == b.corpus);
    CHECK(a.truth == b.truth);
  }
}

TEST_CASE("training") {
  GeneratorConfig g;
  g.hyper = Priors(3, 4, 0.1, 0.05, 0.1, 0.05);
  g.users = 100;
  g.venues = 40;
  g.words = 150;
  g.behaviors_per_user = CountDistribution::Parse("fixed:20", 1);
  g.words_per_tip = CountDistribution::Parse("fixed:8", 0);
  auto gen = GenerateCorpus(g, 17);
  std::vector<std::size_t> all(gen.corpus.behaviors.size());
  std::iota(all.begin(), all.end(), 0);
  auto h = Hyperparams::Defaults(3, 4);

  SUBCASE("burn-in must be below the iteration count") {
    TrainSchedule s{10, 10, 1};
    CHECK_THROWS_AS(Train(gen.corpus, all, h, s, 1), Error);
  }
  SUBCASE("one accumulation returns that single estimate") {
    TrainSchedule s{6, 3, 3};
    auto result = Train(gen.corpus, all, h, s, 42);
    CHECK(result.accumulated == 1);
    auto docs = Gather(gen.corpus, all);
    Rng rng(42);
    auto state = InitializeState(docs, g.users, g.venues, g.words, h, rng);
    for (int i = 0; i < 6; ++i) GibbsSweep(state, h, docs, rng);
    auto single = Estimate(state, h);
    CHECK(result.model.pi == single.pi);
    CHECK(result.model.theta == single.theta);
    CHECK(result.model.vartheta == single.vartheta);
    CHECK(result.model.phi == single.phi);
  }
  SUBCASE("recovers topic-word distributions up to relabeling") {
    TrainSchedule s{300, 150, 10};
    auto result = Train(gen.corpus, all, h, s, 3);
    CHECK_NOTHROW(result.model.CheckNormalized(1e-9));
    const double tv = BestPermutationTv(gen.truth.phi, result.model.phi);
    MESSAGE("phi mean TV under best permutation: " << tv);
    CHECK(tv < 0.15);
    CHECK(result.accumulated == 15);
  }
  SUBCASE("deterministic under a fixed seed") {
    TrainSchedule s{40, 20, 5};
    auto a = Train(gen.corpus, all, h, s, 8);
    auto b = Train(gen.corpus, all, h, s, 8);
    CHECK(a.model == b.model);
    CHECK(a.mean_log_score == b.mean_log_score);
  }
}

TEST_CASE("model file round trip is bit exact") {
  GeneratorConfig g;
  g.users = 12;
  g.venues = 9;
  g.words = 30;
  g.hyper = Hyperparams::Defaults(3, 2);
  auto gen = GenerateCorpus(g, 4);
  std::vector<std::size_t> all(gen.corpus.behaviors.size());
  std::iota(all.begin(), all.end(), 0);
  auto model = Train(gen.corpus, all, g.hyper, TrainSchedule{20, 10, 5}, 2).model;
  auto path = std::filesystem::temp_directory_path() / "cbm_model_roundtrip.cbm";
  SaveModel(model, path);
  auto loaded = LoadModel(path);
  CHECK(loaded == model);
  CHECK(loaded.tables_hash() == model.tables_hash());
  std::filesystem::remove(path);
}
