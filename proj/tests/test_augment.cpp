#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cbm/augment.hpp"
#include "cbm/error.hpp"
#include "cbm/random.hpp"
#include "oracles.hpp"

using namespace cbm;

namespace {

TuckerFactors RandomFactors(Rng& rng, std::size_t N, std::size_t M, std::size_t L, std::size_t a,
                            std::size_t b, std::size_t c) {
  TuckerFactors f;
  f.core = Tensor3(a, b, c);
  f.U = MatrixD(N, a);
  f.V = MatrixD(M, b);
  f.Z = MatrixD(L, c);
  for (auto* block : {&f.core.v, &f.U.data(), &f.V.data(), &f.Z.data()}) {
    for (double& x : *block) x = rng.Normal();
  }
  return f;
}

std::vector<double*> Parameters(TuckerFactors& f) {
  std::vector<double*> out;
  for (auto* block : {&f.core.v, &f.U.data(), &f.V.data(), &f.Z.data()}) {
    for (double& x : *block) out.push_back(&x);
  }
  return out;
}

Corpus SmallCorpus(int users, int venues) {
  Corpus c;
  for (int u = 0; u < users; ++u) c.users.Intern("u" + std::to_string(u));
  for (int v = 0; v < venues; ++v) c.venues.Intern("v" + std::to_string(v));
  c.venue_geo.resize(static_cast<std::size_t>(venues));
  c.venue_xy.resize(static_cast<std::size_t>(venues));
  return c;
}

Behavior Make(int user, int venue, std::vector<int> words = {}) {
  Behavior b;
  b.user = user;
  b.venue = venue;
  b.words = std::move(words);
  return b;
}

std::vector<std::size_t> AllIndices(const Corpus& c) {
  std::vector<std::size_t> idx(c.behaviors.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_CASE("tensor construction") {
  Corpus c = SmallCorpus(3, 4);
  c.behaviors = {Make(0, 1), Make(0, 1), Make(2, 3), Make(1, 0)};
  std::vector<int> topics{1, 1, 0, kNoTopic};
  auto idx = AllIndices(c);
  auto t = BuildTensor(c, idx, topics, 2);
  CHECK(t.At(0, 1, 1) == 2.0);
  CHECK(t.At(2, 3, 0) == 1.0);
  CHECK(t.At(1, 0, 0) == 0.0);
  CHECK(t.Total() == 3.0);
  CHECK(t.entries.size() == 2);
  auto dense = t.Dense();
  CHECK(std::accumulate(dense.v.begin(), dense.v.end(), 0.0) == 3.0);

  Corpus one = SmallCorpus(1, 1);
  one.behaviors = {Make(0, 0)};
  std::vector<int> z{0};
  auto single = BuildTensor(one, AllIndices(one), z, 1);
  REQUIRE(single.entries.size() == 1);
  CHECK(single.entries[0].count == 1.0);
}

TEST_CASE("tensor file round trip") {
  Corpus c = SmallCorpus(2, 2);
  c.behaviors = {Make(0, 1), Make(1, 0), Make(1, 0)};
  std::vector<int> z{0, 2, 2};
  auto t = BuildTensor(c, AllIndices(c), z, 3);
  auto path = std::filesystem::temp_directory_path() / "cbm_tensor_rt.txt";
  SaveTensor(t, path);
  auto back = LoadTensor(path);
  CHECK(back.entries == t.entries);
  CHECK(back.topics == 3);
  std::filesystem::remove(path);
}

TEST_CASE("topic assignment") {
  Corpus c = SmallCorpus(2, 1);
  for (int w = 0; w < 10; ++w) c.vocabulary.Intern("w" + std::to_string(w));
  for (int d = 0; d < 30; ++d) {
    std::vector<int> words;
    for (int i = 0; i < 6; ++i) words.push_back((d % 2) * 5 + (i + d) % 5);
    c.behaviors.push_back(Make(d % 2, 0, words));
  }
  c.behaviors.push_back(Make(0, 0, {}));
  auto idx = AllIndices(c);
  LdaConfig config;
  config.topics = 2;
  config.alpha = 0.1;
  config.iterations = 100;
  auto a = AssignTopics(c, idx, config, 4);
  CHECK(a.topic.back() == kNoTopic);
  for (int d = 2; d < 30; ++d) CHECK(a.topic[static_cast<std::size_t>(d)] == a.topic[static_cast<std::size_t>(d % 2)]);
  CHECK(a.topic[0] != a.topic[1]);
  CHECK(AssignTopics(c, idx, config, 4).topic == a.topic);

  config.topics = 1;
  auto single = AssignTopics(c, idx, config, 4);
  for (std::size_t d = 0; d < 30; ++d) CHECK(single.topic[d] == 0);
}

TEST_CASE("sparse and dense reconstruction agree") {
  Rng rng(3);
  auto f = RandomFactors(rng, 5, 4, 3, 2, 3, 2);
  auto dense = Reconstruct(f);
  for (int u = 0; u < 5; ++u) {
    for (int v = 0; v < 4; ++v) {
      for (int z = 0; z < 3; ++z) {
        const double d = dense(u, v, z);
        CHECK(std::abs(ReconstructEntry(f, u, v, z) - d) <= 1e-10 * std::max(1.0, std::abs(d)));
      }
    }
  }
}

TEST_CASE("tucker gradient matches finite differences") {
  Rng rng(5);
  for (SocialForm form : {SocialForm::kPrinted, SocialForm::kDifference}) {
    auto f = RandomFactors(rng, 4, 3, 3, 2, 2, 2);
    Tensor3 A(4, 3, 3);
    for (double& x : A.v) x = std::floor(3 * rng.Uniform());
    std::vector<std::pair<UserId, UserId>> friends{{0, 1}, {1, 3}, {0, 2}};
    const double lambda = 0.7;
    auto g = TuckerGradient(A, f, friends, lambda, form);
    auto analytic = Parameters(g);
    auto params = Parameters(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      const double h = 1e-5;
      *params[i] = saved + h;
      const double up = TuckerObjective(A, f, friends, lambda, form);
      *params[i] = saved - h;
      const double down = TuckerObjective(A, f, friends, lambda, form);
      *params[i] = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - *analytic[i]) / std::max(1.0, std::abs(*analytic[i])));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("tucker recovers an exactly low-rank tensor") {
  Rng rng(9);
  auto truth = RandomFactors(rng, 6, 5, 4, 2, 2, 2);
  Tensor3 A = Reconstruct(truth);
  TuckerConfig config;
  config.dim_users = config.dim_venues = config.dim_topics = 2;
  config.lambda = 0.0;
  config.iterations = 5000;
  config.init_scale = 0.5;
  auto f = TuckerDecompose(A, {}, config, 2);
  Tensor3 X = Reconstruct(f);
  double err = 0.0, norm = 0.0;
  for (std::size_t n = 0; n < A.v.size(); ++n) {
    err += (A.v[n] - X.v[n]) * (A.v[n] - X.v[n]);
    norm += A.v[n] * A.v[n];
  }
  CHECK(std::sqrt(err / norm) <= 1e-3);
  for (std::size_t i = 1; i < f.trace.size(); ++i) CHECK(f.trace[i] <= f.trace[i - 1]);
}

TEST_CASE("tucker trace is non-increasing with the social term") {
  Rng rng(10);
  Tensor3 A(8, 6, 3);
  for (double& x : A.v) x = rng.Uniform() < 0.2 ? 1.0 : 0.0;
  std::vector<std::pair<UserId, UserId>> friends{{0, 1}, {2, 3}, {1, 4}};
  for (SocialForm form : {SocialForm::kPrinted, SocialForm::kDifference}) {
    TuckerConfig config;
    config.dim_users = 3;
    config.dim_venues = 3;
    config.dim_topics = 2;
    config.lambda = 0.1;
    config.iterations = 300;
    config.social = form;
    auto f = TuckerDecompose(A, friends, config, 4);
    CHECK(f.trace.size() >= 2);
    for (std::size_t i = 1; i < f.trace.size(); ++i) CHECK(f.trace[i] <= f.trace[i - 1]);
    CHECK(f.trace.back() < f.trace.front());
    auto again = TuckerDecompose(A, friends, config, 4);
    CHECK(again.trace == f.trace);
  }
  TuckerConfig bad;
  bad.dim_users = 9;
  CHECK_THROWS_AS(TuckerDecompose(A, friends, bad, 1), Error);
}

TEST_CASE("latent behavior injection") {
  Corpus c = SmallCorpus(4, 6);
  for (int w = 0; w < 5; ++w) c.vocabulary.Intern("w" + std::to_string(w));
  c.behaviors = {Make(1, 0), Make(1, 2), Make(1, 3), Make(2, 4), Make(2, 5), Make(3, 1)};
  std::vector<int> topics{0, 1, 0, 1, 0, 1};
  auto idx = AllIndices(c);
  auto tensor = BuildTensor(c, idx, topics, 2);
  Rng rng(12);
  auto f = RandomFactors(rng, 4, 6, 2, 2, 2, 2);
  MatrixD phi(2, 5);
  for (std::size_t w = 0; w < 5; ++w) {
    phi(0, w) = 0.1 + 0.05 * static_cast<double>(w);
    phi(1, w) = 0.3 - 0.05 * static_cast<double>(w);
  }

  SUBCASE("no friends, no injection") {
    CHECK(InjectLatentBehaviors(c, tensor, f, phi).empty());
  }
  SUBCASE("top-k by reconstruction among friend support") {
    c.SetFriends({{0, 1}, {0, 2}, {3, 2}});
    auto injected = InjectLatentBehaviors(c, tensor, f, phi, 3, 3, 77);
    std::vector<std::vector<Behavior>> by_user(4);
    for (const auto& b : injected) {
      CHECK(b.synthetic);
      CHECK(b.timestamp == 77);
      CHECK(b.label == Label::kNormal);
      by_user[static_cast<std::size_t>(b.user)].push_back(b);
    }
    // Friend support: user 0 has 5 triples (via 1 and 2), user 1 none (0 is
    // empty), user 2 one (via 3), user 3 two (via 2).
    CHECK(by_user[0].size() == 3);
    CHECK(by_user[1].empty());
    CHECK(by_user[2].size() == 1);
    CHECK(by_user[3].size() == 2);
    const auto& for_user0 = by_user[0];

    // Brute force: rank user 0's support by direct reconstruction.
    std::vector<std::pair<double, int>> scored;
    for (int n : {0, 1, 2, 3, 4}) {
      const auto& b = c.behaviors[static_cast<std::size_t>(n)];
      scored.push_back({ReconstructEntry(f, 0, b.venue, topics[static_cast<std::size_t>(n)]), n});
    }
    std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (int r = 0; r < 3; ++r) {
      const auto& src = c.behaviors[static_cast<std::size_t>(scored[static_cast<std::size_t>(r)].second)];
      const int z = topics[static_cast<std::size_t>(scored[static_cast<std::size_t>(r)].second)];
      CHECK(for_user0[static_cast<std::size_t>(r)].venue == src.venue);
      CHECK(for_user0[static_cast<std::size_t>(r)].words ==
            (z == 0 ? std::vector<int>{4, 3, 2} : std::vector<int>{0, 1, 2}));
      CHECK(tensor.At(src.user, src.venue, z) > 0.0);
    }
    auto many = InjectLatentBehaviors(c, tensor, f, phi, 20);
    std::size_t user0 = 0;
    for (const auto& b : many) user0 += b.user == 0;
    CHECK(user0 == 5);
  }
}
