#include "cbm/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cbm/error.hpp"
#include "cbm/scoring.hpp"
#include "cbm/text.hpp"

namespace cbm {

Hyperparams Hyperparams::Defaults(int communities, int topics) {
  Hyperparams h;
  h.communities = communities;
  h.topics = topics;
  h.alpha = 50.0 / topics;
  h.gamma = 50.0 / communities;
  h.beta = 0.01;
  h.eta = 0.01;
  return h;
}

void Hyperparams::Validate() const {
  Require(communities >= 1, "community count must be at least 1");
  Require(topics >= 1, "topic count must be at least 1");
  Require(alpha > 0.0 && beta > 0.0 && gamma > 0.0 && eta > 0.0, "Dirichlet priors must be positive");
}

GibbsState::GibbsState(int users, int venues, int words, const Hyperparams& hyper)
    : n_uc(static_cast<std::size_t>(users), static_cast<std::size_t>(hyper.communities)),
      n_cz(static_cast<std::size_t>(hyper.communities), static_cast<std::size_t>(hyper.topics)),
      n_cv(static_cast<std::size_t>(hyper.communities), static_cast<std::size_t>(venues)),
      n_zw(static_cast<std::size_t>(hyper.topics), static_cast<std::size_t>(words)),
      n_u(static_cast<std::size_t>(users), 0),
      n_c_z(static_cast<std::size_t>(hyper.communities), 0),
      n_c_v(static_cast<std::size_t>(hyper.communities), 0),
      n_z(static_cast<std::size_t>(hyper.topics), 0) {}

void GibbsState::Apply(const Behavior& b, int c, int z, int sign) {
  const auto u = static_cast<std::size_t>(b.user);
  const auto cc = static_cast<std::size_t>(c);
  const auto zz = static_cast<std::size_t>(z);
  n_uc(u, cc) += sign;
  n_u[u] += sign;
  n_cz(cc, zz) += sign;
  n_c_z[cc] += sign;
  n_cv(cc, static_cast<std::size_t>(b.venue)) += sign;
  n_c_v[cc] += sign;
  for (WordId w : b.words) n_zw(zz, static_cast<std::size_t>(w)) += sign;
  n_z[zz] += sign * static_cast<int>(b.words.size());
}

void GibbsState::CheckConsistency(std::span<const Behavior> docs) const {
  Hyperparams shape;
  shape.communities = communities();
  shape.topics = topics();
  GibbsState fresh(static_cast<int>(n_uc.rows()), static_cast<int>(n_cv.cols()),
                   static_cast<int>(n_zw.cols()), shape);
  if (community.size() != docs.size() || topic.size() != docs.size()) {
    Fail(ErrorKind::kRuntime, "assignment count differs from behavior count");
  }
  for (std::size_t i = 0; i < docs.size(); ++i) fresh.Apply(docs[i], community[i], topic[i], +1);
  auto row_sums_ok = [](const MatrixI& m, const std::vector<int>& sums) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      long total = 0;
      for (int x : m.row(r)) {
        if (x < 0) return false;
        total += x;
      }
      if (total != sums[r]) return false;
    }
    return true;
  };
  if (!(fresh.n_uc == n_uc && fresh.n_cz == n_cz && fresh.n_cv == n_cv && fresh.n_zw == n_zw)) {
    Fail(ErrorKind::kRuntime, "count tables disagree with assignments");
  }
  if (!row_sums_ok(n_uc, n_u) || !row_sums_ok(n_cz, n_c_z) || !row_sums_ok(n_cv, n_c_v) ||
      !row_sums_ok(n_zw, n_z)) {
    Fail(ErrorKind::kRuntime, "cached row sums disagree with count tables");
  }
  if (n_c_z != n_c_v) Fail(ErrorKind::kRuntime, "community totals differ between topic and venue tables");
}

void CbmModel::CheckNormalized(double tolerance) const {
  for (const auto* m : {&pi, &theta, &vartheta, &phi}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double total = 0.0;
      for (double x : m->row(r)) {
        if (!(x >= 0.0)) Fail(ErrorKind::kRuntime, "negative or NaN model entry");
        total += x;
      }
      if (std::abs(total - 1.0) > tolerance) Fail(ErrorKind::kRuntime, "model row does not sum to 1");
    }
  }
}

bool CbmModel::operator==(const CbmModel& other) const {
  return hyper.communities == other.hyper.communities && hyper.topics == other.hyper.topics &&
         hyper.alpha == other.hyper.alpha && hyper.beta == other.hyper.beta &&
         hyper.gamma == other.hyper.gamma && hyper.eta == other.hyper.eta && pi == other.pi &&
         theta == other.theta && vartheta == other.vartheta && phi == other.phi &&
         users == other.users && venues == other.venues && vocabulary == other.vocabulary;
}

std::vector<double> CommunityWeights(const GibbsState& state, const Hyperparams& hyper,
                                     const Behavior& b, int topic) {
  const auto C = static_cast<std::size_t>(state.communities());
  const double z_mass = hyper.topics * hyper.alpha;
  const double v_mass = static_cast<double>(state.n_cv.cols()) * hyper.eta;
  const auto u = static_cast<std::size_t>(b.user);
  const auto v = static_cast<std::size_t>(b.venue);
  const auto z = static_cast<std::size_t>(topic);
  std::vector<double> weights(C);
  for (std::size_t c = 0; c < C; ++c) {
    weights[c] = (state.n_uc(u, c) + hyper.gamma) *
                 ((state.n_cz(c, z) + hyper.alpha) / (state.n_c_z[c] + z_mass)) *
                 ((state.n_cv(c, v) + hyper.eta) / (state.n_c_v[c] + v_mass));
  }
  return weights;
}

std::vector<double> TopicLogWeights(const GibbsState& state, const Hyperparams& hyper,
                                    const Behavior& b, int community, TopicConditional form) {
  const auto Z = static_cast<std::size_t>(state.topics());
  const double w_mass = static_cast<double>(state.n_zw.cols()) * hyper.beta;
  const auto c = static_cast<std::size_t>(community);
  const auto& words = b.words;

  // repeats[i]: earlier occurrences of words[i] within the bag.
  std::vector<int> repeats(words.size(), 0);
  if (form == TopicConditional::kCollapsed) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) repeats[i] += words[j] == words[i];
    }
  }
  std::vector<double> log_weights(Z);
  for (std::size_t z = 0; z < Z; ++z) {
    double value = std::log(state.n_cz(c, z) + hyper.alpha);
    const double base = state.n_z[z] + w_mass;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const double count = state.n_zw(z, static_cast<std::size_t>(words[i])) + hyper.beta;
      if (form == TopicConditional::kCollapsed) {
        value += std::log(count + repeats[i]) - std::log(base + static_cast<double>(i));
      } else {
        value += std::log(count) - std::log(base);
      }
    }
    log_weights[z] = value;
  }
  return log_weights;
}

namespace {

void NormalizeInPlace(std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
}

void ExpShiftInPlace(std::vector<double>& log_w) {
  double hi = *std::max_element(log_w.begin(), log_w.end());
  for (double& x : log_w) x = std::exp(x - hi);
}

}  // namespace

std::vector<double> CommunityConditional(const GibbsState& state, const Hyperparams& hyper,
                                         const Behavior& b, int topic) {
  auto w = CommunityWeights(state, hyper, b, topic);
  NormalizeInPlace(w);
  return w;
}

std::vector<double> TopicConditionalProbabilities(const GibbsState& state, const Hyperparams& hyper,
                                                  const Behavior& b, int community,
                                                  TopicConditional form) {
  auto w = TopicLogWeights(state, hyper, b, community, form);
  ExpShiftInPlace(w);
  NormalizeInPlace(w);
  return w;
}

GibbsState InitializeState(std::span<const Behavior> docs, int users, int venues, int words,
                           const Hyperparams& hyper, Rng& rng) {
  hyper.Validate();
  GibbsState state(users, venues, words, hyper);
  state.community.resize(docs.size());
  state.topic.resize(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    state.community[i] = static_cast<int>(rng.Index(static_cast<std::size_t>(hyper.communities)));
    state.topic[i] = static_cast<int>(rng.Index(static_cast<std::size_t>(hyper.topics)));
    state.Apply(docs[i], state.community[i], state.topic[i], +1);
  }
  return state;
}

void GibbsSweep(GibbsState& state, const Hyperparams& hyper, std::span<const Behavior> docs, Rng& rng,
                TopicConditional form) {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& b = docs[i];
    state.Apply(b, state.community[i], state.topic[i], -1);
    auto cw = CommunityWeights(state, hyper, b, state.topic[i]);
    const int c = static_cast<int>(rng.Categorical(cw));
    auto zw = TopicLogWeights(state, hyper, b, c, form);
    ExpShiftInPlace(zw);
    const int z = static_cast<int>(rng.Categorical(zw));
    state.community[i] = c;
    state.topic[i] = z;
    state.Apply(b, c, z, +1);
  }
}

namespace {

MatrixD SmoothRows(const MatrixI& counts, double prior) {
  MatrixD out(counts.rows(), counts.cols());
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    double total = 0.0;
    for (int x : counts.row(r)) total += x + prior;
    for (std::size_t c = 0; c < counts.cols(); ++c) out(r, c) = (counts(r, c) + prior) / total;
  }
  return out;
}

void AddInto(MatrixD& acc, const MatrixD& x) {
  for (std::size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += x.data()[i];
}

void ScaleInPlace(MatrixD& m, double factor) {
  for (double& x : m.data()) x *= factor;
}

}  // namespace

CbmModel Estimate(const GibbsState& state, const Hyperparams& hyper) {
  CbmModel model;
  model.hyper = hyper;
  model.pi = SmoothRows(state.n_uc, hyper.gamma);
  model.theta = SmoothRows(state.n_cz, hyper.alpha);
  model.vartheta = SmoothRows(state.n_cv, hyper.eta);
  model.phi = SmoothRows(state.n_zw, hyper.beta);
  return model;
}

TrainResult Train(std::span<const Behavior> docs, int users, int venues, int words,
                  const Hyperparams& hyper, const TrainSchedule& schedule, std::uint64_t seed) {
  hyper.Validate();
  Require(schedule.burn_in >= 0, "burn-in must be non-negative");
  Require(schedule.iterations > schedule.burn_in, "iterations must exceed burn-in");
  Require(schedule.lag >= 1, "lag must be at least 1");
  Require(users >= 1 && venues >= 1 && words >= 1, "model dimensions must be positive");

  Rng rng(seed);
  GibbsState state = InitializeState(docs, users, venues, words, hyper, rng);

  TrainResult result;
  CbmModel sum;
  for (int it = 1; it <= schedule.iterations; ++it) {
    GibbsSweep(state, hyper, docs, rng, schedule.form);
    if (it > schedule.burn_in && it % schedule.lag == 0) {
      CbmModel current = Estimate(state, hyper);
      double total = 0.0;
      for (const auto& b : docs) total += LogarithmicScore(current, b);
      result.mean_log_score.push_back(docs.empty() ? 0.0 : total / static_cast<double>(docs.size()));
      result.accumulation_iterations.push_back(it);
      if (result.accumulated == 0) {
        sum = std::move(current);
      } else {
        AddInto(sum.pi, current.pi);
        AddInto(sum.theta, current.theta);
        AddInto(sum.vartheta, current.vartheta);
        AddInto(sum.phi, current.phi);
      }
      ++result.accumulated;
    }
  }
  if (result.accumulated == 0) {
    result.model = Estimate(state, hyper);
    return result;
  }
  if (result.accumulated > 1) {
    const double inv = 1.0 / result.accumulated;
    ScaleInPlace(sum.pi, inv);
    ScaleInPlace(sum.theta, inv);
    ScaleInPlace(sum.vartheta, inv);
    ScaleInPlace(sum.phi, inv);
  }
  result.model = std::move(sum);
  return result;
}

std::vector<Behavior> Gather(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<Behavior> docs;
  docs.reserve(indices.size());
  for (std::size_t i : indices) docs.push_back(corpus.behaviors[i]);
  return docs;
}

TrainResult Train(const Corpus& corpus, std::span<const std::size_t> train, const Hyperparams& hyper,
                  const TrainSchedule& schedule, std::uint64_t seed) {
  auto docs = Gather(corpus, train);
  auto result = Train(docs, std::max(1, corpus.num_users()), std::max(1, corpus.num_venues()),
                      std::max(1, corpus.num_words()), hyper, schedule, seed);
  result.model.users = corpus.users;
  result.model.venues = corpus.venues;
  result.model.vocabulary = corpus.vocabulary;
  return result;
}

CountDistribution CountDistribution::Parse(const std::string& spec, int minimum) {
  CountDistribution d;
  d.minimum = minimum;
  auto colon = spec.find(':');
  if (colon == std::string::npos) Fail(ErrorKind::kConfig, "count distribution '" + spec + "' lacks ':'");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "uniform") {
    auto dash = arg.find('-');
    auto lo = dash == std::string::npos ? std::nullopt : text::Parse<double>(arg.substr(0, dash));
    auto hi = dash == std::string::npos ? std::nullopt : text::Parse<double>(arg.substr(dash + 1));
    if (!lo || !hi || *lo > *hi || *lo < 0) Fail(ErrorKind::kConfig, "bad uniform range '" + arg + "'");
    d.kind = Kind::kUniform;
    d.a = *lo;
    d.b = *hi;
    return d;
  }
  auto value = text::Parse<double>(arg);
  if (!value || *value < 0) Fail(ErrorKind::kConfig, "bad count distribution argument '" + arg + "'");
  d.a = *value;
  if (kind == "fixed") {
    d.kind = Kind::kFixed;
  } else if (kind == "poisson") {
    d.kind = Kind::kPoisson;
  } else if (kind == "geometric") {
    d.kind = Kind::kGeometric;
    if (*value < minimum) Fail(ErrorKind::kConfig, "geometric mean below the minimum count");
  } else {
    Fail(ErrorKind::kConfig, "unknown count distribution '" + kind + "'");
  }
  return d;
}

int CountDistribution::Sample(Rng& rng) const {
  int n = 0;
  switch (kind) {
    case Kind::kFixed:
      n = static_cast<int>(a);
      break;
    case Kind::kPoisson:
      n = rng.Poisson(a);
      break;
    case Kind::kGeometric: {
      // Number of extra counts above the minimum is geometric with the right mean.
      const double extra_mean = a - minimum;
      std::geometric_distribution<int> dist(1.0 / (extra_mean + 1.0));
      n = minimum + dist(rng.engine());
      break;
    }
    case Kind::kUniform:
      n = static_cast<int>(a) + static_cast<int>(rng.Index(static_cast<std::size_t>(b - a) + 1));
      break;
  }
  return std::max(n, minimum);
}

std::string CountDistribution::ToString() const {
  switch (kind) {
    case Kind::kFixed: return "fixed:" + text::FormatDouble(a);
    case Kind::kPoisson: return "poisson:" + text::FormatDouble(a);
    case Kind::kGeometric: return "geometric:" + text::FormatDouble(a);
    case Kind::kUniform: return "uniform:" + text::FormatDouble(a) + "-" + text::FormatDouble(b);
  }
  return {};
}

GeneratedCorpus GenerateCorpus(const GeneratorConfig& config, std::uint64_t seed) {
  const Hyperparams& h = config.hyper;
  h.Validate();
  Require(config.users >= 1 && config.venues >= 1 && config.words >= 1, "generator counts must be >= 1");
  const auto C = static_cast<std::size_t>(h.communities);
  const auto Z = static_cast<std::size_t>(h.topics);
  const auto U = static_cast<std::size_t>(config.users);
  const auto V = static_cast<std::size_t>(config.venues);
  const auto W = static_cast<std::size_t>(config.words);

  Rng rng(seed);
  CbmModel truth;
  truth.hyper = h;
  truth.theta = MatrixD(C, Z);
  truth.vartheta = MatrixD(C, V);
  truth.phi = MatrixD(Z, W);
  truth.pi = MatrixD(U, C);
  auto fill_row = [](MatrixD& m, std::size_t r, const std::vector<double>& values) {
    std::copy(values.begin(), values.end(), m.row(r).begin());
  };
  for (std::size_t c = 0; c < C; ++c) {
    fill_row(truth.theta, c, rng.Dirichlet(Z, h.alpha));
    fill_row(truth.vartheta, c, rng.Dirichlet(V, h.eta));
  }
  for (std::size_t z = 0; z < Z; ++z) fill_row(truth.phi, z, rng.Dirichlet(W, h.beta));
  for (std::size_t u = 0; u < U; ++u) fill_row(truth.pi, u, rng.Dirichlet(C, h.gamma));

  CbmModel drifted = truth;
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t c = 0; c < C; ++c) drifted.pi(u, c) = truth.pi(u, (c + 1) % C);
  }

  GeneratedCorpus out;
  Corpus& corpus = out.corpus;
  for (std::size_t u = 0; u < U; ++u) corpus.users.Intern("u" + std::to_string(u));
  for (std::size_t v = 0; v < V; ++v) {
    corpus.venues.Intern("v" + std::to_string(v));
    const double lat = config.center_lat + (2.0 * rng.Uniform() - 1.0) * config.spread_deg;
    const double lon = config.center_lon + (2.0 * rng.Uniform() - 1.0) * config.spread_deg;
    corpus.venue_geo.push_back(GeoPoint{lat, lon});
  }
  for (std::size_t w = 0; w < W; ++w) corpus.vocabulary.Intern("w" + std::to_string(w));
  corpus.word_frequency.assign(W, 0);

  std::vector<int> per_user(U);
  int rounds = 0;
  for (auto& n : per_user) {
    n = config.behaviors_per_user.Sample(rng);
    rounds = std::max(rounds, n);
  }
  const int drift_round = (config.drift_after > 0.0 && config.drift_after < 1.0)
                              ? static_cast<int>(std::ceil(config.drift_after * rounds))
                              : std::numeric_limits<int>::max();

  std::int64_t clock = 0;
  for (int r = 0; r < rounds; ++r) {
    const CbmModel& params = r >= drift_round ? drifted : truth;
    for (std::size_t u = 0; u < U; ++u) {
      if (per_user[u] <= r) continue;
      Behavior b;
      b.user = static_cast<UserId>(u);
      const auto c = rng.Categorical(params.pi.row(u));
      const auto z = rng.Categorical(params.theta.row(c));
      b.venue = static_cast<VenueId>(rng.Categorical(params.vartheta.row(c)));
      const int n_words = config.words_per_tip.Sample(rng);
      for (int k = 0; k < n_words; ++k) {
        auto w = rng.Categorical(params.phi.row(z));
        b.words.push_back(static_cast<WordId>(w));
        ++corpus.word_frequency[w];
      }
      b.timestamp = clock++;
      corpus.behaviors.push_back(std::move(b));
    }
  }

  // Social ties with homophily on the dominant community.
  std::vector<std::size_t> dominant(U);
  std::vector<std::vector<std::size_t>> by_community(C);
  for (std::size_t u = 0; u < U; ++u) {
    auto row = truth.pi.row(u);
    dominant[u] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    by_community[dominant[u]].push_back(u);
  }
  std::vector<std::pair<UserId, UserId>> ties;
  if (U >= 2) {
    for (std::size_t u = 0; u < U; ++u) {
      for (int k = 0; k < config.friends_per_user; ++k) {
        std::size_t other = u;
        const auto& peers = by_community[dominant[u]];
        if (rng.Uniform() < config.homophily && peers.size() >= 2) {
          while (other == u) other = peers[rng.Index(peers.size())];
        } else {
          while (other == u) other = rng.Index(U);
        }
        ties.emplace_back(static_cast<UserId>(u), static_cast<UserId>(other));
      }
    }
  }
  corpus.SetFriends(std::move(ties));
  corpus.ProjectCoordinates();
  corpus.Validate();

  truth.users = corpus.users;
  truth.venues = corpus.venues;
  truth.vocabulary = corpus.vocabulary;
  drifted.users = corpus.users;
  drifted.venues = corpus.venues;
  drifted.vocabulary = corpus.vocabulary;
  out.truth = std::move(truth);
  out.truth_after_drift = std::move(drifted);
  return out;
}

namespace {

constexpr const char* kModelMagic = "CBMMODEL";
constexpr int kModelVersion = 1;

void WriteMatrix(std::ostream& out, const char* name, const MatrixD& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << text::FormatDouble(row[c]);
    }
    out << '\n';
  }
}

void WriteTable(std::ostream& out, const char* name, const IdTable& table) {
  out << "table " << name << ' ' << table.size() << '\n';
  for (const auto& n : table.names()) out << n << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string Line() {
    std::string line;
    if (!std::getline(in_, line)) Fail(ErrorKind::kInput, "model file truncated at line " + std::to_string(line_ + 1));
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  std::vector<std::string_view> Expect(const std::string& line, std::string_view keyword, std::size_t fields) {
    auto parts = text::SplitView(line, ' ');
    if (parts.size() != fields || parts[0] != keyword) {
      Fail(ErrorKind::kInput, "model file line " + std::to_string(line_) + ": expected '" + std::string(keyword) + "'");
    }
    return parts;
  }

  template <typename T>
  T Number(std::string_view s) {
    auto v = text::Parse<T>(s);
    if (!v) Fail(ErrorKind::kInput, "model file line " + std::to_string(line_) + ": bad number '" + std::string(s) + "'");
    return *v;
  }

  MatrixD ReadMatrix(const char* name) {
    std::string header = Line();
    auto parts = Expect(header, "matrix", 4);
    if (parts[1] != name) Fail(ErrorKind::kInput, std::string("model file: expected matrix ") + name);
    const auto rows = Number<std::size_t>(parts[2]);
    const auto cols = Number<std::size_t>(parts[3]);
    MatrixD m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::string line = Line();
      auto cells = text::SplitView(line, ' ');
      if (cells.size() != cols) Fail(ErrorKind::kInput, "model file line " + std::to_string(line_) + ": wrong column count");
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = Number<double>(cells[c]);
    }
    return m;
  }

  IdTable ReadTable(const char* name) {
    std::string header = Line();
    auto parts = Expect(header, "table", 3);
    if (parts[1] != name) Fail(ErrorKind::kInput, std::string("model file: expected table ") + name);
    const auto n = Number<std::size_t>(parts[2]);
    IdTable table;
    for (std::size_t i = 0; i < n; ++i) table.Intern(Line());
    if (static_cast<std::size_t>(table.size()) != n) Fail(ErrorKind::kInput, std::string("duplicate names in table ") + name);
    return table;
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

}  // namespace

void SaveModel(const CbmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write model file " + path.string());
  WriteModel(model, out);
  if (!out) Fail(ErrorKind::kIo, "failed writing model file " + path.string());
}

void WriteModel(const CbmModel& model, std::ostream& out) {
  const auto& h = model.hyper;
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "dims " << h.communities << ' ' << h.topics << ' ' << model.num_users() << ' '
      << model.num_venues() << ' ' << model.num_words() << '\n';
  out << "priors " << text::FormatDouble(h.alpha) << ' ' << text::FormatDouble(h.beta) << ' '
      << text::FormatDouble(h.gamma) << ' ' << text::FormatDouble(h.eta) << '\n';
  out << "tables_hash " << HashHex(model.tables_hash()) << '\n';
  WriteTable(out, "users", model.users);
  WriteTable(out, "venues", model.venues);
  WriteTable(out, "vocabulary", model.vocabulary);
  WriteMatrix(out, "pi", model.pi);
  WriteMatrix(out, "theta", model.theta);
  WriteMatrix(out, "vartheta", model.vartheta);
  WriteMatrix(out, "phi", model.phi);
  out << "end\n";
}

CbmModel LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open model file " + path.string());
  Reader reader(in);
  CbmModel model;
  {
    std::string line = reader.Line();
    auto parts = reader.Expect(line, kModelMagic, 2);
    if (reader.Number<int>(parts[1]) != kModelVersion) {
      Fail(ErrorKind::kInput, "unsupported model file version " + std::string(parts[1]));
    }
  }
  std::string dims_line = reader.Line();
  auto dims = reader.Expect(dims_line, "dims", 6);
  model.hyper.communities = reader.Number<int>(dims[1]);
  model.hyper.topics = reader.Number<int>(dims[2]);
  std::string priors_line = reader.Line();
  auto priors = reader.Expect(priors_line, "priors", 5);
  model.hyper.alpha = reader.Number<double>(priors[1]);
  model.hyper.beta = reader.Number<double>(priors[2]);
  model.hyper.gamma = reader.Number<double>(priors[3]);
  model.hyper.eta = reader.Number<double>(priors[4]);
  std::string hash_line = reader.Line();
  auto hash = reader.Expect(hash_line, "tables_hash", 2);
  model.users = reader.ReadTable("users");
  model.venues = reader.ReadTable("venues");
  model.vocabulary = reader.ReadTable("vocabulary");
  if (HashHex(model.tables_hash()) != hash[1]) {
    Fail(ErrorKind::kMismatch, "model id tables hash " + HashHex(model.tables_hash()) +
                                   " does not match recorded hash " + std::string(hash[1]));
  }
  model.pi = reader.ReadMatrix("pi");
  model.theta = reader.ReadMatrix("theta");
  model.vartheta = reader.ReadMatrix("vartheta");
  model.phi = reader.ReadMatrix("phi");
  const auto C = static_cast<std::size_t>(model.hyper.communities);
  const auto Z = static_cast<std::size_t>(model.hyper.topics);
  if (model.pi.cols() != C || model.theta.rows() != C || model.theta.cols() != Z ||
      model.vartheta.rows() != C || model.phi.rows() != Z ||
      model.pi.rows() != reader.Number<std::size_t>(dims[3]) ||
      model.vartheta.cols() != reader.Number<std::size_t>(dims[4]) ||
      model.phi.cols() != reader.Number<std::size_t>(dims[5])) {
    Fail(ErrorKind::kInput, "model matrices disagree with the dimension header");
  }
  if (reader.Line() != "end") Fail(ErrorKind::kInput, "model file missing 'end' marker");
  return model;
}

}  // namespace cbm
