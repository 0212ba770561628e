#include "cbm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "cbm/error.hpp"
#include "cbm/random.hpp"

namespace cbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogSumExp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

}  // namespace

UserPrior UserPrior::Empirical(int users, std::span<const Behavior> train) {
  Require(users >= 1, "user prior needs at least one user");
  std::vector<double> counts(static_cast<std::size_t>(users), 1.0);
  for (const auto& b : train) counts[static_cast<std::size_t>(b.user)] += 1.0;
  const double total = static_cast<double>(train.size()) + static_cast<double>(users);
  for (auto& c : counts) c /= total;
  return UserPrior{std::move(counts)};
}

UserPrior UserPrior::Uniform(int users) {
  Require(users >= 1, "user prior needs at least one user");
  return UserPrior{std::vector<double>(static_cast<std::size_t>(users), 1.0 / users)};
}

void UserPrior::Validate() const {
  double total = 0.0;
  for (double x : p) {
    if (!(x > 0.0)) Fail(ErrorKind::kRuntime, "user prior must be strictly positive");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) Fail(ErrorKind::kRuntime, "user prior does not sum to 1");
}

std::vector<double> CommunityLogTerms(const CbmModel& model, VenueId venue,
                                      std::span<const WordId> words) {
  const auto topics = model.theta.cols();
  const auto communities = model.theta.rows();
  std::vector<double> word_term(topics, 0.0);
  if (!words.empty()) {
    const double inv = 1.0 / static_cast<double>(words.size());
    for (std::size_t z = 0; z < topics; ++z) {
      double sum = 0.0;
      for (WordId w : words) sum += std::log(model.phi(z, static_cast<std::size_t>(w)));
      word_term[z] = sum * inv;
    }
  }
  std::vector<double> out(communities);
  std::vector<double> buf(topics);
  for (std::size_t c = 0; c < communities; ++c) {
    for (std::size_t z = 0; z < topics; ++z) buf[z] = std::log(model.theta(c, z)) + word_term[z];
    out[c] = std::log(model.vartheta(c, static_cast<std::size_t>(venue))) + LogSumExp(buf);
  }
  return out;
}

namespace {

double LogLikelihoodFromTerms(const CbmModel& model, UserId user, std::span<const double> terms) {
  std::vector<double> buf(terms.size());
  for (std::size_t c = 0; c < terms.size(); ++c) {
    buf[c] = std::log(model.pi(static_cast<std::size_t>(user), c)) + terms[c];
  }
  return LogSumExp(buf);
}

}  // namespace

double LogLikelihood(const CbmModel& model, UserId user, VenueId venue,
                     std::span<const WordId> words) {
  auto terms = CommunityLogTerms(model, venue, words);
  return LogLikelihoodFromTerms(model, user, terms);
}

double LogLikelihood(const CbmModel& model, const Behavior& b) {
  return LogLikelihood(model, b.user, b.venue, b.words);
}

double BehaviorLikelihood(const CbmModel& model, const Behavior& b) {
  return std::exp(LogLikelihood(model, b));
}

double LogarithmicScore(const CbmModel& model, const Behavior& b) {
  // Clamp the sign of a rounding-level positive log likelihood.
  return std::max(0.0, -LogLikelihood(model, b) / std::numbers::ln10);
}

std::vector<UserId> DrawReferenceUsers(int num_users, UserId claimant, int reference_count,
                                       std::uint64_t seed) {
  Require(reference_count >= 1, "reference_count must be at least 1");
  Require(claimant >= 0 && claimant < num_users, "claimant outside the user table");
  std::vector<UserId> refs;
  if (num_users <= reference_count) {
    refs.resize(static_cast<std::size_t>(num_users));
    for (int u = 0; u < num_users; ++u) refs[static_cast<std::size_t>(u)] = u;
    return refs;
  }
  // Floyd's sampling of reference_count-1 users from the num_users-1 others,
  // with the others indexed by skipping the claimant.
  Rng rng(seed);
  const int others = num_users - 1;
  const int k = reference_count - 1;
  std::set<int> picked;
  for (int j = others - k; j < others; ++j) {
    int t = static_cast<int>(rng.Index(static_cast<std::size_t>(j) + 1));
    if (!picked.insert(t).second) picked.insert(j);
  }
  refs.push_back(claimant);
  for (int idx : picked) refs.push_back(idx < claimant ? idx : idx + 1);
  std::sort(refs.begin(), refs.end());
  return refs;
}

double BlockRelativeScore(const CbmModel& model, std::span<const Behavior> block,
                          const UserPrior& prior, int reference_count, std::uint64_t seed) {
  Require(!block.empty(), "latency block must contain at least one behavior");
  const UserId claimant = block.front().user;
  for (const auto& b : block) Require(b.user == claimant, "latency block mixes claimed users");

  std::vector<std::vector<double>> terms;
  terms.reserve(block.size());
  for (const auto& b : block) terms.push_back(CommunityLogTerms(model, b.venue, b.words));

  const auto refs = DrawReferenceUsers(model.num_users(), claimant, reference_count, seed);
  std::vector<double> joint(refs.size());
  double claimant_joint = kNegInf;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    double value = std::log(prior.p[static_cast<std::size_t>(refs[r])]);
    for (const auto& t : terms) value += LogLikelihoodFromTerms(model, refs[r], t);
    joint[r] = value;
    if (refs[r] == claimant) claimant_joint = value;
  }
  const double denom = LogSumExp(joint);
  if (denom == kNegInf) return 1.0;
  // When the claimant dominates, 1 - share underflows to 0; take the other
  // references' share directly instead.
  std::vector<double> others;
  others.reserve(joint.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (refs[r] != claimant) others.push_back(joint[r]);
  }
  const double rest = others.empty() ? kNegInf : LogSumExp(others);
  if (claimant_joint >= rest) return std::clamp(std::exp(rest - denom), 0.0, 1.0);
  return std::clamp(1.0 - std::exp(claimant_joint - denom), 0.0, 1.0);
}

double RelativeScore(const CbmModel& model, const Behavior& b, const UserPrior& prior,
                     int reference_count, std::uint64_t seed) {
  return BlockRelativeScore(model, std::span<const Behavior>(&b, 1), prior, reference_count, seed);
}

std::vector<ScoredBehavior> ScoreBehaviors(const CbmModel& model, const Corpus& corpus,
                                           std::span<const std::size_t> indices,
                                           const UserPrior& prior, int reference_count,
                                           std::uint64_t seed) {
  std::vector<ScoredBehavior> out;
  out.reserve(indices.size());
  for (std::size_t index : indices) {
    const auto& b = corpus.behaviors[index];
    ScoredBehavior s;
    s.index = index;
    s.user = b.user;
    s.label = b.label;
    s.empty_words = b.words.empty();
    s.s_l = LogarithmicScore(model, b);
    s.s_r = RelativeScore(model, b, prior, reference_count, DeriveSeed(seed, index));
    out.push_back(s);
  }
  return out;
}

ThresholdSelection SelectThreshold(std::span<const double> scores, std::span<const Label> labels,
                                   double lo, double hi, double step) {
  Require(scores.size() == labels.size(), "scores and labels differ in length");
  Require(lo < hi, "threshold scan needs lo < hi");
  Require(step > 0.0, "threshold scan step must be positive");
  std::vector<double> normals;
  std::vector<double> anomalies;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == Label::kAnomalous ? anomalies : normals).push_back(scores[i]);
  }
  std::sort(normals.begin(), normals.end());
  std::sort(anomalies.begin(), anomalies.end());
  auto at_or_above = [](const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };

  ThresholdSelection result;
  result.threshold = hi;
  const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::size_t prev_normals = 0;
  std::size_t prev_anomalies = 0;
  double cost = std::numeric_limits<double>::infinity();
  bool in_run = false;
  bool run_closed = false;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = hi - static_cast<double>(i) * step;
    const std::size_t n = at_or_above(normals, t);
    const std::size_t a = at_or_above(anomalies, t);
    const std::size_t new_normals = n - prev_normals;
    const std::size_t new_anomalies = a - prev_anomalies;
    if (new_anomalies > 0) {
      cost = static_cast<double>(new_normals) / static_cast<double>(new_anomalies);
    } else if (new_normals > 0) {
      cost = std::numeric_limits<double>::infinity();
    }
    prev_normals = n;
    prev_anomalies = a;
    result.cost_curve.emplace_back(t, cost);
    if (run_closed) continue;
    if (cost < 1.0) {
      result.threshold = t;
      result.qualified = true;
      in_run = true;
    } else if (in_run) {
      run_closed = true;
    }
  }
  return result;
}

ThresholdSelection SelectThreshold(std::span<const ScoredBehavior> scored, double lo, double hi,
                                   double step) {
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& s : scored) {
    scores.push_back(s.s_r);
    labels.push_back(s.label);
  }
  return SelectThreshold(scores, labels, lo, hi, step);
}

}  // namespace cbm
