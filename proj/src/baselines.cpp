#include "cbm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cbm/error.hpp"
#include "cbm/random.hpp"

namespace cbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogKernel(double dx, double dy, double h) {
  return -std::log(2.0 * std::numbers::pi * h) - 0.5 * (dx * dx + dy * dy) / h;
}

double LogSumExp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

// log f_KDE with equal weights.
double LogKde(std::span<const PlanarPoint> points, double h, PlanarPoint q) {
  std::vector<double> logs(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    logs[j] = LogKernel(q.x - points[j].x, q.y - points[j].y, h);
  }
  return LogSumExp(logs) - std::log(static_cast<double>(points.size()));
}

double LogWeightedKde(std::span<const PlanarPoint> points, std::span<const double> weights, double h,
                      PlanarPoint q) {
  bool all_equal = true;
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    total += std::max(0.0, weights[j]);
    if (weights[j] != weights[0]) all_equal = false;
  }
  if (all_equal || total <= 0.0) return LogKde(points, h, q);
  std::vector<double> logs;
  logs.reserve(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    logs.push_back(std::log(weights[j]) + LogKernel(q.x - points[j].x, q.y - points[j].y, h));
  }
  return LogSumExp(logs) - std::log(total);
}

std::vector<PlanarPoint> Points(std::span<const KdeRecord> records) {
  std::vector<PlanarPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.at);
  return out;
}

}  // namespace

double GaussianKernel(double dx, double dy, double h) { return std::exp(LogKernel(dx, dy, h)); }

double KdeDensity(std::span<const PlanarPoint> points, double h, PlanarPoint query) {
  Require(!points.empty(), "kernel density needs at least one point");
  Require(h > 0.0, "kernel bandwidth must be positive");
  return std::exp(LogKde(points, h, query));
}

double WeightedKdeDensity(std::span<const PlanarPoint> points, std::span<const double> weights,
                          double h, PlanarPoint query) {
  Require(!points.empty(), "kernel density needs at least one point");
  Require(points.size() == weights.size(), "one weight per point is required");
  Require(h > 0.0, "kernel bandwidth must be positive");
  return std::exp(LogWeightedKde(points, weights, h, query));
}

double SilvermanBandwidth(std::span<const PlanarPoint> points, double floor_km) {
  const auto n = static_cast<double>(points.size());
  double sd = 0.0;
  if (points.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
      mx += p.x;
      my += p.y;
    }
    mx /= n;
    my /= n;
    double ss = 0.0;
    for (const auto& p : points) ss += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    const double sigma = std::sqrt(ss / (2.0 * (n - 1.0)));
    sd = sigma * std::pow(n, -1.0 / 6.0);
  }
  sd = std::max(sd, floor_km);
  return sd * sd;
}

std::vector<KdeRecord> KdeModel::SocialRecords(UserId user) const {
  std::vector<KdeRecord> out;
  for (UserId f : friends[static_cast<std::size_t>(user)]) {
    const auto& r = own[static_cast<std::size_t>(f)];
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

KdeModel BuildKde(const Corpus& corpus, std::span<const std::size_t> train, double mix_alpha,
                  double floor_km) {
  Require(mix_alpha >= 0.0 && mix_alpha <= 1.0, "mix_alpha must lie in [0, 1]");
  KdeModel model;
  model.mix_alpha = mix_alpha;
  const auto users = static_cast<std::size_t>(corpus.num_users());
  model.own.resize(users);
  model.friends.resize(users);
  model.bandwidth.assign(users, 0.0);
  for (std::size_t i : train) {
    const auto& b = corpus.behaviors[i];
    const auto& xy = corpus.venue_xy[static_cast<std::size_t>(b.venue)];
    if (!xy) continue;
    model.own[static_cast<std::size_t>(b.user)].push_back(KdeRecord{b.venue, *xy});
  }
  for (std::size_t u = 0; u < users; ++u) model.friends[u] = corpus.friends_of(static_cast<UserId>(u));
  for (std::size_t u = 0; u < users; ++u) {
    // Users without their own history borrow the spread of their friends'.
    auto pts = Points(model.own[u]);
    if (pts.empty()) pts = Points(model.SocialRecords(static_cast<UserId>(u)));
    if (!pts.empty()) model.bandwidth[u] = SilvermanBandwidth(pts, floor_km);
  }
  return model;
}

double MkdeSurprise(const KdeModel& model, UserId user, PlanarPoint at) {
  const auto u = static_cast<std::size_t>(user);
  const auto own = Points(model.own[u]);
  const auto social = Points(model.SocialRecords(user));
  if (own.empty() && social.empty()) {
    Fail(ErrorKind::kInvalidArgument, "user has neither own nor friend locations");
  }
  const double h = model.bandwidth[u];
  if (social.empty()) return -LogKde(own, h, at);
  if (own.empty()) return -LogKde(social, h, at);
  const double a = model.mix_alpha;
  if (a == 1.0) return -LogKde(own, h, at);
  if (a == 0.0) return -LogKde(social, h, at);
  const double parts[2] = {std::log(a) + LogKde(own, h, at), std::log1p(-a) + LogKde(social, h, at)};
  return -LogSumExp(parts);
}

double MfModel::Predict(UserId u, VenueId v) const {
  double dot = 0.0;
  auto a = users.row(static_cast<std::size_t>(u));
  auto b = venues.row(static_cast<std::size_t>(v));
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot;
}

namespace {

// E = U V^T - R
MatrixD Residual(const MatrixD& R, const MatrixD& users, const MatrixD& venues) {
  MatrixD E(R.rows(), R.cols());
  const std::size_t k = users.cols();
  for (std::size_t i = 0; i < R.rows(); ++i) {
    for (std::size_t j = 0; j < R.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < k; ++f) dot += users(i, f) * venues(j, f);
      E(i, j) = dot - R(i, j);
    }
  }
  return E;
}

double SquaredNorm(const MatrixD& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return s;
}

}  // namespace

double MfObjective(const MatrixD& R, const MatrixD& users, const MatrixD& venues, double lambda1,
                   double lambda2) {
  return 0.5 * SquaredNorm(Residual(R, users, venues)) + 0.5 * lambda1 * SquaredNorm(users) +
         0.5 * lambda2 * SquaredNorm(venues);
}

void MfGradient(const MatrixD& R, const MatrixD& users, const MatrixD& venues, double lambda1,
                double lambda2, MatrixD& grad_users, MatrixD& grad_venues) {
  const MatrixD E = Residual(R, users, venues);
  const std::size_t k = users.cols();
  grad_users = MatrixD(users.rows(), k);
  grad_venues = MatrixD(venues.rows(), k);
  for (std::size_t i = 0; i < R.rows(); ++i) {
    for (std::size_t j = 0; j < R.cols(); ++j) {
      const double e = E(i, j);
      if (e == 0.0) continue;
      for (std::size_t f = 0; f < k; ++f) {
        grad_users(i, f) += e * venues(j, f);
        grad_venues(j, f) += e * users(i, f);
      }
    }
  }
  for (std::size_t n = 0; n < users.size(); ++n) grad_users.data()[n] += lambda1 * users.data()[n];
  for (std::size_t n = 0; n < venues.size(); ++n) grad_venues.data()[n] += lambda2 * venues.data()[n];
}

MfModel MfFit(const MatrixD& R, const MfConfig& config, std::uint64_t seed) {
  Require(config.rank >= 1, "matrix factorization rank must be at least 1");
  Require(config.learning_rate > 0.0, "learning rate must be positive");
  Require(config.epochs >= 0, "epochs must be non-negative");
  Require(config.lambda1 >= 0.0 && config.lambda2 >= 0.0, "regularizers must be non-negative");
  const auto k = static_cast<std::size_t>(config.rank);
  Rng rng(seed);
  MfModel model;
  model.lambda1 = config.lambda1;
  model.lambda2 = config.lambda2;
  model.users = MatrixD(R.rows(), k);
  model.venues = MatrixD(R.cols(), k);
  for (double& x : model.users.data()) x = config.init_scale * rng.Normal();
  for (double& x : model.venues.data()) x = config.init_scale * rng.Normal();

  auto objective = [&](const MatrixD& u, const MatrixD& v) {
    return MfObjective(R, u, v, config.lambda1, config.lambda2);
  };
  double current = objective(model.users, model.venues);
  model.trace.push_back(current);
  double step = config.learning_rate;
  MatrixD gu, gv;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    MfGradient(R, model.users, model.venues, config.lambda1, config.lambda2, gu, gv);
    bool accepted = false;
    for (int halving = 0; halving <= 20 && !accepted; ++halving) {
      MatrixD u = model.users;
      MatrixD v = model.venues;
      for (std::size_t n = 0; n < u.size(); ++n) u.data()[n] -= step * gu.data()[n];
      for (std::size_t n = 0; n < v.size(); ++n) v.data()[n] -= step * gv.data()[n];
      const double next = objective(u, v);
      if (!std::isfinite(next) || next > 1e12) {
        if (halving == 20) {
          Fail(ErrorKind::kRuntime, "matrix factorization diverged at epoch " + std::to_string(epoch) +
                                        "; use a smaller learning rate");
        }
        step *= 0.5;
        continue;
      }
      if (next <= current) {
        model.users = std::move(u);
        model.venues = std::move(v);
        current = next;
        accepted = true;
        step *= 1.2;
      } else {
        step *= 0.5;
      }
    }
    model.trace.push_back(current);
    if (!accepted) break;  // no descent at any tried step size
  }
  return model;
}

MatrixD VisitMatrix(const Corpus& corpus, std::span<const std::size_t> train) {
  MatrixD R(static_cast<std::size_t>(corpus.num_users()), static_cast<std::size_t>(corpus.num_venues()));
  for (std::size_t i : train) {
    const auto& b = corpus.behaviors[i];
    R(static_cast<std::size_t>(b.user), static_cast<std::size_t>(b.venue)) = 1.0;
  }
  return R;
}

MfModel MfTrain(const Corpus& corpus, std::span<const std::size_t> train, const MfConfig& config,
                std::uint64_t seed) {
  return MfFit(VisitMatrix(corpus, train), config, seed);
}

double CfkdeSurprise(const KdeModel& kde, const MfModel& mf, UserId user, PlanarPoint at) {
  const auto u = static_cast<std::size_t>(user);
  std::vector<KdeRecord> records = kde.own[u];
  auto social = kde.SocialRecords(user);
  records.insert(records.end(), social.begin(), social.end());
  if (records.empty()) Fail(ErrorKind::kInvalidArgument, "user has no historical locations");
  std::vector<PlanarPoint> points;
  std::vector<double> weights;
  for (const auto& r : records) {
    points.push_back(r.at);
    weights.push_back(std::max(0.0, mf.Predict(user, r.venue)));
  }
  return -LogWeightedKde(points, weights, kde.bandwidth[u], at);
}

LdaFit FitLda(const std::vector<std::vector<WordId>>& docs, int words, int topics, double alpha,
              double beta, int iterations, std::uint64_t seed) {
  Require(topics >= 1, "LDA needs at least one topic");
  Require(words >= 1, "LDA needs a non-empty vocabulary");
  Require(beta > 0.0, "LDA beta must be positive");
  Require(iterations >= 0, "LDA iterations must be non-negative");
  if (alpha <= 0.0) alpha = 50.0 / topics;
  const auto K = static_cast<std::size_t>(topics);
  const auto W = static_cast<std::size_t>(words);
  Rng rng(seed);
  MatrixI n_dk(docs.size(), K);
  MatrixI n_kw(K, W);
  std::vector<int> n_k(K, 0);
  LdaFit fit;
  fit.assignments.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    auto& z = fit.assignments[d];
    z.resize(docs[d].size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = static_cast<int>(rng.Index(K));
      ++n_dk(d, static_cast<std::size_t>(z[i]));
      ++n_kw(static_cast<std::size_t>(z[i]), static_cast<std::size_t>(docs[d][i]));
      ++n_k[static_cast<std::size_t>(z[i])];
    }
  }
  const double wbeta = static_cast<double>(W) * beta;
  std::vector<double> weights(K);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      auto& z = fit.assignments[d];
      for (std::size_t i = 0; i < z.size(); ++i) {
        const auto w = static_cast<std::size_t>(docs[d][i]);
        auto old = static_cast<std::size_t>(z[i]);
        --n_dk(d, old);
        --n_kw(old, w);
        --n_k[old];
        for (std::size_t k = 0; k < K; ++k) {
          weights[k] = (n_dk(d, k) + alpha) * (n_kw(k, w) + beta) / (n_k[k] + wbeta);
        }
        const auto k = rng.Categorical(weights);
        z[i] = static_cast<int>(k);
        ++n_dk(d, k);
        ++n_kw(k, w);
        ++n_k[k];
      }
    }
  }
  fit.phi = MatrixD(K, W);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t w = 0; w < W; ++w) fit.phi(k, w) = (n_kw(k, w) + beta) / (n_k[k] + wbeta);
  }
  fit.theta = MatrixD(docs.size(), K);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const double len = static_cast<double>(docs[d].size());
    for (std::size_t k = 0; k < K; ++k) {
      fit.theta(d, k) = (n_dk(d, k) + alpha) / (len + static_cast<double>(K) * alpha);
    }
  }
  return fit;
}

LdaModel LdaTrain(const Corpus& corpus, std::span<const std::size_t> train, const LdaConfig& config,
                  std::uint64_t seed) {
  Require(config.topics >= 2, "the LDA baseline needs at least two topics");
  const auto users = static_cast<std::size_t>(corpus.num_users());
  std::vector<std::vector<WordId>> own(users);
  std::vector<bool> seen(users, false);
  for (std::size_t i : train) {
    const auto& b = corpus.behaviors[i];
    seen[static_cast<std::size_t>(b.user)] = true;
    auto& doc = own[static_cast<std::size_t>(b.user)];
    doc.insert(doc.end(), b.words.begin(), b.words.end());
  }
  std::vector<std::vector<WordId>> docs(users);
  for (std::size_t u = 0; u < users; ++u) {
    docs[u] = own[u];
    for (UserId f : corpus.friends_of(static_cast<UserId>(u))) {
      const auto& extra = own[static_cast<std::size_t>(f)];
      docs[u].insert(docs[u].end(), extra.begin(), extra.end());
    }
  }
  const double alpha = config.alpha > 0.0 ? config.alpha : 50.0 / config.topics;
  auto fit = FitLda(docs, std::max(1, corpus.num_words()), config.topics, alpha, config.beta,
                    config.iterations, seed);
  LdaModel model;
  model.topics = config.topics;
  model.alpha = alpha;
  model.phi = std::move(fit.phi);
  model.theta_his = std::move(fit.theta);
  model.seen = seen;
  for (std::size_t u = 0; u < users; ++u) {
    if (seen[u]) continue;
    for (std::size_t k = 0; k < model.theta_his.cols(); ++k) {
      model.theta_his(u, k) = 1.0 / config.topics;
    }
  }
  return model;
}

std::vector<double> TopicProportion(std::span<const double> counts, double alpha) {
  double total = 0.0;
  for (double c : counts) total += c + alpha;
  std::vector<double> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) out[k] = (counts[k] + alpha) / total;
  return out;
}

std::vector<double> LdaFoldIn(const LdaModel& model, std::span<const WordId> words, int passes,
                              std::uint64_t seed) {
  const auto K = static_cast<std::size_t>(model.topics);
  std::vector<double> mean(K, 0.0);
  if (words.empty() || passes <= 0) return TopicProportion(mean, model.alpha);
  Rng rng(seed);
  std::vector<double> weights(K);
  std::vector<int> z(words.size());
  std::vector<int> n(K, 0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) weights[k] = model.phi(k, static_cast<std::size_t>(words[i]));
    z[i] = static_cast<int>(rng.Categorical(weights));
    ++n[static_cast<std::size_t>(z[i])];
  }
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      --n[static_cast<std::size_t>(z[i])];
      for (std::size_t k = 0; k < K; ++k) {
        weights[k] = model.phi(k, static_cast<std::size_t>(words[i])) * (n[k] + model.alpha);
      }
      z[i] = static_cast<int>(rng.Categorical(weights));
      ++n[static_cast<std::size_t>(z[i])];
    }
    for (std::size_t k = 0; k < K; ++k) mean[k] += n[k];
  }
  for (double& m : mean) m /= passes;
  return TopicProportion(mean, model.alpha);
}

double JsDivergence(std::span<const double> p, std::span<const double> q) {
  Require(p.size() == q.size(), "JS divergence needs vectors of equal length");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) total += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) total += q[i] * std::log(q[i] / m);
  }
  return std::clamp(0.5 * total, 0.0, std::numbers::ln2);
}

std::vector<double> GridThresholds(std::span<const double> scores, int grid) {
  Require(grid >= 1, "fused grid size must be at least 1");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out{-std::numeric_limits<double>::infinity()};
  for (int i = 1; i < grid && !sorted.empty(); ++i) {
    const auto at = static_cast<std::size_t>(static_cast<double>(i) * sorted.size() / grid);
    out.push_back(sorted[std::min(at, sorted.size() - 1)]);
  }
  out.push_back(std::numeric_limits<double>::infinity());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<RocPoint> RocConvexHull(std::vector<RocPoint> points) {
  points.push_back({0.0, 0.0});
  points.push_back({1.0, 1.0});
  std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr;
  });
  std::vector<RocPoint> hull;
  for (const auto& p : points) {
    while (hull.size() >= 2) {
      const auto& o = hull[hull.size() - 2];
      const auto& a = hull.back();
      const double cross = (a.fpr - o.fpr) * (p.tpr - o.tpr) - (a.tpr - o.tpr) * (p.fpr - o.fpr);
      if (cross < 0.0) break;
      hull.pop_back();
    }
    hull.push_back(p);
  }
  return hull;
}

double TrapezoidArea(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

FusedResult FusedEvaluate(std::span<const double> score_a, std::span<const double> score_b,
                          std::span<const int> positive, int grid) {
  Require(score_a.size() == score_b.size() && score_a.size() == positive.size(),
          "fused evaluation needs aligned score lists");
  std::size_t pos = 0;
  for (int p : positive) pos += p ? 1 : 0;
  const std::size_t neg = positive.size() - pos;
  Require(pos > 0 && neg > 0, "fused evaluation needs both classes");

  const auto ta = GridThresholds(score_a, grid);
  const auto tb = GridThresholds(score_b, grid);
  FusedResult result;
  result.points.reserve(ta.size() * tb.size());
  for (double a : ta) {
    for (double b : tb) {
      std::size_t tp = 0, fp = 0;
      for (std::size_t i = 0; i < positive.size(); ++i) {
        if (score_a[i] > a || score_b[i] > b) (positive[i] ? tp : fp)++;
      }
      result.points.push_back(
          {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
    }
  }
  result.frontier = RocConvexHull(result.points);
  result.auc = TrapezoidArea(result.frontier);
  return result;
}

}  // namespace cbm
