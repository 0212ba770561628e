#include "cbm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "cbm/error.hpp"
#include "cbm/random.hpp"
#include "cbm/text.hpp"

namespace cbm {

Tensor3 ModeProduct(const Tensor3& t, int mode, const MatrixD& m, bool transpose) {
  const std::size_t old_dim = t.dim(mode);
  const std::size_t new_dim = transpose ? m.cols() : m.rows();
  Require((transpose ? m.rows() : m.cols()) == old_dim, "mode product dimension mismatch");
  auto coef = [&](std::size_t i, std::size_t k) { return transpose ? m(k, i) : m(i, k); };
  Tensor3 out(mode == 0 ? new_dim : t.d0, mode == 1 ? new_dim : t.d1, mode == 2 ? new_dim : t.d2);
  for (std::size_t a = 0; a < out.d0; ++a) {
    for (std::size_t b = 0; b < out.d1; ++b) {
      for (std::size_t c = 0; c < out.d2; ++c) {
        double sum = 0.0;
        for (std::size_t k = 0; k < old_dim; ++k) {
          const double x = mode == 0 ? t(k, b, c) : mode == 1 ? t(a, k, c) : t(a, b, k);
          sum += coef(mode == 0 ? a : mode == 1 ? b : c, k) * x;
        }
        out(a, b, c) = sum;
      }
    }
  }
  return out;
}

namespace {

// out(i, j) = sum over the other two modes of x[.. i ..] * y[.. j ..].
MatrixD Contract(const Tensor3& x, const Tensor3& y, int mode) {
  MatrixD out(x.dim(mode), y.dim(mode));
  for (std::size_t a = 0; a < x.d0; ++a) {
    for (std::size_t b = 0; b < x.d1; ++b) {
      for (std::size_t c = 0; c < x.d2; ++c) {
        const double e = x(a, b, c);
        if (e == 0.0) continue;
        for (std::size_t j = 0; j < y.dim(mode); ++j) {
          const double w = mode == 0 ? y(j, b, c) : mode == 1 ? y(a, j, c) : y(a, b, j);
          out(mode == 0 ? a : mode == 1 ? b : c, j) += e * w;
        }
      }
    }
  }
  return out;
}

double SquaredNorm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double SocialTerm(const MatrixD& U, std::span<const std::pair<UserId, UserId>> friends, SocialForm form) {
  double total = 0.0;
  for (auto [i, j] : friends) {
    auto a = U.row(static_cast<std::size_t>(i));
    auto b = U.row(static_cast<std::size_t>(j));
    for (std::size_t k = 0; k < a.size(); ++k) {
      total += form == SocialForm::kPrinted ? a[k] * b[k] : (a[k] - b[k]) * (a[k] - b[k]);
    }
  }
  return total;
}

void Axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t n = 0; n < y.size(); ++n) y[n] += a * x[n];
}

}  // namespace

TopicAssignment AssignTopics(const Corpus& corpus, std::span<const std::size_t> train,
                             const LdaConfig& config, std::uint64_t seed) {
  std::vector<std::vector<WordId>> docs;
  docs.reserve(train.size());
  for (std::size_t i : train) docs.push_back(corpus.behaviors[i].words);
  auto fit = FitLda(docs, std::max(1, corpus.num_words()), config.topics, config.alpha, config.beta,
                    config.iterations, seed);
  TopicAssignment out;
  out.topic.assign(train.size(), kNoTopic);
  std::vector<int> counts(static_cast<std::size_t>(config.topics));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d].empty()) continue;
    std::fill(counts.begin(), counts.end(), 0);
    for (int z : fit.assignments[d]) ++counts[static_cast<std::size_t>(z)];
    out.topic[d] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  out.phi = std::move(fit.phi);
  return out;
}

double FrequencyTensor::At(int user, int venue, int topic) const {
  const TensorEntry key{user, venue, topic, 0.0};
  auto less = [](const TensorEntry& a, const TensorEntry& b) {
    return std::tie(a.user, a.venue, a.topic) < std::tie(b.user, b.venue, b.topic);
  };
  auto it = std::lower_bound(entries.begin(), entries.end(), key, less);
  if (it == entries.end() || less(key, *it)) return 0.0;
  return it->count;
}

double FrequencyTensor::Total() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.count;
  return total;
}

Tensor3 FrequencyTensor::Dense() const {
  Tensor3 out(users, venues, topics);
  for (const auto& e : entries) {
    out(static_cast<std::size_t>(e.user), static_cast<std::size_t>(e.venue), static_cast<std::size_t>(e.topic)) =
        e.count;
  }
  return out;
}

FrequencyTensor BuildTensor(const Corpus& corpus, std::span<const std::size_t> train,
                            std::span<const int> topics, int num_topics) {
  Require(train.size() == topics.size(), "one topic per training behavior is required");
  std::map<std::tuple<int, int, int>, double> counts;
  for (std::size_t n = 0; n < train.size(); ++n) {
    if (topics[n] == kNoTopic) continue;
    Require(topics[n] >= 0 && topics[n] < num_topics, "topic id out of range");
    const auto& b = corpus.behaviors[train[n]];
    counts[{b.user, b.venue, topics[n]}] += 1.0;
  }
  FrequencyTensor tensor;
  tensor.users = static_cast<std::size_t>(corpus.num_users());
  tensor.venues = static_cast<std::size_t>(corpus.num_venues());
  tensor.topics = static_cast<std::size_t>(num_topics);
  for (const auto& [key, count] : counts) {
    tensor.entries.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count});
  }
  return tensor;
}

Tensor3 Reconstruct(const TuckerFactors& f) {
  return ModeProduct(ModeProduct(ModeProduct(f.core, 0, f.U), 1, f.V), 2, f.Z);
}

double ReconstructEntry(const TuckerFactors& f, int user, int venue, int topic) {
  const auto u = static_cast<std::size_t>(user);
  const auto v = static_cast<std::size_t>(venue);
  const auto z = static_cast<std::size_t>(topic);
  double total = 0.0;
  for (std::size_t a = 0; a < f.core.d0; ++a) {
    for (std::size_t b = 0; b < f.core.d1; ++b) {
      for (std::size_t c = 0; c < f.core.d2; ++c) total += f.core(a, b, c) * f.U(u, a) * f.V(v, b) * f.Z(z, c);
    }
  }
  return total;
}

double TuckerObjective(const Tensor3& A, const TuckerFactors& f,
                       std::span<const std::pair<UserId, UserId>> friends, double lambda,
                       SocialForm social) {
  const Tensor3 X = Reconstruct(f);
  double fit = 0.0;
  for (std::size_t n = 0; n < A.v.size(); ++n) fit += (A.v[n] - X.v[n]) * (A.v[n] - X.v[n]);
  const double reg = SquaredNorm(f.core.v) + SquaredNorm(f.U.data()) + SquaredNorm(f.V.data()) +
                     SquaredNorm(f.Z.data()) + SocialTerm(f.U, friends, social);
  return 0.5 * fit + 0.5 * lambda * reg;
}

TuckerFactors TuckerGradient(const Tensor3& A, const TuckerFactors& f,
                             std::span<const std::pair<UserId, UserId>> friends, double lambda,
                             SocialForm social) {
  Tensor3 E = Reconstruct(f);
  for (std::size_t n = 0; n < E.v.size(); ++n) E.v[n] -= A.v[n];

  TuckerFactors g;
  g.lambda = lambda;
  g.core = ModeProduct(ModeProduct(ModeProduct(E, 0, f.U, true), 1, f.V, true), 2, f.Z, true);
  g.U = Contract(E, ModeProduct(ModeProduct(f.core, 1, f.V), 2, f.Z), 0);
  g.V = Contract(E, ModeProduct(ModeProduct(f.core, 0, f.U), 2, f.Z), 1);
  g.Z = Contract(E, ModeProduct(ModeProduct(f.core, 0, f.U), 1, f.V), 2);
  Axpy(g.core.v, lambda, f.core.v);
  Axpy(g.U.data(), lambda, f.U.data());
  Axpy(g.V.data(), lambda, f.V.data());
  Axpy(g.Z.data(), lambda, f.Z.data());
  for (auto [i, j] : friends) {
    auto gi = g.U.row(static_cast<std::size_t>(i));
    auto gj = g.U.row(static_cast<std::size_t>(j));
    auto ui = f.U.row(static_cast<std::size_t>(i));
    auto uj = f.U.row(static_cast<std::size_t>(j));
    for (std::size_t k = 0; k < ui.size(); ++k) {
      if (social == SocialForm::kPrinted) {
        gi[k] += 0.5 * lambda * uj[k];
        gj[k] += 0.5 * lambda * ui[k];
      } else {
        gi[k] += lambda * (ui[k] - uj[k]);
        gj[k] += lambda * (uj[k] - ui[k]);
      }
    }
  }
  return g;
}

TuckerFactors TuckerDecompose(const Tensor3& A, std::span<const std::pair<UserId, UserId>> friends,
                              const TuckerConfig& config, std::uint64_t seed) {
  Require(config.dim_users >= 1 && config.dim_venues >= 1 && config.dim_topics >= 1,
          "Tucker core dimensions must be at least 1");
  Require(static_cast<std::size_t>(config.dim_users) <= A.d0 &&
              static_cast<std::size_t>(config.dim_venues) <= A.d1 &&
              static_cast<std::size_t>(config.dim_topics) <= A.d2,
          "Tucker core dimensions exceed the tensor dimensions");
  Require(config.lambda >= 0.0, "lambda must be non-negative");
  Require(config.learning_rate > 0.0, "learning rate must be positive");
  const auto du = static_cast<std::size_t>(config.dim_users);
  const auto dv = static_cast<std::size_t>(config.dim_venues);
  const auto dz = static_cast<std::size_t>(config.dim_topics);

  Rng rng(seed);
  TuckerFactors f;
  f.lambda = config.lambda;
  f.core = Tensor3(du, dv, dz);
  f.U = MatrixD(A.d0, du);
  f.V = MatrixD(A.d1, dv);
  f.Z = MatrixD(A.d2, dz);
  for (auto* block : {&f.core.v, &f.U.data(), &f.V.data(), &f.Z.data()}) {
    for (double& x : *block) x = config.init_scale * rng.Uniform();
  }

  auto objective = [&](const TuckerFactors& x) {
    return TuckerObjective(A, x, friends, config.lambda, config.social);
  };
  double current = objective(f);
  if (!std::isfinite(current)) Fail(ErrorKind::kRuntime, "Tucker objective is not finite at iteration 0");
  f.trace.push_back(current);
  double step = config.learning_rate;
  for (int it = 1; it <= config.iterations; ++it) {
    const TuckerFactors g = TuckerGradient(A, f, friends, config.lambda, config.social);
    bool accepted = false;
    for (int halving = 0; halving <= 20 && !accepted; ++halving) {
      TuckerFactors next = f;
      Axpy(next.core.v, -step, g.core.v);
      Axpy(next.U.data(), -step, g.U.data());
      Axpy(next.V.data(), -step, g.V.data());
      Axpy(next.Z.data(), -step, g.Z.data());
      const double value = objective(next);
      if (std::isnan(value) || value == -std::numeric_limits<double>::infinity()) {
        Fail(ErrorKind::kRuntime, "Tucker objective is not finite at iteration " + std::to_string(it));
      }
      if (value <= current) {
        next.trace = std::move(f.trace);
        f = std::move(next);
        current = value;
        accepted = true;
        step *= 1.2;
      } else {
        step *= 0.5;
      }
    }
    f.trace.push_back(current);
    if (!accepted) break;
  }
  return f;
}

std::vector<Behavior> InjectLatentBehaviors(const Corpus& corpus, const FrequencyTensor& tensor,
                                            const TuckerFactors& factors, const MatrixD& topic_words,
                                            int top_k, int words_per_behavior, std::int64_t timestamp) {
  Require(top_k >= 0, "top_k must be non-negative");
  // Top words of each topic, most probable first, ties to the lower word id.
  std::vector<std::vector<WordId>> top_words(topic_words.rows());
  for (std::size_t z = 0; z < topic_words.rows(); ++z) {
    std::vector<WordId> order(topic_words.cols());
    std::iota(order.begin(), order.end(), 0);
    const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(0, words_per_behavior)));
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(), [&](WordId a, WordId b) {
      const double pa = topic_words(z, static_cast<std::size_t>(a));
      const double pb = topic_words(z, static_cast<std::size_t>(b));
      return pa != pb ? pa > pb : a < b;
    });
    order.resize(keep);
    top_words[z] = std::move(order);
  }

  // Entries are sorted by user, so each user's support is a contiguous range.
  std::vector<std::size_t> first(tensor.users + 1, tensor.entries.size());
  for (std::size_t n = tensor.entries.size(); n-- > 0;) first[static_cast<std::size_t>(tensor.entries[n].user)] = n;
  for (std::size_t u = tensor.users; u-- > 0;) first[u] = std::min(first[u], first[u + 1]);

  std::vector<Behavior> out;
  for (int u = 0; u < corpus.num_users(); ++u) {
    std::vector<std::pair<int, int>> candidates;
    for (UserId f : corpus.friends_of(u)) {
      for (std::size_t n = first[static_cast<std::size_t>(f)]; n < first[static_cast<std::size_t>(f) + 1]; ++n) {
        if (tensor.entries[n].count > 0.0) candidates.emplace_back(tensor.entries[n].venue, tensor.entries[n].topic);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::vector<std::pair<double, std::pair<int, int>>> ranked;
    ranked.reserve(candidates.size());
    for (auto [v, z] : candidates) ranked.push_back({ReconstructEntry(factors, u, v, z), {v, z}});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto take = std::min(ranked.size(), static_cast<std::size_t>(top_k));
    for (std::size_t r = 0; r < take; ++r) {
      Behavior b;
      b.user = u;
      b.venue = ranked[r].second.first;
      b.words = top_words[static_cast<std::size_t>(ranked[r].second.second)];
      b.timestamp = timestamp;
      b.synthetic = true;
      out.push_back(std::move(b));
    }
  }
  return out;
}

namespace {

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

void WriteMatrix(std::ostream& out, const char* name, const MatrixD& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << text::FormatDouble(m(r, c));
    out << '\n';
  }
}

}  // namespace

void SaveTensor(const FrequencyTensor& tensor, const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << "CBMTENSOR 1\n" << tensor.users << ' ' << tensor.venues << ' ' << tensor.topics << ' '
      << tensor.entries.size() << '\n';
  for (const auto& e : tensor.entries) {
    out << e.user << ' ' << e.venue << ' ' << e.topic << ' ' << text::FormatDouble(e.count) << '\n';
  }
}

FrequencyTensor LoadTensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open tensor file " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "CBMTENSOR" || version != 1) Fail(ErrorKind::kInput, path.string() + ": not a tensor file");
  FrequencyTensor t;
  std::size_t count = 0;
  in >> t.users >> t.venues >> t.topics >> count;
  for (std::size_t n = 0; n < count && in; ++n) {
    TensorEntry e;
    in >> e.user >> e.venue >> e.topic >> e.count;
    t.entries.push_back(e);
  }
  if (!in) Fail(ErrorKind::kInput, path.string() + ": truncated tensor file");
  return t;
}

void SaveFactors(const TuckerFactors& factors, const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << "CBMTUCKER 1\nlambda " << text::FormatDouble(factors.lambda) << '\n';
  out << "core " << factors.core.d0 << ' ' << factors.core.d1 << ' ' << factors.core.d2 << '\n';
  for (std::size_t n = 0; n < factors.core.v.size(); ++n) {
    out << text::FormatDouble(factors.core.v[n]) << ((n + 1) % factors.core.d2 == 0 ? '\n' : ' ');
  }
  WriteMatrix(out, "U", factors.U);
  WriteMatrix(out, "V", factors.V);
  WriteMatrix(out, "Z", factors.Z);
}

void WriteObjectiveTrace(std::span<const double> trace, const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << "iteration,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << text::FormatDouble(trace[i]) << '\n';
}

}  // namespace cbm
