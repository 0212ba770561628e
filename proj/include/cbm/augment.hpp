#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cbm/baselines.hpp"
#include "cbm/corpus.hpp"
#include "cbm/matrix.hpp"

namespace cbm {

// Dense 3-way array, last index fastest.
struct Tensor3 {
  std::size_t d0 = 0, d1 = 0, d2 = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
      : d0(a), d1(b), d2(c), v(a * b * c, fill) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return v[(i * d1 + j) * d2 + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * d1 + j) * d2 + k]; }
  std::size_t dim(int mode) const { return mode == 0 ? d0 : mode == 1 ? d1 : d2; }
};

// T x_mode M, where M maps the old mode dimension (columns) to the new one (rows).
Tensor3 ModeProduct(const Tensor3& t, int mode, const MatrixD& m, bool transpose = false);

inline constexpr int kNoTopic = -1;

struct TopicAssignment {
  std::vector<int> topic;  // per listed training behavior; kNoTopic for empty bags
  MatrixD phi;             // LDA topic x word
};

// Runs LDA over one document per training behavior and gives each behavior
// the topic holding most of its tokens (ties go to the lowest topic id).
TopicAssignment AssignTopics(const Corpus& corpus, std::span<const std::size_t> train,
                             const LdaConfig& config, std::uint64_t seed);

struct TensorEntry {
  int user = 0, venue = 0, topic = 0;
  double count = 0.0;
  bool operator==(const TensorEntry&) const = default;
};

// Sparse user x venue x topic frequency tensor; entries sorted by
// (user, venue, topic) and unique.
struct FrequencyTensor {
  std::size_t users = 0, venues = 0, topics = 0;
  std::vector<TensorEntry> entries;

  double At(int user, int venue, int topic) const;
  double Total() const;
  Tensor3 Dense() const;
};

// A(u,v,z) = number of training behaviors of u at v with topic z.
FrequencyTensor BuildTensor(const Corpus& corpus, std::span<const std::size_t> train,
                            std::span<const int> topics, int num_topics);

enum class SocialForm {
  kPrinted,     // + sum over friend pairs of u_i . u_j
  kDifference,  // + sum over friend pairs of |u_i - u_j|^2
};

struct TuckerFactors {
  Tensor3 core;  // dU x dV x dZ
  MatrixD U;     // users x dU
  MatrixD V;     // venues x dV
  MatrixD Z;     // topics x dZ
  double lambda = 0.0;
  std::vector<double> trace;  // objective per iteration, starting with the initial value
};

struct TuckerConfig {
  int dim_users = 8;
  int dim_venues = 8;
  int dim_topics = 4;
  double lambda = 0.01;
  int iterations = 200;
  double learning_rate = 0.01;
  double init_scale = 0.01;
  SocialForm social = SocialForm::kPrinted;
};

// S x_U U x_V V x_Z Z, densely.
Tensor3 Reconstruct(const TuckerFactors& f);
// One entry of the same product, summed directly over the core.
double ReconstructEntry(const TuckerFactors& f, int user, int venue, int topic);

double TuckerObjective(const Tensor3& A, const TuckerFactors& f,
                       std::span<const std::pair<UserId, UserId>> friends, double lambda,
                       SocialForm social);

// Gradient of TuckerObjective, returned in a TuckerFactors of the same shape.
TuckerFactors TuckerGradient(const Tensor3& A, const TuckerFactors& f,
                             std::span<const std::pair<UserId, UserId>> friends, double lambda,
                             SocialForm social);

// Full-batch gradient descent from uniform [0, init_scale) factors. A step
// that raises the objective is halved and retried (up to 20 times); accepted
// steps grow the next by 20%. Throws kRuntime on a non-finite objective.
TuckerFactors TuckerDecompose(const Tensor3& A, std::span<const std::pair<UserId, UserId>> friends,
                              const TuckerConfig& config, std::uint64_t seed);

// For each user with friends: every (venue, topic) that some friend has
// visited is a candidate; the top_k by reconstructed value (ties by venue,
// then topic) become synthetic behaviors carrying the words_per_behavior
// most probable words of the topic. Returned in user order.
std::vector<Behavior> InjectLatentBehaviors(const Corpus& corpus, const FrequencyTensor& tensor,
                                            const TuckerFactors& factors, const MatrixD& topic_words,
                                            int top_k = 20, int words_per_behavior = 3,
                                            std::int64_t timestamp = 0);

// Tensor as "CBMTENSOR 1" + dims + coordinate list; factors as "CBMTUCKER 1"
// + dims + dense blocks.
void SaveTensor(const FrequencyTensor& tensor, const std::filesystem::path& path);
FrequencyTensor LoadTensor(const std::filesystem::path& path);
void SaveFactors(const TuckerFactors& factors, const std::filesystem::path& path);
void WriteObjectiveTrace(std::span<const double> trace, const std::filesystem::path& path);

}  // namespace cbm
