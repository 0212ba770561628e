#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cbm/corpus.hpp"
#include "cbm/model.hpp"

namespace cbm {

// P(u) over all users in the model.
struct UserPrior {
  std::vector<double> p;

  // Add-one smoothed training frequency: (n_u + 1) / (N + U).
  static UserPrior Empirical(int users, std::span<const Behavior> train);
  static UserPrior Uniform(int users);
  void Validate() const;
};

// User-independent part of the behavior likelihood: for every community c,
// log vartheta_{c,v} + log sum_z theta_{c,z} (prod_w phi_{z,w})^(1/|D|).
std::vector<double> CommunityLogTerms(const CbmModel& model, VenueId venue,
                                      std::span<const WordId> words);

// Natural log of P(v, D | u).
double LogLikelihood(const CbmModel& model, UserId user, VenueId venue,
                     std::span<const WordId> words);
double LogLikelihood(const CbmModel& model, const Behavior& b);

// P(v, D | u).
double BehaviorLikelihood(const CbmModel& model, const Behavior& b);

// S_l = -log10 P(v, D | u).
double LogarithmicScore(const CbmModel& model, const Behavior& b);

// The claimant plus reference_count-1 other users drawn uniformly without
// replacement; every user when the model has at most reference_count users.
// Returned in ascending id order.
std::vector<UserId> DrawReferenceUsers(int num_users, UserId claimant, int reference_count,
                                       std::uint64_t seed);

// S_r = 1 - P(v,D|u)P(u) / sum over references of P(v,D|u')P(u').
double RelativeScore(const CbmModel& model, const Behavior& b, const UserPrior& prior,
                     int reference_count, std::uint64_t seed);

// Relative score of a block of behaviors claimed by one user, with the
// candidate likelihood taken as the product over the block.
double BlockRelativeScore(const CbmModel& model, std::span<const Behavior> block,
                          const UserPrior& prior, int reference_count, std::uint64_t seed);

struct ScoredBehavior {
  std::size_t index = 0;  // behavior index in the corpus
  UserId user = 0;
  double s_l = 0.0;
  double s_r = 0.0;
  Label label = Label::kNormal;
  bool empty_words = false;
};

// Scores each listed behavior; the reference draw for behavior i is seeded by
// DeriveSeed(seed, i), so the result does not depend on the listing order.
std::vector<ScoredBehavior> ScoreBehaviors(const CbmModel& model, const Corpus& corpus,
                                           std::span<const std::size_t> indices,
                                           const UserPrior& prior, int reference_count,
                                           std::uint64_t seed);

struct ThresholdSelection {
  double threshold = 1.0;
  bool qualified = false;  // false when no scanned threshold had cost < 1
  std::vector<std::pair<double, double>> cost_curve;  // (threshold, cost), descending thresholds
};

// Scans thresholds hi, hi-step, ..., down to lo. At each step the cost is
// (# normals newly at or above the threshold) / (# anomalies newly at or above
// it); a step that flags nothing new keeps the previous cost, the first such
// step counts as infinite. Returns the lowest threshold of the first run of
// steps whose cost is below 1.
ThresholdSelection SelectThreshold(std::span<const double> scores, std::span<const Label> labels,
                                   double lo, double hi, double step);
ThresholdSelection SelectThreshold(std::span<const ScoredBehavior> scored, double lo, double hi,
                                   double step);

}  // namespace cbm
