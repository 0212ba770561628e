#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cbm/corpus.hpp"
#include "cbm/matrix.hpp"

namespace cbm {

// ---- Kernel density family ----

// Isotropic Gaussian kernel with covariance diag(h, h); h is a variance in km^2.
double GaussianKernel(double dx, double dy, double h);

// (1/n) sum_j K_h(q - e_j). Throws on an empty point set.
double KdeDensity(std::span<const PlanarPoint> points, double h, PlanarPoint query);

// sum_j w_j K_h(q - e_j) / sum_j w_j. Negative weights are clamped to zero; if
// every weight is zero, or all weights are equal, the unweighted density is
// returned.
double WeightedKdeDensity(std::span<const PlanarPoint> points, std::span<const double> weights,
                          double h, PlanarPoint query);

// Silverman's rule for a bivariate Gaussian kernel, returned as a variance:
// sd = max(sigma * n^(-1/6), floor_km) with sigma the pooled coordinate
// standard deviation, and h = sd^2.
double SilvermanBandwidth(std::span<const PlanarPoint> points, double floor_km = 0.05);

struct KdeRecord {
  VenueId venue = 0;
  PlanarPoint at;
};

struct KdeModel {
  std::vector<std::vector<KdeRecord>> own;  // per user, training history
  std::vector<std::vector<UserId>> friends;
  std::vector<double> bandwidth;            // per user, 0 when the user has no usable points
  double mix_alpha = 0.5;

  // Records of every friend of the user, in friend order.
  std::vector<KdeRecord> SocialRecords(UserId user) const;
};

// Collects geolocated training records. Behaviors at venues without
// coordinates are skipped.
KdeModel BuildKde(const Corpus& corpus, std::span<const std::size_t> train, double mix_alpha,
                  double floor_km = 0.05);

// -log of alpha * f(e | own) + (1 - alpha) * f(e | friends). An empty
// component hands its weight to the other one.
double MkdeSurprise(const KdeModel& model, UserId user, PlanarPoint at);

// ---- Matrix factorization ----

struct MfConfig {
  int rank = 10;
  double lambda1 = 0.05;
  double lambda2 = 0.05;
  double learning_rate = 0.01;
  int epochs = 300;
  double init_scale = 0.1;
};

struct MfModel {
  MatrixD users;   // U x k
  MatrixD venues;  // V x k
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<double> trace;  // objective after each epoch, starting with the initial value

  double Predict(UserId u, VenueId v) const;
};

double MfObjective(const MatrixD& R, const MatrixD& users, const MatrixD& venues, double lambda1,
                   double lambda2);

// Gradients of MfObjective with respect to the user and venue factors.
void MfGradient(const MatrixD& R, const MatrixD& users, const MatrixD& venues, double lambda1,
                double lambda2, MatrixD& grad_users, MatrixD& grad_venues);

// Full-batch gradient descent in the descent direction with step halving: a
// step that raises the objective is retried at half size (up to 20 times), an
// accepted step grows the next one by 20%. Throws if the objective exceeds
// 1e12 or becomes non-finite.
MfModel MfFit(const MatrixD& R, const MfConfig& config, std::uint64_t seed);

// Binary user x venue visit matrix of the training behaviors.
MatrixD VisitMatrix(const Corpus& corpus, std::span<const std::size_t> train);

MfModel MfTrain(const Corpus& corpus, std::span<const std::size_t> train, const MfConfig& config,
                std::uint64_t seed);

// -log of the KDE over the records of the user and the user's friends, each
// weighted by max(0, u_user . v_venue).
double CfkdeSurprise(const KdeModel& kde, const MfModel& mf, UserId user, PlanarPoint at);

// ---- LDA ----

struct LdaFit {
  MatrixD phi;    // K x W
  MatrixD theta;  // documents x K
  std::vector<std::vector<int>> assignments;  // topic per token, per document
};

// Collapsed Gibbs LDA; alpha <= 0 selects 50 / K.
LdaFit FitLda(const std::vector<std::vector<WordId>>& docs, int words, int topics, double alpha,
              double beta, int iterations, std::uint64_t seed);

struct LdaConfig {
  int topics = 20;
  int iterations = 200;
  double alpha = 0.0;  // <= 0 selects 50 / K
  double beta = 0.01;
  int fold_in_passes = 20;
};

struct LdaModel {
  int topics = 0;
  double alpha = 0.0;
  MatrixD phi;        // K x W
  MatrixD theta_his;  // U x K
  std::vector<bool> seen;  // false when the user had no training document (theta_his uniform)
};

// One document per user: the user's training words followed by the training
// words of each friend.
LdaModel LdaTrain(const Corpus& corpus, std::span<const std::size_t> train, const LdaConfig& config,
                  std::uint64_t seed);

// (n(k) + alpha) / sum_i (n(i) + alpha).
std::vector<double> TopicProportion(std::span<const double> counts, double alpha);

// Folds a word bag into fixed topics: every pass resamples each token's topic
// from phi_{z,w} (n_{-i}(z) + alpha); returns TopicProportion of n(k)
// averaged over the passes.
std::vector<double> LdaFoldIn(const LdaModel& model, std::span<const WordId> words, int passes,
                              std::uint64_t seed);

// Natural-log Jensen-Shannon divergence; 0 ln 0 is taken as 0.
double JsDivergence(std::span<const double> p, std::span<const double> q);

// ---- Fused detector ----

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct FusedResult {
  std::vector<RocPoint> points;    // every (threshold_a, threshold_b) cell of the grid
  std::vector<RocPoint> frontier;  // upper convex hull from (0,0) to (1,1)
  double auc = 0.0;
};

// Candidate thresholds for one detector: "flag nothing", "flag everything"
// and grid-1 interior empirical quantiles, ascending.
std::vector<double> GridThresholds(std::span<const double> scores, int grid);

// Flags a behavior iff score_a > t_a or score_b > t_b, for every threshold
// pair in the two grids, and returns the trapezoid area under the upper
// convex hull of the resulting ROC points.
FusedResult FusedEvaluate(std::span<const double> score_a, std::span<const double> score_b,
                          std::span<const int> positive, int grid);

// Upper convex hull of ROC points with (0,0) and (1,1) added, and its area.
std::vector<RocPoint> RocConvexHull(std::vector<RocPoint> points);
double TrapezoidArea(std::span<const RocPoint> curve);

}  // namespace cbm
