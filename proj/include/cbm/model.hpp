#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cbm/corpus.hpp"
#include "cbm/matrix.hpp"
#include "cbm/random.hpp"

namespace cbm {

struct Hyperparams {
  int communities = 30;  // C
  int topics = 20;       // Z
  double alpha = 50.0 / 20;  // prior on community -> topic
  double beta = 0.01;        // prior on topic -> word
  double gamma = 50.0 / 30;  // prior on user -> community
  double eta = 0.01;         // prior on community -> venue

  // alpha = 50/Z, gamma = 50/C, beta = eta = 0.01.
  static Hyperparams Defaults(int communities = 30, int topics = 20);
  void Validate() const;
};

// How the topic conditional treats a multi-word bag.
enum class TopicConditional {
  kCollapsed,  // sequential Dirichlet-multinomial predictive, exact collapsed conditional
  kLiteral,    // every word scored against the same frozen counts
};

// Assignments and sufficient statistics of the collapsed Gibbs chain.
class GibbsState {
 public:
  GibbsState(int users, int venues, int words, const Hyperparams& hyper);

  int communities() const { return static_cast<int>(n_cz.rows()); }
  int topics() const { return static_cast<int>(n_cz.cols()); }

  // Adds (sign=+1) or removes (sign=-1) one behavior's contribution.
  void Apply(const Behavior& b, int community, int topic, int sign);

  // Recomputes every count from the assignments and compares with the tables.
  // Throws kRuntime on any discrepancy.
  void CheckConsistency(std::span<const Behavior> docs) const;

  std::vector<int> community;  // per training behavior
  std::vector<int> topic;

  MatrixI n_uc;  // user x community
  MatrixI n_cz;  // community x topic
  MatrixI n_cv;  // community x venue
  MatrixI n_zw;  // topic x word
  std::vector<int> n_u;     // row sums of n_uc
  std::vector<int> n_c_z;   // row sums of n_cz
  std::vector<int> n_c_v;   // row sums of n_cv
  std::vector<int> n_z;     // row sums of n_zw
};

struct CbmModel {
  Hyperparams hyper;
  MatrixD pi;        // user x community
  MatrixD theta;     // community x topic
  MatrixD vartheta;  // community x venue
  MatrixD phi;       // topic x word

  // Optional id tables carried for scoring raw records files.
  IdTable users;
  IdTable venues;
  IdTable vocabulary;

  int num_users() const { return static_cast<int>(pi.rows()); }
  int num_venues() const { return static_cast<int>(vartheta.cols()); }
  int num_words() const { return static_cast<int>(phi.cols()); }
  std::uint64_t tables_hash() const { return TablesHash(users, venues, vocabulary); }

  void CheckNormalized(double tolerance = 1e-9) const;
  bool operator==(const CbmModel& other) const;
};

// Unnormalized conditional over communities for behavior b, whose current
// assignment must already be removed from the counts.
std::vector<double> CommunityWeights(const GibbsState& state, const Hyperparams& hyper,
                                     const Behavior& b, int topic);

// Log of the unnormalized conditional over topics (same precondition).
std::vector<double> TopicLogWeights(const GibbsState& state, const Hyperparams& hyper,
                                    const Behavior& b, int community,
                                    TopicConditional form = TopicConditional::kCollapsed);

// Normalized versions of the above.
std::vector<double> CommunityConditional(const GibbsState& state, const Hyperparams& hyper,
                                         const Behavior& b, int topic);
std::vector<double> TopicConditionalProbabilities(const GibbsState& state, const Hyperparams& hyper,
                                                  const Behavior& b, int community,
                                                  TopicConditional form = TopicConditional::kCollapsed);

// Random initial assignments with counts filled in.
GibbsState InitializeState(std::span<const Behavior> docs, int users, int venues, int words,
                           const Hyperparams& hyper, Rng& rng);

// One full pass: for every behavior, resample c given z, then z given the new c.
void GibbsSweep(GibbsState& state, const Hyperparams& hyper, std::span<const Behavior> docs,
                Rng& rng, TopicConditional form = TopicConditional::kCollapsed);

// Smoothed-count point estimates of pi, theta, vartheta and phi.
CbmModel Estimate(const GibbsState& state, const Hyperparams& hyper);

struct TrainSchedule {
  int iterations = 1000;  // I
  int burn_in = 500;      // I_b
  int lag = 50;           // I_s
  TopicConditional form = TopicConditional::kCollapsed;
};

struct TrainResult {
  CbmModel model;
  std::vector<int> accumulation_iterations;
  std::vector<double> mean_log_score;  // held-in mean S_l at each accumulation
  int accumulated = 0;
};

TrainResult Train(std::span<const Behavior> docs, int users, int venues, int words,
                  const Hyperparams& hyper, const TrainSchedule& schedule, std::uint64_t seed);

// Convenience overload gathering the training behaviors by index; the model
// inherits the corpus id tables.
TrainResult Train(const Corpus& corpus, std::span<const std::size_t> train, const Hyperparams& hyper,
                  const TrainSchedule& schedule, std::uint64_t seed);

std::vector<Behavior> Gather(const Corpus& corpus, std::span<const std::size_t> indices);

// Parses "fixed:N", "poisson:MEAN", "geometric:MEAN" or "uniform:LO-HI".
struct CountDistribution {
  enum class Kind { kFixed, kPoisson, kGeometric, kUniform } kind = Kind::kFixed;
  double a = 1.0;
  double b = 1.0;
  int minimum = 0;

  static CountDistribution Parse(const std::string& spec, int minimum);
  int Sample(Rng& rng) const;
  std::string ToString() const;
};

struct GeneratorConfig {
  Hyperparams hyper = Hyperparams::Defaults();
  int users = 100;
  int venues = 50;
  int words = 300;
  CountDistribution behaviors_per_user = CountDistribution::Parse("fixed:20", 1);
  CountDistribution words_per_tip = CountDistribution::Parse("fixed:8", 0);
  int friends_per_user = 3;
  double homophily = 0.8;  // chance a generated tie joins users with the same dominant community
  double drift_after = 0.0;  // in (0,1): fraction of rounds after which every pi_u is rotated
  double center_lat = 40.75;
  double center_lon = -73.98;
  double spread_deg = 0.1;
};

struct GeneratedCorpus {
  Corpus corpus;
  CbmModel truth;
  CbmModel truth_after_drift;  // equal to truth when drift is disabled
};

// Samples parameters and behaviors from the joint generative process.
// Behaviors are generated round-robin across users (round r emits the r-th
// behavior of every user that has one) and timestamped 0, 1, 2, ... in that
// order.
GeneratedCorpus GenerateCorpus(const GeneratorConfig& config, std::uint64_t seed);

void SaveModel(const CbmModel& model, const std::filesystem::path& path);
void WriteModel(const CbmModel& model, std::ostream& out);
CbmModel LoadModel(const std::filesystem::path& path);

}  // namespace cbm
