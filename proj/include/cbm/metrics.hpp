#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cbm/baselines.hpp"

namespace cbm {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  double Precision() const;  // 0 when nothing is flagged
  double Recall() const;     // TPR
  double Fpr() const;
  double Tnr() const;
  double Fnr() const;
  double Accuracy() const;
  double F1() const;  // 0 when precision + recall is 0
};

// A behavior is flagged when its score is at or above the threshold.
ConfusionMatrix Confusion(std::span<const double> scores, std::span<const int> positive, double threshold);

// Mann-Whitney statistic doubled, so ties count exactly: 2 * (#pos>neg) + (#ties).
std::uint64_t AucTwiceNumerator(std::span<const double> scores, std::span<const int> positive);

// Rank AUC with ties worth one half. Throws unless both classes are present.
double ComputeAuc(std::span<const double> scores, std::span<const int> positive);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct Curves {
  std::vector<RocPoint> roc;  // (0,0) first, then one point per distinct score, descending
  std::vector<PrPoint> pr;    // one point per distinct score, descending
};

Curves ComputeCurves(std::span<const double> scores, std::span<const int> positive);

// Highest TPR among ROC points whose FPR does not exceed max_fpr.
double TprAtFpr(std::span<const RocPoint> roc, double max_fpr);

}  // namespace cbm
