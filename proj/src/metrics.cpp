#include "cbm/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "cbm/error.hpp"

namespace cbm {

namespace {

double Ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void RequireBothClasses(std::span<const double> scores, std::span<const int> positive) {
  Require(scores.size() == positive.size(), "scores and labels differ in length");
  const auto pos = std::count_if(positive.begin(), positive.end(), [](int p) { return p != 0; });
  if (pos == 0 || pos == static_cast<long>(positive.size())) {
    Fail(ErrorKind::kInvalidArgument, "evaluation needs both positive and negative examples");
  }
}

}  // namespace

double ConfusionMatrix::Precision() const { return Ratio(tp, tp + fp); }
double ConfusionMatrix::Recall() const { return Ratio(tp, tp + fn); }
double ConfusionMatrix::Fpr() const { return Ratio(fp, fp + tn); }
double ConfusionMatrix::Tnr() const { return Ratio(tn, fp + tn); }
double ConfusionMatrix::Fnr() const { return Ratio(fn, tp + fn); }
double ConfusionMatrix::Accuracy() const { return Ratio(tp + tn, tp + fp + fn + tn); }

double ConfusionMatrix::F1() const {
  const double p = Precision();
  const double r = Recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ConfusionMatrix Confusion(std::span<const double> scores, std::span<const int> positive, double threshold) {
  Require(scores.size() == positive.size(), "scores and labels differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool flagged = scores[i] >= threshold;
    if (positive[i]) {
      (flagged ? m.tp : m.fn)++;
    } else {
      (flagged ? m.fp : m.tn)++;
    }
  }
  return m;
}

std::uint64_t AucTwiceNumerator(std::span<const double> scores, std::span<const int> positive) {
  RequireBothClasses(scores, positive);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Walk groups of tied scores in ascending order; each positive beats every
  // negative in lower groups and ties with the negatives in its own group.
  std::uint64_t twice = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? pos : neg)++;
      ++j;
    }
    twice += pos * (2 * neg_below + neg);
    neg_below += neg;
    i = j;
  }
  return twice;
}

double ComputeAuc(std::span<const double> scores, std::span<const int> positive) {
  const std::uint64_t twice = AucTwiceNumerator(scores, positive);
  std::uint64_t pos = 0;
  for (int p : positive) pos += p ? 1 : 0;
  const std::uint64_t neg = positive.size() - pos;
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

Curves ComputeCurves(std::span<const double> scores, std::span<const int> positive) {
  RequireBothClasses(scores, positive);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::uint64_t pos = 0;
  for (int p : positive) pos += p ? 1 : 0;
  const std::uint64_t neg = positive.size() - pos;

  Curves curves;
  curves.roc.push_back({0.0, 0.0});
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? tp : fp)++;
      ++j;
    }
    curves.roc.push_back({Ratio(fp, neg), Ratio(tp, pos)});
    curves.pr.push_back({Ratio(tp, pos), Ratio(tp, tp + fp)});
    i = j;
  }
  return curves;
}

double TprAtFpr(std::span<const RocPoint> roc, double max_fpr) {
  double best = 0.0;
  for (const auto& p : roc) {
    if (p.fpr <= max_fpr) best = std::max(best, p.tpr);
  }
  return best;
}

}  // namespace cbm
