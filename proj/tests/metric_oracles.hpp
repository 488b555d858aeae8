#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <Eigen/Dense>

// Straightforward reference metrics, written independently of
// ntulm/metrics.hpp: explicit confusion matrices and full sorts.
namespace ntulm::oracle {

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int num_classes) {
  std::vector<std::vector<int>> confusion(num_classes, std::vector<int>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++confusion[golds[i]][preds[i]];
  // per-class F1 = 2PR/(P+R), written over the confusion counts as 2tp/(2tp+fp+fn)
  double total = 0;
  for (int c = 0; c < num_classes; ++c) {
    int tp = confusion[c][c], fp = 0, fn = 0;
    for (int k = 0; k < num_classes; ++k)
      if (k != c) fp += confusion[k][c], fn += confusion[c][k];
    const int denom = 2 * tp + fp + fn;
    total += denom ? 2.0 * tp / denom : 0.0;
  }
  return total / num_classes;
}

inline double recall_at_k(const Eigen::MatrixXd& scores, const std::vector<int>& golds, int k) {
  int hit = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    std::vector<int> order(static_cast<std::size_t>(scores.cols()));
    for (int c = 0; c < scores.cols(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(i, a) > scores(i, b); });
    for (int r = 0; r < k; ++r) hit += order[r] == golds[i];
  }
  return static_cast<double>(hit) / static_cast<double>(golds.size());
}

// Queries are the corpus rows themselves (self excluded).
inline double self_retrieval_map(const Eigen::MatrixXd& emb, const std::vector<std::set<int>>& labels) {
  double total = 0;
  int queries = 0;
  for (Eigen::Index q = 0; q < emb.rows(); ++q) {
    std::vector<std::pair<double, Eigen::Index>> sims;
    for (Eigen::Index c = 0; c < emb.rows(); ++c) {
      if (c == q) continue;
      const double na = emb.row(q).norm(), nb = emb.row(c).norm();
      const double cos = (na == 0 || nb == 0) ? 0.0 : emb.row(q).dot(emb.row(c)) / (na * nb);
      sims.push_back({cos, c});
    }
    std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> precisions;
    int relevant_seen = 0;
    for (std::size_t r = 0; r < sims.size(); ++r) {
      const auto& other = labels[static_cast<std::size_t>(sims[r].second)];
      bool rel = false;
      for (int l : labels[static_cast<std::size_t>(q)]) rel = rel || other.count(l);
      if (rel) precisions.push_back(static_cast<double>(++relevant_seen) / static_cast<double>(r + 1));
    }
    if (precisions.empty()) continue;
    double s = 0;
    for (double p : precisions) s += p;
    total += s / static_cast<double>(precisions.size());
    ++queries;
  }
  return total / queries;
}

}  // namespace ntulm::oracle
