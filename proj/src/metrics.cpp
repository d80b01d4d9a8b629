#include "unirep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "unirep/errors.hpp"

namespace unirep {

double harmonic_open_set(double os_star, double unk) {
  const double s = os_star + unk;
  return s > 0.0 ? 2.0 * os_star * unk / s : 0.0;
}

std::vector<Prediction> predict(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) throw DimensionError("predict: expected [N x C] logits");
  std::vector<Prediction> out;
  out.reserve(logits.dim(0));
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    double rest = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c != best) rest += std::exp(static_cast<double>(row[c]) - row[best]);
    }
    out.push_back({static_cast<std::uint32_t>(best), -std::log1p(rest)});
  }
  return out;
}

OpenSetScores score_open_set(std::span<const Prediction> known_preds, std::span<const std::uint32_t> known_labels,
                             std::span<const std::uint32_t> known_classes,
                             std::span<const Prediction> unknown_preds, double theta) {
  if (known_preds.size() != known_labels.size()) throw DimensionError("score_open_set: predictions vs labels");
  const double log_theta = theta > 0.0 ? std::log(theta) : -std::numeric_limits<double>::infinity();
  auto rejected = [log_theta](const Prediction& p) { return p.log_confidence < log_theta; };

  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t k = 0; k < known_classes.size(); ++k) slot[known_classes[k]] = k;

  OpenSetScores s;
  std::vector<ClassAccuracy> per(known_classes.size());
  for (std::size_t k = 0; k < known_classes.size(); ++k) per[k].label = known_classes[k];
  std::size_t closed_correct = 0;
  for (std::size_t i = 0; i < known_preds.size(); ++i) {
    auto it = slot.find(known_labels[i]);
    if (it == slot.end()) throw DataError("known-split label " + std::to_string(known_labels[i]) + " is not a known class");
    auto& c = per[it->second];
    ++c.samples;
    const bool hit = known_preds[i].class_index == it->second;
    closed_correct += hit ? 1 : 0;
    if (hit && !rejected(known_preds[i])) ++c.correct;
  }
  double macro = 0.0;
  std::size_t populated = 0;
  for (auto& c : per) {
    if (c.samples == 0) continue;
    c.accuracy = 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.samples);
    macro += c.accuracy;
    ++populated;
  }
  s.os_star = populated ? macro / static_cast<double>(populated) : 0.0;
  s.closed_set_accuracy =
      known_preds.empty() ? 0.0 : 100.0 * static_cast<double>(closed_correct) / static_cast<double>(known_preds.size());
  s.per_class = std::move(per);
  if (!unknown_preds.empty()) {
    std::size_t hits = 0;
    for (const auto& p : unknown_preds) hits += rejected(p) ? 1 : 0;
    s.unk = 100.0 * static_cast<double>(hits) / static_cast<double>(unknown_preds.size());
    s.hos = harmonic_open_set(s.os_star, *s.unk);
  }
  return s;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::vector<std::vector<double>> cosine_matrix(const Tensor& q, const Tensor& c) {
  auto norms = [](const Tensor& t) {
    std::vector<double> n(t.dim(0));
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = std::sqrt(dot(t.row(i), t.row(i)));
    return n;
  };
  const auto nq = norms(q), nc = norms(c);
  std::vector<std::vector<double>> sim(q.dim(0), std::vector<double>(c.dim(0)));
  for (std::size_t i = 0; i < q.dim(0); ++i) {
    for (std::size_t j = 0; j < c.dim(0); ++j) {
      const double denom = nq[i] * nc[j];
      sim[i][j] = denom > 0.0 ? dot(q.row(i), c.row(j)) / denom : 0.0;
    }
  }
  return sim;
}

std::vector<std::size_t> true_pair_ranks(const std::vector<std::vector<double>>& sim) {
  std::vector<std::size_t> ranks(sim.size());
  for (std::size_t i = 0; i < sim.size(); ++i) {
    std::size_t better = 0;
    for (std::size_t j = 0; j < sim[i].size(); ++j) better += sim[i][j] > sim[i][i] ? 1 : 0;
    ranks[i] = better + 1;
  }
  return ranks;
}

double recall(const std::vector<std::size_t>& ranks, std::size_t k) {
  std::size_t hits = 0;
  for (auto r : ranks) hits += r <= k ? 1 : 0;
  return ranks.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

}  // namespace

std::vector<RecallAtK> recall_at_k(const Tensor& a, const Tensor& b, std::span<const std::size_t> ks) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError("recall_at_k: expected paired [M x D] tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t M = a.dim(0);
  for (auto k : ks) {
    if (k == 0 || k > M) {
      throw ConfigError("recall@" + std::to_string(k) + " needs 1 <= K <= corpus size " + std::to_string(M),
                        "eval.recall_k");
    }
  }
  const auto ab = true_pair_ranks(cosine_matrix(a, b));
  const auto ba = true_pair_ranks(cosine_matrix(b, a));
  std::vector<RecallAtK> out;
  for (auto k : ks) out.push_back({k, recall(ab, k), recall(ba, k)});
  return out;
}

}  // namespace unirep
