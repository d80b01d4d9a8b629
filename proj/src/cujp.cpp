#include "unirep/cujp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "unirep/errors.hpp"

namespace unirep {

std::uint64_t factorial(std::size_t n) {
  if (n > 20) throw ConfigError(std::to_string(n) + "! does not fit in 64 bits");
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

PermutationUniverse::PermutationUniverse(std::size_t segments, std::vector<Permutation> table)
    : segments_(segments), table_(std::move(table)) {
  std::set<Permutation> seen;
  for (const auto& p : table_) {
    if (p.size() != segments_) throw DimensionError("permutation length differs from segment count");
    Permutation sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != i) throw DataError("universe entry is not a permutation");
    }
    if (!seen.insert(p).second) throw DataError("duplicate permutation in universe");
  }
}

namespace {

Permutation identity(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0u);
  return p;
}

}  // namespace

PermutationUniverse build_universe(Rng& rng, std::size_t segments, std::size_t count) {
  if (segments == 0) throw ConfigError("segment count must be positive", "cujp.segments");
  if (count == 0) throw ConfigError("permutation count must be positive", "cujp.permutations");
  if (segments <= 20 && count > factorial(segments)) {
    throw ConfigError("cannot sample " + std::to_string(count) + " distinct permutations of " +
                          std::to_string(segments) + " segments: only " + std::to_string(segments) +
                          "! = " + std::to_string(factorial(segments)) + " exist",
                      "cujp.permutations");
  }
  std::vector<Permutation> table{identity(segments)};
  if (segments <= 8) {
    std::vector<Permutation> rest;
    Permutation p = identity(segments);
    while (std::next_permutation(p.begin(), p.end())) rest.push_back(p);
    rng.shuffle(std::span<Permutation>(rest));
    table.insert(table.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(count - 1));
  } else {
    std::set<Permutation> seen{table.front()};
    while (table.size() < count) {
      Permutation p = identity(segments);
      rng.shuffle(std::span<std::uint32_t>(p));
      if (seen.insert(p).second) table.push_back(std::move(p));
    }
  }
  return PermutationUniverse(segments, std::move(table));
}

std::size_t default_permutation_count(std::size_t segments) {
  if (segments >= 5) return 24;
  return static_cast<std::size_t>(std::min<std::uint64_t>(factorial(segments), 24));
}

std::vector<std::size_t> segment_bounds(std::size_t length, std::size_t parts) {
  if (parts == 0 || parts > length) {
    throw ConfigError("cannot split length " + std::to_string(length) + " into " + std::to_string(parts) + " segments");
  }
  std::vector<std::size_t> b(parts + 1);
  for (std::size_t k = 0; k <= parts; ++k) b[k] = k * length / parts;
  return b;
}

namespace {

JigsawInstance assemble(const PermutationUniverse& universe, std::uint32_t label,
                        const std::vector<SegmentSource>& sources,
                        const std::vector<std::span<const float>>& codes, std::size_t splits) {
  const Permutation& perm = universe.at(label);
  std::vector<std::vector<std::size_t>> bounds;
  for (const auto& c : codes) bounds.push_back(segment_bounds(c.size(), splits));
  std::size_t total = 0;
  for (const auto& src : sources) total += bounds[src.modality][src.segment + 1] - bounds[src.modality][src.segment];
  JigsawInstance inst;
  inst.label = label;
  inst.composed = Tensor({total});
  inst.slot_bounds.push_back(0);
  std::size_t pos = 0;
  for (std::size_t slot = 0; slot < perm.size(); ++slot) {
    const SegmentSource src = sources[perm[slot]];
    const auto& b = bounds[src.modality];
    const auto seg = codes[src.modality].subspan(b[src.segment], b[src.segment + 1] - b[src.segment]);
    std::copy(seg.begin(), seg.end(), inst.composed.data().begin() + static_cast<std::ptrdiff_t>(pos));
    pos += seg.size();
    inst.provenance.push_back(src);
    inst.slot_bounds.push_back(pos);
  }
  return inst;
}

}  // namespace

JigsawInstance compose_instance(Rng& rng, const PermutationUniverse& universe, std::span<const float> code_a,
                                std::span<const float> code_b) {
  if (code_a.size() != code_b.size()) {
    throw DimensionError("compose_instance: code lengths " + std::to_string(code_a.size()) + " and " +
                         std::to_string(code_b.size()) + " differ");
  }
  const std::size_t O = universe.segments();
  if (O == 0 || code_a.size() % O != 0) {
    throw DimensionError("compose_instance: " + std::to_string(O) + " segments do not divide code length " +
                         std::to_string(code_a.size()));
  }
  std::vector<SegmentSource> sources(O);
  for (std::size_t s = 0; s < O; ++s) {
    sources[s] = {static_cast<std::uint32_t>(rng.uniform_int(2)), static_cast<std::uint32_t>(s)};
  }
  const auto label = static_cast<std::uint32_t>(rng.uniform_int(universe.size()));
  return assemble(universe, label, sources, {code_a, code_b}, O);
}

std::vector<Tensor> scatter_to_sources(const JigsawInstance& inst, std::span<const float> grad,
                                       std::span<const std::size_t> code_lengths, std::size_t splits_per_modality) {
  if (grad.size() != inst.composed.size()) throw DimensionError("scatter_to_sources: gradient length mismatch");
  std::vector<Tensor> out;
  std::vector<std::vector<std::size_t>> bounds;
  for (auto len : code_lengths) {
    out.emplace_back(Shape{len});
    bounds.push_back(segment_bounds(len, splits_per_modality));
  }
  for (std::size_t slot = 0; slot < inst.provenance.size(); ++slot) {
    const auto& src = inst.provenance[slot];
    if (src.modality >= out.size()) throw DataError("instance provenance names an unknown modality");
    const std::size_t dst0 = bounds[src.modality][src.segment];
    for (std::size_t k = inst.slot_bounds[slot]; k < inst.slot_bounds[slot + 1]; ++k) {
      out[src.modality][dst0 + (k - inst.slot_bounds[slot])] += grad[k];
    }
  }
  return out;
}

std::uint64_t mmjp_universe_bound(std::size_t modalities, std::size_t splits, std::uint64_t cap) {
  const std::size_t segments = modalities * splits;
  if (segments == 0) throw ConfigError("MMJP needs at least one segment", "cujp.mmjp_splits");
  if (segments > 20) {
    throw ConfigError("MMJP universe " + std::to_string(segments) + "! exceeds cap " + std::to_string(cap),
                      "cujp.mmjp_cap");
  }
  const std::uint64_t bound = factorial(segments);
  if (bound > cap) {
    throw ConfigError("MMJP with " + std::to_string(modalities) + " modalities x " + std::to_string(splits) +
                          " splits needs " + std::to_string(segments) + "! = " + std::to_string(bound) +
                          " orderings, exceeding cap " + std::to_string(cap),
                      "cujp.mmjp_cap");
  }
  return bound;
}

JigsawInstance mmjp_compose(Rng& rng, const PermutationUniverse& universe,
                            const std::vector<std::span<const float>>& codes, std::size_t splits) {
  if (codes.empty()) throw DimensionError("mmjp_compose: no modality codes");
  if (universe.segments() != codes.size() * splits) {
    throw DimensionError("mmjp_compose: universe has " + std::to_string(universe.segments()) + " segments, expected " +
                         std::to_string(codes.size() * splits));
  }
  std::vector<SegmentSource> sources;
  for (std::size_t m = 0; m < codes.size(); ++m) {
    for (std::size_t s = 0; s < splits; ++s) {
      sources.push_back({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(s)});
    }
  }
  const auto label = static_cast<std::uint32_t>(rng.uniform_int(universe.size()));
  return assemble(universe, label, sources, codes, splits);
}

PermClassifier::PermClassifier(std::size_t input_dim, std::size_t classes, Rng& rng)
    : weight_({input_dim, classes}), bias_({classes}) {
  if (input_dim == 0 || classes == 0) throw ConfigError("classifier dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (auto& w : weight_.data()) w = static_cast<float>(rng.uniform(-bound, bound));
}

PermClassifier PermClassifier::zeros(std::size_t input_dim, std::size_t classes) {
  return from_parameters(Tensor({input_dim, classes}), Tensor({classes}));
}

PermClassifier PermClassifier::from_parameters(Tensor weight, Tensor bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("classifier parameters " + shape_str(weight.shape()) + " and " + shape_str(bias.shape()));
  }
  PermClassifier c;
  c.weight_ = std::move(weight);
  c.bias_ = std::move(bias);
  return c;
}

Tensor PermClassifier::logits(const Tensor& inputs) const {
  return add_row_bias(matmul(inputs.as_matrix(), weight_), bias_);
}

Tensor PermClassifier::probabilities(const Tensor& inputs) const { return softmax(logits(inputs), 1); }

Tensor stack_instances(std::span<const JigsawInstance> instances) {
  if (instances.empty()) return Tensor({0, 0});
  const std::size_t d = instances.front().composed.size();
  Tensor out({instances.size(), d});
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].composed.size() != d) throw DimensionError("jigsaw instances have different widths");
    std::copy(instances[i].composed.data().begin(), instances[i].composed.data().end(), out.row(i).begin());
  }
  return out;
}

CujpLossResult cujp_loss(const PermClassifier& clf, std::span<const JigsawInstance> instances) {
  const std::size_t B = instances.size(), D = clf.input_dim(), P = clf.classes();
  CujpLossResult r;
  r.grad_weight = Tensor({D, P});
  r.grad_bias = Tensor({P});
  r.grad_inputs = Tensor({B, D});
  if (B == 0) return r;
  for (const auto& inst : instances) {
    if (inst.label >= P) {
      throw DataError("jigsaw label " + std::to_string(inst.label) + " out of range for " + std::to_string(P) +
                      " permutations");
    }
    if (inst.composed.size() != D) {
      throw DimensionError("jigsaw instance width " + std::to_string(inst.composed.size()) +
                           " does not match classifier input " + std::to_string(D));
    }
  }
  std::vector<double> gw(D * P, 0.0), gb(P, 0.0), logits(P), probs(P);
  const auto W = clf.weight().data();
  const auto bias = clf.bias().data();
  for (std::size_t i = 0; i < B; ++i) {
    const auto x = instances[i].composed.data();
    for (std::size_t p = 0; p < P; ++p) logits[p] = bias[p];
    for (std::size_t d = 0; d < D; ++d) {
      const double xv = x[d];
      if (xv == 0.0) continue;
      for (std::size_t p = 0; p < P; ++p) logits[p] += xv * W[d * P + p];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) acc += std::exp(logits[p] - mx);
    const double lse = mx + std::log(acc);
    r.loss += lse - logits[instances[i].label];
    for (std::size_t p = 0; p < P; ++p) {
      probs[p] = (std::exp(logits[p] - lse) - (p == instances[i].label ? 1.0 : 0.0)) / static_cast<double>(B);
      gb[p] += probs[p];
    }
    auto gx = r.grad_inputs.row(i);
    for (std::size_t d = 0; d < D; ++d) {
      double g = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        gw[d * P + p] += x[d] * probs[p];
        g += probs[p] * W[d * P + p];
      }
      gx[d] = static_cast<float>(g);
    }
  }
  r.loss /= static_cast<double>(B);
  for (std::size_t k = 0; k < gw.size(); ++k) r.grad_weight[k] = static_cast<float>(gw[k]);
  for (std::size_t p = 0; p < P; ++p) r.grad_bias[p] = static_cast<float>(gb[p]);
  return r;
}

}  // namespace unirep
