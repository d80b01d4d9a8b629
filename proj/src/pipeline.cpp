#include "unirep/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "unirep/errors.hpp"
#include "unirep/fcmi.hpp"

namespace unirep {

using nlohmann::json;

namespace {

constexpr std::uint64_t kModelStream = 0x30de1;
constexpr std::uint64_t kTrainStream = 0x7a1;
constexpr std::uint64_t kProbeStream = 0x960be;

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw DimensionError("concat_rows: widths differ");
  std::vector<float> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor({a.rows() + b.rows(), a.cols()}, std::move(data));
}

void require_finite_term(double v, const char* name) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term ") + name);
}

void scale_grads(MlpGrads& g, float f) {
  for (Tensor* t : {&g.w1, &g.b1, &g.w2, &g.b2}) {
    for (auto& v : t->data()) v *= f;
  }
}

}  // namespace

std::uint64_t Model::frozen_checksum() const {
  std::uint64_t h = enc_a.checksum();
  h ^= enc_b.checksum() * 0x9e3779b97f4a7c15ULL;
  h ^= codebook.checksum() * 0xc2b2ae3d27d4eb4fULL;
  return h;
}

Model make_model(const RunConfig& config, std::size_t d_in_a, std::size_t d_in_b) {
  config.validate();
  Rng init = Rng(config.seed).derive(kModelStream);
  const std::size_t D = config.model.dim, H = config.model.hidden_dim();
  Model m;
  m.enc_a = Mlp(MlpRole::encoder, Modality::a, d_in_a, H, D, init);
  m.enc_b = Mlp(MlpRole::encoder, Modality::b, d_in_b, H, D, init);
  m.dec_a = Mlp(MlpRole::decoder, Modality::a, D, H, d_in_a, init);
  m.dec_b = Mlp(MlpRole::decoder, Modality::b, D, H, d_in_b, init);
  m.codebook = Codebook(config.codebook.size, D, config.codebook.gamma, config.codebook.epsilon);
  const std::size_t P = config.permutation_count();
  switch (config.cujp.mode) {
    case JigsawMode::cujp:
      m.universe = build_universe(init, config.cujp.segments, P);
      m.classifier = PermClassifier(D, P, init);
      break;
    case JigsawMode::mmjp:
      m.universe = build_universe(init, 2 * config.cujp.mmjp_splits, P);
      m.classifier = PermClassifier(2 * D, P, init);
      break;
    case JigsawMode::off:
      break;
  }
  return m;
}

json EpochLog::to_json() const {
  return json{{"epoch", epoch},          {"l_fine", mean.fine},     {"l_coarse", mean.coarse},
              {"l_cujp", mean.cujp},     {"l_recon", mean.recon},   {"l_commit", mean.commit},
              {"total", mean.total},     {"perplexity", perplexity}};
}

Trainer::Trainer(RunConfig config, std::size_t d_in_a, std::size_t d_in_b)
    : Trainer(config, make_model(config, d_in_a, d_in_b)) {}

Trainer::Trainer(RunConfig config, Model model)
    : config_(std::move(config)),
      model_(std::move(model)),
      adam_(config_.train.adam),
      rng_(Rng(config_.seed).derive(kTrainStream)) {}

void Trainer::ensure_codebook(const Tensor& x_a, const Tensor& x_b) {
  if (model_.codebook_ready) return;
  const Tensor rows = concat_rows(model_.enc_a.apply(x_a).as_matrix(), model_.enc_b.apply(x_b).as_matrix());
  model_.codebook.init_from_samples(rng_, rows, config_.codebook.init_noise);
  model_.codebook_ready = true;
}

StepOutcome Trainer::compute(const Tensor& x_a, const Tensor& x_b, Rng& rng) const {
  if (x_a.rank() != 3 || x_b.rank() != 3 || x_a.dim(0) != x_b.dim(0) || x_a.dim(1) != x_b.dim(1)) {
    throw DimensionError("training batch must be paired [N x T x d_in] tensors, got " + shape_str(x_a.shape()) +
                         " and " + shape_str(x_b.shape()));
  }
  if (!model_.codebook_ready) throw TrainingError("codebook has not been seeded; call ensure_codebook first");
  const auto& w = config_.train.weights;
  const std::size_t N = x_a.dim(0), T = x_a.dim(1), D = config_.model.dim;

  const MlpForward fa = model_.enc_a.forward(x_a);
  const MlpForward fb = model_.enc_b.forward(x_b);
  StepOutcome out;
  out.z_a = fa.output;
  out.z_b = fb.output;
  out.grads.enc_a = model_.enc_a.zero_grads();
  out.grads.enc_b = model_.enc_b.zero_grads();
  out.grads.dec_a = model_.dec_a.zero_grads();
  out.grads.dec_b = model_.dec_b.zero_grads();
  if (config_.cujp.mode != JigsawMode::off) {
    out.grads.clf_weight = Tensor(model_.classifier.weight().shape());
    out.grads.clf_bias = Tensor(model_.classifier.bias().shape());
  }
  Tensor grad_a(out.z_a.shape()), grad_b(out.z_b.shape());
  auto& L = out.losses;

  if (w.fcmi > 0.0 && (config_.fcmi.use_fine || config_.fcmi.use_coarse)) {
    const MaskPlan plan = make_masks(rng, N, D, config_.mask_ratio, config_.mask_mode);
    const FcmiResult fc = fcmi_total(out.z_a, out.z_b, plan, config_.fcmi);
    L.fine = fc.fine;
    L.coarse = fc.coarse;
    add_inplace(grad_a, fc.grad_a, static_cast<float>(w.fcmi));
    add_inplace(grad_b, fc.grad_b, static_cast<float>(w.fcmi));
  }

  out.q_a = model_.codebook.quantize(out.z_a);
  out.q_b = model_.codebook.quantize(out.z_b);

  if (w.recon > 0.0) {
    ReconResult ra = reconstruction_loss(model_.dec_a, StraightThrough::forward(out.z_a, out.q_a.quantized), x_a);
    ReconResult rb = reconstruction_loss(model_.dec_b, StraightThrough::forward(out.z_b, out.q_b.quantized), x_b);
    L.recon = ra.loss + rb.loss;
    add_inplace(grad_a, StraightThrough::backward(ra.grad_input), static_cast<float>(w.recon));
    add_inplace(grad_b, StraightThrough::backward(rb.grad_input), static_cast<float>(w.recon));
    scale_grads(ra.decoder, static_cast<float>(w.recon));
    scale_grads(rb.decoder, static_cast<float>(w.recon));
    out.grads.dec_a = std::move(ra.decoder);
    out.grads.dec_b = std::move(rb.decoder);
  }

  if (w.commit > 0.0) {
    const CommitResult ca = commit_loss(out.z_a, out.q_a.quantized);
    const CommitResult cb = commit_loss(out.z_b, out.q_b.quantized);
    L.commit = ca.loss + cb.loss;
    add_inplace(grad_a, ca.grad, static_cast<float>(w.commit));
    add_inplace(grad_b, cb.grad, static_cast<float>(w.commit));
  }

  if (w.cujp > 0.0 && config_.cujp.mode != JigsawMode::off) {
    const bool mmjp = config_.cujp.mode == JigsawMode::mmjp;
    const std::size_t splits = mmjp ? config_.cujp.mmjp_splits : config_.cujp.segments;
    std::vector<JigsawInstance> instances;
    std::vector<std::size_t> source_rows;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t r = 0; r < config_.cujp.instances_per_sample; ++r) {
        const std::size_t row = i * T + static_cast<std::size_t>(rng.uniform_int(T));
        const auto code_a = out.q_a.quantized.row(row);
        const auto code_b = out.q_b.quantized.row(row);
        instances.push_back(mmjp ? mmjp_compose(rng, model_.universe, {code_a, code_b}, splits)
                                 : compose_instance(rng, model_.universe, code_a, code_b));
        source_rows.push_back(row);
      }
    }
    const CujpLossResult cl = cujp_loss(model_.classifier, instances);
    L.cujp = cl.loss;
    out.grads.clf_weight = scale(cl.grad_weight, static_cast<float>(w.cujp));
    out.grads.clf_bias = scale(cl.grad_bias, static_cast<float>(w.cujp));
    const std::size_t lengths[] = {D, D};
    for (std::size_t k = 0; k < instances.size(); ++k) {
      // Codes are straight-through copies of z, so their gradient lands on z.
      const auto parts = scatter_to_sources(instances[k], cl.grad_inputs.row(k), lengths, splits);
      auto ra = grad_a.row(source_rows[k]);
      auto rb = grad_b.row(source_rows[k]);
      for (std::size_t d = 0; d < D; ++d) {
        ra[d] += static_cast<float>(w.cujp) * parts[0][d];
        rb[d] += static_cast<float>(w.cujp) * parts[1][d];
      }
    }
  }

  require_finite_term(L.fine, "l_fine");
  require_finite_term(L.coarse, "l_coarse");
  require_finite_term(L.cujp, "l_cujp");
  require_finite_term(L.recon, "l_recon");
  require_finite_term(L.commit, "l_commit");
  L.total = w.fcmi * (L.fine + L.coarse) + w.cujp * L.cujp + w.recon * L.recon + w.commit * L.commit;
  require_finite_term(L.total, "total");

  model_.enc_a.backward(fa.cache, grad_a, out.grads.enc_a);
  model_.enc_b.backward(fb.cache, grad_b, out.grads.enc_b);
  return out;
}

StepLosses Trainer::step(const Tensor& x_a, const Tensor& x_b) {
  ensure_codebook(x_a, x_b);
  StepOutcome out = compute(x_a, x_b, rng_);

  const Tensor rows = concat_rows(out.z_a.as_matrix(), out.z_b.as_matrix());
  std::vector<std::uint32_t> assignments = out.q_a.indices;
  assignments.insert(assignments.end(), out.q_b.indices.begin(), out.q_b.indices.end());
  model_.codebook.ema_update(rows, assignments);
  if (config_.codebook.reseed_after > 0) model_.codebook.reseed_dead(rng_, rows, config_.codebook.reseed_after);
  epoch_assignments_.insert(epoch_assignments_.end(), assignments.begin(), assignments.end());

  std::vector<ParamRef> params;
  for (auto& r : param_refs(model_.enc_a, out.grads.enc_a)) params.push_back(r);
  for (auto& r : param_refs(model_.enc_b, out.grads.enc_b)) params.push_back(r);
  for (auto& r : param_refs(model_.dec_a, out.grads.dec_a)) params.push_back(r);
  for (auto& r : param_refs(model_.dec_b, out.grads.dec_b)) params.push_back(r);
  if (config_.cujp.mode != JigsawMode::off) {
    params.push_back({"jigsaw.weight", &model_.classifier.weight(), &out.grads.clf_weight});
    params.push_back({"jigsaw.bias", &model_.classifier.bias(), &out.grads.clf_bias});
  }
  adam_.step(params);
  return out.losses;
}

EpochLog Trainer::run_epoch(const ModalBatch& data) {
  if (data.size() < 2) throw DataError("pretraining split needs at least two samples");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(order));
  epoch_assignments_.clear();

  EpochLog log;
  log.epoch = ++epochs_;
  std::size_t batches = 0;
  const std::size_t B = config_.train.batch_size;
  for (std::size_t start = 0; start < order.size(); start += B) {
    const std::size_t end = std::min(order.size(), start + B);
    if (end - start < 2) break;
    const ModalBatch batch = gather(data, std::span<const std::size_t>(order).subspan(start, end - start));
    const StepLosses s = step(batch.x_a, batch.x_b);
    log.mean.fine += s.fine;
    log.mean.coarse += s.coarse;
    log.mean.cujp += s.cujp;
    log.mean.recon += s.recon;
    log.mean.commit += s.commit;
    log.mean.total += s.total;
    ++batches;
  }
  if (batches > 0) {
    const double n = static_cast<double>(batches);
    for (double* v : {&log.mean.fine, &log.mean.coarse, &log.mean.cujp, &log.mean.recon, &log.mean.commit,
                      &log.mean.total}) {
      *v /= n;
    }
  }
  log.perplexity = perplexity(usage_counts(epoch_assignments_, model_.codebook.size()));
  return log;
}

PretrainResult pretrain(const RunConfig& config, const Dataset& data) {
  const ModalBatch& pre = data.get(Split::pretrain);
  if (pre.size() == 0) throw DataError("pretraining split is empty");
  Trainer trainer(config, pre.x_a.dim(2), pre.x_b.dim(2));
  PretrainResult result;
  for (std::size_t e = 0; e < config.train.epochs; ++e) result.log.push_back(trainer.run_epoch(pre));
  result.model = trainer.model();
  return result;
}

Tensor pooled_features(const Model& model, Modality m, const Tensor& x, FeatureSource source, Pooling pooling) {
  Tensor z = model.encoder(m).apply(x);
  if (source == FeatureSource::quantized) z = model.codebook.quantize(z).quantized;
  if (pooling == Pooling::concat) return z.reshaped({z.dim(0), z.size() / std::max<std::size_t>(1, z.dim(0))});
  return mean_over_time(z);
}

FeatureScaler fit_scaler(const Tensor& features, FeatureNorm norm) {
  FeatureScaler s;
  s.norm = norm;
  if (norm != FeatureNorm::standardize) return s;
  const std::size_t N = features.dim(0), D = features.dim(1);
  s.mean.assign(D, 0.0);
  s.scale.assign(D, 1.0);
  if (N == 0) return s;
  for (std::size_t i = 0; i < N; ++i) {
    const auto x = features.row(i);
    for (std::size_t d = 0; d < D; ++d) s.mean[d] += x[d];
  }
  for (auto& m : s.mean) m /= static_cast<double>(N);
  std::vector<double> var(D, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto x = features.row(i);
    for (std::size_t d = 0; d < D; ++d) var[d] += (x[d] - s.mean[d]) * (x[d] - s.mean[d]);
  }
  for (std::size_t d = 0; d < D; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(N));
    s.scale[d] = sd > 1e-8 ? 1.0 / sd : 1.0;
  }
  return s;
}

void FeatureScaler::apply(Tensor& features) const {
  if (norm == FeatureNorm::none || features.rank() != 2) return;
  const std::size_t N = features.dim(0), D = features.dim(1);
  for (std::size_t i = 0; i < N; ++i) {
    auto x = features.row(i);
    if (norm == FeatureNorm::l2) {
      double sq = 0.0;
      for (float v : x) sq += static_cast<double>(v) * v;
      const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
      for (auto& v : x) v = static_cast<float>(v * inv);
    } else {
      if (mean.size() != D) throw DimensionError("feature scaler fitted on a different width");
      for (std::size_t d = 0; d < D; ++d) x[d] = static_cast<float>((x[d] - mean[d]) * scale[d]);
    }
  }
}

Tensor ProbeHead::logits(const Tensor& features) const { return add_row_bias(matmul(features, weight), bias); }

ProbeHead train_probe(const Tensor& features, std::span<const std::uint32_t> labels,
                      std::span<const std::uint32_t> known_classes, const ProbeOptions& options, Rng& rng) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("train_probe: features " + shape_str(features.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (known_classes.empty()) throw DataError("train_probe needs at least one known class");
  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t k = 0; k < known_classes.size(); ++k) slot[known_classes[k]] = k;
  std::vector<std::size_t> target(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = slot.find(labels[i]);
    if (it == slot.end()) throw DataError("probe label " + std::to_string(labels[i]) + " is not a known class");
    target[i] = it->second;
  }

  const std::size_t D = features.dim(1), C = known_classes.size();
  ProbeHead head;
  head.weight = Tensor({D, C});
  head.bias = Tensor({C});
  head.classes.assign(known_classes.begin(), known_classes.end());
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> logits(C);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t end = std::min(order.size(), start + options.batch);
      const double B = static_cast<double>(end - start);
      std::vector<double> gw(D * C, 0.0), gb(C, 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto x = features.row(order[k]);
        for (std::size_t c = 0; c < C; ++c) logits[c] = head.bias[c];
        for (std::size_t d = 0; d < D; ++d) {
          for (std::size_t c = 0; c < C; ++c) logits[c] += static_cast<double>(x[d]) * head.weight[d * C + c];
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double acc = 0.0;
        for (double l : logits) acc += std::exp(l - mx);
        for (std::size_t c = 0; c < C; ++c) {
          const double g = (std::exp(logits[c] - mx) / acc - (c == target[order[k]] ? 1.0 : 0.0)) / B;
          gb[c] += g;
          for (std::size_t d = 0; d < D; ++d) gw[d * C + c] += g * x[d];
        }
      }
      for (std::size_t k = 0; k < gw.size(); ++k) head.weight[k] -= static_cast<float>(options.lr * gw[k]);
      for (std::size_t c = 0; c < C; ++c) head.bias[c] -= static_cast<float>(options.lr * gb[c]);
    }
  }
  return head;
}

ProbeHead train_probe(const Mlp& frozen_encoder, const ModalBatch& probe_data, Modality m,
                      std::span<const std::uint32_t> known_classes, const ProbeOptions& options, Rng& rng) {
  const Tensor features = mean_over_time(frozen_encoder.apply(probe_data.x(m == Modality::b)));
  return train_probe(features, probe_data.labels, known_classes, options, rng);
}

double calibrate_threshold(const ProbeHead& probe, const Tensor& features, std::span<const std::uint32_t> labels,
                           double pct) {
  const auto preds = predict(probe.logits(features));
  std::vector<double> confidences;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (probe.classes.at(preds[i].class_index) == labels[i]) confidences.push_back(std::exp(preds[i].log_confidence));
  }
  return confidences.empty() ? 0.0 : percentile(std::move(confidences), pct);
}

OpenSetScores evaluate_openset(const ProbeHead& probe, const Tensor& known_features,
                               std::span<const std::uint32_t> known_labels, const Tensor& unknown_features,
                               double theta) {
  const auto known = predict(probe.logits(known_features));
  std::vector<Prediction> unknown;
  if (unknown_features.rank() == 2 && unknown_features.dim(0) > 0) unknown = predict(probe.logits(unknown_features));
  return score_open_set(known, known_labels, probe.classes, unknown, theta);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

std::string direction(Modality s, Modality t) {
  return std::string(modality_name(s)) + "->" + std::string(modality_name(t));
}

}  // namespace

json EvalReport::to_json() const {
  json per = json::array();
  for (const auto& c : scores.per_class) {
    per.push_back({{"label", c.label}, {"samples", c.samples}, {"correct", c.correct}, {"accuracy", c.accuracy}});
  }
  json recall_json = json::object();
  for (const auto& r : recall) recall_json[std::to_string(r.k)] = {{"a_to_b", r.a_to_b}, {"b_to_a", r.b_to_a}};
  return json{
      {"direction", direction(source, target)},
      {"source_modality", std::string(modality_name(source))},
      {"target_modality", std::string(modality_name(target))},
      {"source_encoder", source_encoder},
      {"target_encoder", target_encoder},
      {"split", to_string(split)},
      {"seed", seed},
      {"known_classes", known_classes},
      {"unknown_classes", unknown_classes},
      {"theta", theta},
      {"os_star", scores.os_star},
      {"unk", scores.unk ? json(*scores.unk) : json(nullptr)},
      {"hos", scores.hos ? json(*scores.hos) : json(nullptr)},
      {"closed_set_accuracy", scores.closed_set_accuracy},
      {"per_class", per},
      {"recall", recall_json},
      {"codebook",
       {{"perplexity", perplexity}, {"shared", codewords_shared}, {"single", codewords_single}, {"dead", codewords_dead}}},
  };
}

std::string EvalReport::csv_header() {
  return "seed,direction,split,theta,os_star,unk,hos,closed_set_accuracy,recall1_ab,recall1_ba,recall5_ab,recall5_ba,"
         "recall10_ab,recall10_ba,perplexity";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << seed << ',' << direction(source, target) << ',' << to_string(split) << ',' << fmt(theta) << ','
     << fmt(scores.os_star) << ',' << (scores.unk ? fmt(*scores.unk) : "") << ','
     << (scores.hos ? fmt(*scores.hos) : "") << ',' << fmt(scores.closed_set_accuracy);
  for (std::size_t k : {1, 5, 10}) {
    auto it = std::find_if(recall.begin(), recall.end(), [k](const RecallAtK& r) { return r.k == k; });
    if (it == recall.end()) {
      os << ",,";
    } else {
      os << ',' << fmt(it->a_to_b) << ',' << fmt(it->b_to_a);
    }
  }
  os << ',' << fmt(perplexity);
  return os.str();
}

OpenSetInputs prepare_openset(const Model& model, const Dataset& data, const RunConfig& config, Modality source) {
  const Modality target = other(source);
  const bool src_b = source == Modality::b, tgt_b = target == Modality::b;
  const FeatureSource fs = config.eval.features;
  const Pooling pool = config.eval.pooling;
  const auto& probe_train = data.get(Split::probe_train);
  const auto& probe_val = data.get(Split::probe_val);
  const auto& test_known = data.get(Split::test_known);
  const auto& test_unknown = data.get(Split::test_unknown);

  Rng rng = Rng(config.seed).derive(kProbeStream);
  const ProbeOptions opts{config.eval.probe_epochs, config.eval.probe_batch, config.eval.probe_lr};
  Tensor train_features = pooled_features(model, source, probe_train.x(src_b), fs, pool);
  const FeatureScaler scaler = fit_scaler(train_features, config.eval.feature_norm);
  scaler.apply(train_features);
  const auto features = [&](Modality m, const Tensor& x) {
    Tensor f = pooled_features(model, m, x, fs, pool);
    scaler.apply(f);
    return f;
  };

  OpenSetInputs in;
  in.probe = train_probe(train_features, probe_train.labels, data.classes.known, opts, rng);
  in.theta = calibrate_threshold(in.probe, features(source, probe_val.x(src_b)), probe_val.labels,
                                 config.eval.reject_percentile);
  in.known_features = features(target, test_known.x(tgt_b));
  in.known_labels = test_known.labels;
  in.unknown_features = test_unknown.size() > 0 ? features(target, test_unknown.x(tgt_b))
                                                : Tensor({0, in.known_features.dim(1)});
  return in;
}

EvalReport run_downstream(const Model& model, const Dataset& data, const RunConfig& config, Modality source) {
  const Modality target = other(source);
  const FeatureSource fs = config.eval.features;
  const auto& test_known = data.get(Split::test_known);
  const auto& test_unknown = data.get(Split::test_unknown);
  const OpenSetInputs in = prepare_openset(model, data, config, source);

  EvalReport report;
  report.source = source;
  report.target = target;
  report.source_encoder = model.encoder(source).name();
  report.target_encoder = model.encoder(target).name();
  report.seed = config.seed;
  report.known_classes = data.classes.known;
  report.unknown_classes = data.classes.unknown;
  report.split = known_count(data.spec.n_classes, SplitPreset::three_to_one) == data.spec.n_known &&
                         known_count(data.spec.n_classes, SplitPreset::one_to_one) != data.spec.n_known
                     ? SplitPreset::three_to_one
                     : SplitPreset::one_to_one;
  report.theta = in.theta;
  report.scores = evaluate_openset(in.probe, in.known_features, in.known_labels, in.unknown_features, in.theta);

  // Retrieval and codebook statistics over every paired test sample.
  std::vector<float> pa, pb;
  std::vector<std::uint32_t> assign_a, assign_b;
  for (const ModalBatch* b : {&test_known, &test_unknown}) {
    if (b->size() == 0) continue;
    const Tensor za = model.enc_a.apply(b->x_a), zb = model.enc_b.apply(b->x_b);
    const Tensor fa = fs == FeatureSource::quantized ? model.codebook.quantize(za).quantized : za;
    const Tensor fb = fs == FeatureSource::quantized ? model.codebook.quantize(zb).quantized : zb;
    const Tensor ma = mean_over_time(fa), mb = mean_over_time(fb);
    pa.insert(pa.end(), ma.data().begin(), ma.data().end());
    pb.insert(pb.end(), mb.data().begin(), mb.data().end());
    const auto qa = model.codebook.quantize(za), qb = model.codebook.quantize(zb);
    assign_a.insert(assign_a.end(), qa.indices.begin(), qa.indices.end());
    assign_b.insert(assign_b.end(), qb.indices.begin(), qb.indices.end());
  }
  const std::size_t M = pa.size() / config.model.dim;
  report.recall = recall_at_k(Tensor({M, config.model.dim}, std::move(pa)), Tensor({M, config.model.dim}, std::move(pb)),
                              config.eval.recall_k);
  const std::size_t H = model.codebook.size();
  const auto ca = usage_counts(assign_a, H), cb = usage_counts(assign_b, H);
  std::vector<std::size_t> both(H);
  for (std::size_t l = 0; l < H; ++l) both[l] = ca[l] + cb[l];
  report.perplexity = perplexity(both);
  const CoactivationTable table = coactivation_stats({ca, cb});
  report.codewords_shared = table.count(ShareClass::all);
  report.codewords_single = table.count(ShareClass::single);
  report.codewords_dead = table.count(ShareClass::dead);
  return report;
}

Dataset dataset_for_split(const RunConfig& config, SplitPreset preset) {
  GenSpec spec = config.gen_spec();
  spec.n_known = known_count(spec.n_classes, preset);
  return generate(spec);
}

PipelineResult run_pipeline(const RunConfig& config) {
  config.validate();
  const Dataset data = dataset_for_split(config, config.eval.split);
  PipelineResult r;
  r.pretrain = pretrain(config, data);
  r.report = run_downstream(r.pretrain.model, data, config, config.eval.source);
  r.report.split = config.eval.split;
  return r;
}

}  // namespace unirep
