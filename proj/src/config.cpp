#include "unirep/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "unirep/cujp.hpp"
#include "unirep/errors.hpp"

namespace unirep {

using nlohmann::json;

std::string to_string(JigsawMode m) {
  switch (m) {
    case JigsawMode::cujp: return "cujp";
    case JigsawMode::mmjp: return "mmjp";
    case JigsawMode::off: return "off";
  }
  return "?";
}

JigsawMode parse_jigsaw_mode(const std::string& s) {
  if (s == "cujp") return JigsawMode::cujp;
  if (s == "mmjp") return JigsawMode::mmjp;
  if (s == "off") return JigsawMode::off;
  throw ConfigError("cujp.mode must be cujp, mmjp or off, got '" + s + "'", "cujp.mode");
}

void LossWeights::validate() const {
  const std::pair<double, const char*> all[] = {{fcmi, "train.lambda_fcmi"},
                                                {cujp, "train.lambda_cujp"},
                                                {recon, "train.lambda_recon"},
                                                {commit, "train.lambda_commit"}};
  for (const auto& [v, key] : all) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be a finite value >= 0", key);
  }
}

GenSpec RunConfig::gen_spec() const {
  GenSpec g = gen;
  g.seed = seed;
  g.latent_dim = model.dim;
  return g;
}

std::size_t RunConfig::permutation_count() const {
  if (cujp.mode == JigsawMode::mmjp) {
    const std::size_t segs = 2 * cujp.mmjp_splits;
    if (cujp.permutations != 0) return cujp.permutations;
    return default_permutation_count(segs);
  }
  return cujp.permutations != 0 ? cujp.permutations : default_permutation_count(cujp.segments);
}

void RunConfig::validate() const {
  gen_spec().validate();
  if (model.dim == 0) throw ConfigError("model.dim must be positive", "model.dim");
  fcmi.validate();
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("fcmi.mask_ratio must lie in [0, 1)", "fcmi.mask_ratio");
  if (codebook.size == 0) throw ConfigError("codebook.size must be positive", "codebook.size");
  if (!(codebook.gamma >= 0.0 && codebook.gamma < 1.0)) throw ConfigError("codebook.gamma must lie in [0, 1)", "codebook.gamma");
  if (!(codebook.epsilon > 0.0)) throw ConfigError("codebook.epsilon must be > 0", "codebook.epsilon");
  if (!(codebook.init_noise >= 0.0)) throw ConfigError("codebook.init_noise must be >= 0", "codebook.init_noise");
  if (cujp.mode == JigsawMode::cujp) {
    if (cujp.segments == 0 || model.dim % cujp.segments != 0) {
      throw ConfigError("cujp.segments (" + std::to_string(cujp.segments) + ") must divide model.dim (" +
                            std::to_string(model.dim) + ")",
                        "cujp.segments");
    }
    if (cujp.segments <= 20 && permutation_count() > factorial(cujp.segments)) {
      throw ConfigError("cujp.permutations exceeds " + std::to_string(cujp.segments) + "!", "cujp.permutations");
    }
  } else if (cujp.mode == JigsawMode::mmjp) {
    if (cujp.mmjp_splits == 0 || cujp.mmjp_splits > model.dim) {
      throw ConfigError("cujp.mmjp_splits must lie in [1, model.dim]", "cujp.mmjp_splits");
    }
    mmjp_universe_bound(2, cujp.mmjp_splits, cujp.mmjp_cap);
    if (permutation_count() > factorial(2 * cujp.mmjp_splits)) {
      throw ConfigError("cujp.permutations exceeds the MMJP universe", "cujp.permutations");
    }
  }
  if (cujp.instances_per_sample == 0) {
    throw ConfigError("cujp.instances_per_sample must be positive", "cujp.instances_per_sample");
  }
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2", "train.batch_size");
  if (!(train.adam.lr > 0.0)) throw ConfigError("train.lr must be > 0", "train.lr");
  if (!(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)", "train.beta1");
  if (!(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)", "train.beta2");
  if (!(train.adam.eps > 0.0)) throw ConfigError("train.eps must be > 0", "train.eps");
  train.weights.validate();
  if (eval.probe_epochs == 0) throw ConfigError("eval.probe_epochs must be positive", "eval.probe_epochs");
  if (eval.probe_batch == 0) throw ConfigError("eval.probe_batch must be positive", "eval.probe_batch");
  if (!(eval.probe_lr > 0.0)) throw ConfigError("eval.probe_lr must be > 0", "eval.probe_lr");
  if (!(eval.reject_percentile >= 0.0 && eval.reject_percentile <= 100.0)) {
    throw ConfigError("eval.reject_percentile must lie in [0, 100]", "eval.reject_percentile");
  }
  for (auto k : eval.recall_k) {
    if (k == 0) throw ConfigError("eval.recall_k entries must be positive", "eval.recall_k");
  }
}

json RunConfig::to_json() const {
  json pairs = json::array();
  for (const auto& p : fcmi.pairs) pairs.push_back(to_string(p));
  return json{
      {"seed", seed},
      {"gen",
       {{"n_classes", gen.n_classes},
        {"n_known", gen.n_known},
        {"samples_per_class", gen.samples_per_class},
        {"timesteps", gen.timesteps},
        {"d_in_a", gen.d_in_a},
        {"d_in_b", gen.d_in_b},
        {"latent_noise", gen.latent_noise},
        {"sigma", gen.sigma},
        {"corruption", gen.corruption},
        {"pretrain_fraction", gen.pretrain_fraction}}},
      {"model", {{"dim", model.dim}, {"hidden", model.hidden}}},
      {"fcmi",
       {{"tau", fcmi.tau},
        {"mask_ratio", mask_ratio},
        {"mask_mode", to_string(mask_mode)},
        {"pairs", pairs},
        {"normalize", fcmi.normalize},
        {"fine", fcmi.use_fine},
        {"coarse", fcmi.use_coarse}}},
      {"codebook",
       {{"size", codebook.size},
        {"gamma", codebook.gamma},
        {"epsilon", codebook.epsilon},
        {"init_noise", codebook.init_noise},
        {"reseed_after", codebook.reseed_after}}},
      {"cujp",
       {{"mode", to_string(cujp.mode)},
        {"segments", cujp.segments},
        {"permutations", cujp.permutations},
        {"mmjp_splits", cujp.mmjp_splits},
        {"mmjp_cap", cujp.mmjp_cap},
        {"instances_per_sample", cujp.instances_per_sample}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"lr", train.adam.lr},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"eps", train.adam.eps},
        {"lambda_fcmi", train.weights.fcmi},
        {"lambda_cujp", train.weights.cujp},
        {"lambda_recon", train.weights.recon},
        {"lambda_commit", train.weights.commit}}},
      {"eval",
       {{"probe_epochs", eval.probe_epochs},
        {"probe_batch", eval.probe_batch},
        {"probe_lr", eval.probe_lr},
        {"reject_percentile", eval.reject_percentile},
        {"features", eval.features == FeatureSource::continuous ? "continuous" : "quantized"},
        {"pooling", eval.pooling == Pooling::mean ? "mean" : "concat"},
        {"feature_norm", eval.feature_norm == FeatureNorm::none ? "none"
                         : eval.feature_norm == FeatureNorm::l2 ? "l2"
                                                                : "standardize"},
        {"recall_k", eval.recall_k},
        {"source", std::string(modality_name(eval.source))},
        {"split", to_string(eval.split)}}},
  };
}

json flatten_json(const json& j) {
  json flat = json::object();
  auto walk = [&flat](auto&& self, const json& node, const std::string& prefix) -> void {
    if (node.is_object()) {
      for (auto it = node.begin(); it != node.end(); ++it) {
        self(self, it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
      }
    } else {
      flat[prefix] = node;
    }
  };
  walk(walk, j, "");
  return flat;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const json flat = flatten_json(RunConfig{}.to_json());
  for (auto it = flat.begin(); it != flat.end(); ++it) keys.push_back(it.key());
  return keys;
}

namespace {

template <typename T>
T get(const json& flat, const std::string& key) {
  try {
    return flat.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + e.what(), key);
  }
}

std::size_t get_count(const json& flat, const std::string& key) {
  const json& v = flat.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer", key);
  }
  return v.get<std::size_t>();
}

template <typename Fn>
auto parse_enum(const json& flat, const std::string& key, Fn&& fn) {
  const auto s = get<std::string>(flat, key);
  try {
    return fn(s);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), key);
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json flat = flatten_json(RunConfig{}.to_json());
  const json user = flatten_json(j);
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!flat.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'", it.key());
    flat[it.key()] = it.value();
  }

  RunConfig c;
  c.seed = get<std::uint64_t>(flat, "seed");
  c.gen.n_classes = get_count(flat, "gen.n_classes");
  c.gen.n_known = get_count(flat, "gen.n_known");
  c.gen.samples_per_class = get_count(flat, "gen.samples_per_class");
  c.gen.timesteps = get_count(flat, "gen.timesteps");
  c.gen.d_in_a = get_count(flat, "gen.d_in_a");
  c.gen.d_in_b = get_count(flat, "gen.d_in_b");
  c.gen.latent_noise = get<double>(flat, "gen.latent_noise");
  c.gen.sigma = get<double>(flat, "gen.sigma");
  c.gen.corruption = get<double>(flat, "gen.corruption");
  c.gen.pretrain_fraction = get<double>(flat, "gen.pretrain_fraction");

  c.model.dim = get_count(flat, "model.dim");
  c.model.hidden = get_count(flat, "model.hidden");

  c.fcmi.tau = get<double>(flat, "fcmi.tau");
  c.mask_ratio = get<double>(flat, "fcmi.mask_ratio");
  c.mask_mode = parse_enum(flat, "fcmi.mask_mode", parse_mask_mode);
  c.fcmi.pairs.clear();
  for (const auto& p : get<std::vector<std::string>>(flat, "fcmi.pairs")) c.fcmi.pairs.push_back(parse_modality_pair(p));
  c.fcmi.normalize = get<bool>(flat, "fcmi.normalize");
  c.fcmi.use_fine = get<bool>(flat, "fcmi.fine");
  c.fcmi.use_coarse = get<bool>(flat, "fcmi.coarse");

  c.codebook.size = get_count(flat, "codebook.size");
  c.codebook.gamma = get<double>(flat, "codebook.gamma");
  c.codebook.epsilon = get<double>(flat, "codebook.epsilon");
  c.codebook.init_noise = get<double>(flat, "codebook.init_noise");
  c.codebook.reseed_after = get_count(flat, "codebook.reseed_after");

  c.cujp.mode = parse_enum(flat, "cujp.mode", parse_jigsaw_mode);
  c.cujp.segments = get_count(flat, "cujp.segments");
  c.cujp.permutations = get_count(flat, "cujp.permutations");
  c.cujp.mmjp_splits = get_count(flat, "cujp.mmjp_splits");
  c.cujp.mmjp_cap = get<std::uint64_t>(flat, "cujp.mmjp_cap");
  c.cujp.instances_per_sample = get_count(flat, "cujp.instances_per_sample");

  c.train.epochs = get_count(flat, "train.epochs");
  c.train.batch_size = get_count(flat, "train.batch_size");
  c.train.adam.lr = get<double>(flat, "train.lr");
  c.train.adam.beta1 = get<double>(flat, "train.beta1");
  c.train.adam.beta2 = get<double>(flat, "train.beta2");
  c.train.adam.eps = get<double>(flat, "train.eps");
  c.train.weights.fcmi = get<double>(flat, "train.lambda_fcmi");
  c.train.weights.cujp = get<double>(flat, "train.lambda_cujp");
  c.train.weights.recon = get<double>(flat, "train.lambda_recon");
  c.train.weights.commit = get<double>(flat, "train.lambda_commit");

  c.eval.probe_epochs = get_count(flat, "eval.probe_epochs");
  c.eval.probe_batch = get_count(flat, "eval.probe_batch");
  c.eval.probe_lr = get<double>(flat, "eval.probe_lr");
  c.eval.reject_percentile = get<double>(flat, "eval.reject_percentile");
  const auto features = get<std::string>(flat, "eval.features");
  if (features == "continuous") {
    c.eval.features = FeatureSource::continuous;
  } else if (features == "quantized") {
    c.eval.features = FeatureSource::quantized;
  } else {
    throw ConfigError("eval.features must be continuous or quantized", "eval.features");
  }
  const auto pooling = get<std::string>(flat, "eval.pooling");
  if (pooling == "mean") {
    c.eval.pooling = Pooling::mean;
  } else if (pooling == "concat") {
    c.eval.pooling = Pooling::concat;
  } else {
    throw ConfigError("eval.pooling must be mean or concat", "eval.pooling");
  }
  const auto norm = get<std::string>(flat, "eval.feature_norm");
  if (norm == "none") {
    c.eval.feature_norm = FeatureNorm::none;
  } else if (norm == "l2") {
    c.eval.feature_norm = FeatureNorm::l2;
  } else if (norm == "standardize") {
    c.eval.feature_norm = FeatureNorm::standardize;
  } else {
    throw ConfigError("eval.feature_norm must be none, l2 or standardize", "eval.feature_norm");
  }
  c.eval.recall_k = get<std::vector<std::size_t>>(flat, "eval.recall_k");
  c.eval.source = parse_enum(flat, "eval.source", parse_modality);
  c.eval.split = parse_enum(flat, "eval.split", parse_split_preset);

  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config file " + path);
  out << to_json().dump(2) << '\n';
}

RunConfig RunConfig::with(const std::string& key, const json& value) const {
  json flat = flatten_json(to_json());
  if (!flat.contains(key)) throw ConfigError("unknown config key '" + key + "'", key);
  flat[key] = value;
  return from_json(flat);
}

}  // namespace unirep
