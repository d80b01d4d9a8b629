#include "unirep/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "unirep/errors.hpp"

namespace unirep {

using nlohmann::json;

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

}  // namespace

json gen_spec_to_json(const GenSpec& s) {
  return json{{"n_classes", s.n_classes},
              {"n_known", s.n_known},
              {"samples_per_class", s.samples_per_class},
              {"timesteps", s.timesteps},
              {"d_in_a", s.d_in_a},
              {"d_in_b", s.d_in_b},
              {"latent_dim", s.latent_dim},
              {"latent_noise", s.latent_noise},
              {"sigma", s.sigma},
              {"corruption", s.corruption},
              {"pretrain_fraction", s.pretrain_fraction},
              {"seed", s.seed}};
}

GenSpec gen_spec_from_json(const json& j) {
  GenSpec s;
  s.n_classes = j.at("n_classes").get<std::size_t>();
  s.n_known = j.at("n_known").get<std::size_t>();
  s.samples_per_class = j.at("samples_per_class").get<std::size_t>();
  s.timesteps = j.at("timesteps").get<std::size_t>();
  s.d_in_a = j.at("d_in_a").get<std::size_t>();
  s.d_in_b = j.at("d_in_b").get<std::size_t>();
  s.latent_dim = j.at("latent_dim").get<std::size_t>();
  s.latent_noise = j.at("latent_noise").get<double>();
  s.sigma = j.at("sigma").get<double>();
  s.corruption = j.at("corruption").get<double>();
  s.pretrain_fraction = j.at("pretrain_fraction").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

void write_tensor(const fs::path& stem, const Tensor& t) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw DataError("cannot write " + with_suffix(stem, ".bin").string());
  std::vector<unsigned char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int k = 0; k < 4; ++k) bytes[4 * i + k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xffu);
  }
  bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  write_json(with_suffix(stem, ".json"), json{{"dtype", "float32"}, {"shape", t.shape()}});
}

Tensor read_tensor(const fs::path& stem) {
  const json meta = read_json(with_suffix(stem, ".json"));
  if (meta.value("dtype", "") != "float32") throw DataError(stem.string() + ": unsupported dtype");
  const Shape shape = meta.at("shape").get<Shape>();
  const std::size_t n = shape_numel(shape);
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw DataError("missing tensor file " + with_suffix(stem, ".bin").string());
  std::vector<unsigned char> bytes(n * 4);
  bin.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(bin.gcount()) != bytes.size() || bin.peek() != std::char_traits<char>::eof()) {
    throw DataError(with_suffix(stem, ".bin").string() + " does not hold " + shape_str(shape) + " float32 values");
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[4 * i + k]) << (8 * k);
    data[i] = std::bit_cast<float>(bits);
  }
  return Tensor(shape, std::move(data));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : read_text(path)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  json splits = json::object();
  for (Split s : kAllSplits) {
    const ModalBatch& b = data.get(s);
    const fs::path sub = dir / to_string(s);
    fs::create_directories(sub);
    write_tensor(sub / "x_a", b.x_a);
    write_tensor(sub / "x_b", b.x_b);
    splits[to_string(s)] = {{"size", b.size()}, {"labels", b.labels}, {"sample_ids", b.sample_ids}};
  }
  write_json(dir / "manifest.json",
             json{{"spec", gen_spec_to_json(data.spec)},
                  {"classes", {{"known", data.classes.known}, {"unknown", data.classes.unknown}}},
                  {"splits", splits}});
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  const json m = read_json(dir / "manifest.json");
  Dataset d;
  try {
    d.spec = gen_spec_from_json(m.at("spec"));
    d.classes.known = m.at("classes").at("known").get<std::vector<std::uint32_t>>();
    d.classes.unknown = m.at("classes").at("unknown").get<std::vector<std::uint32_t>>();
    for (Split s : kAllSplits) {
      const json& entry = m.at("splits").at(to_string(s));
      ModalBatch& b = d.get(s);
      b.split = s;
      b.labels = entry.at("labels").get<std::vector<std::uint32_t>>();
      b.sample_ids = entry.at("sample_ids").get<std::vector<std::uint32_t>>();
      b.x_a = read_tensor(dir / to_string(s) / "x_a");
      b.x_b = read_tensor(dir / to_string(s) / "x_b");
      if ((!b.x_a.empty() && b.x_a.dim(0) != b.size()) || (!b.x_b.empty() && b.x_b.dim(0) != b.size())) {
        throw DataError("split " + to_string(s) + ": tensor rows do not match the label list");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
  return d;
}

void save_codebook(const fs::path& dir, const Codebook& codebook) {
  fs::create_directories(dir);
  write_tensor(dir / "codewords", codebook.codewords());
  write_tensor(dir / "ema_sum", codebook.ema_sum());
  write_json(dir / "manifest.json", json{{"H", codebook.size()},
                                         {"D", codebook.dim()},
                                         {"gamma", codebook.gamma()},
                                         {"epsilon", codebook.epsilon()},
                                         {"step", codebook.steps()},
                                         {"cluster_size", codebook.cluster_size()}});
}

Codebook load_codebook(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  Tensor codewords = read_tensor(dir / "codewords");
  Tensor ema_sum = read_tensor(dir / "ema_sum");
  try {
    const auto H = m.at("H").get<std::size_t>(), D = m.at("D").get<std::size_t>();
    if (codewords.shape() != Shape{H, D}) throw DataError("codebook manifest disagrees with codewords shape");
    return Codebook::from_state(std::move(codewords), m.at("cluster_size").get<std::vector<double>>(),
                                std::move(ema_sum), m.at("gamma").get<double>(), m.at("epsilon").get<double>(),
                                m.at("step").get<std::int64_t>());
  } catch (const json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
}

void save_checkpoint(const fs::path& dir, const Model& model) {
  fs::create_directories(dir);
  json params = json::array();
  auto put = [&](const std::string& name, const std::string& module, const std::string& modality,
                 const std::string& layer, const Tensor& t) {
    write_tensor(dir / name, t);
    params.push_back(
        {{"name", name}, {"module", module}, {"modality", modality}, {"layer", layer}, {"shape", t.shape()}});
  };
  for (const Mlp* m : {&model.enc_a, &model.enc_b, &model.dec_a, &model.dec_b}) {
    const std::string module = m->role() == MlpRole::encoder ? "encoder" : "decoder";
    const std::string modality(modality_name(m->modality()));
    put(m->name() + ".w1", module, modality, "w1", m->w1());
    put(m->name() + ".b1", module, modality, "b1", m->b1());
    put(m->name() + ".w2", module, modality, "w2", m->w2());
    put(m->name() + ".b2", module, modality, "b2", m->b2());
  }
  if (!model.classifier.weight().empty()) {
    put("jigsaw.weight", "jigsaw", "shared", "weight", model.classifier.weight());
    put("jigsaw.bias", "jigsaw", "shared", "bias", model.classifier.bias());
  }
  save_codebook(dir / "codebook", model.codebook);
  write_json(dir / "manifest.json", json{{"parameters", params},
                                         {"codebook_ready", model.codebook_ready},
                                         {"universe",
                                          {{"segments", model.universe.segments()},
                                           {"table", model.universe.table()}}}});
}

Model load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint directory " + dir.string() + " does not exist");
  const json m = read_json(dir / "manifest.json");
  Model model;
  auto load_mlp = [&](MlpRole role, Modality modality) {
    const std::string name = std::string(role == MlpRole::encoder ? "enc_" : "dec_") + std::string(modality_name(modality));
    return Mlp::from_parameters(role, modality, read_tensor(dir / (name + ".w1")), read_tensor(dir / (name + ".b1")),
                                read_tensor(dir / (name + ".w2")), read_tensor(dir / (name + ".b2")));
  };
  model.enc_a = load_mlp(MlpRole::encoder, Modality::a);
  model.enc_b = load_mlp(MlpRole::encoder, Modality::b);
  model.dec_a = load_mlp(MlpRole::decoder, Modality::a);
  model.dec_b = load_mlp(MlpRole::decoder, Modality::b);
  if (fs::exists(dir / "jigsaw.weight.json")) {
    model.classifier = PermClassifier::from_parameters(read_tensor(dir / "jigsaw.weight"), read_tensor(dir / "jigsaw.bias"));
  }
  model.codebook = load_codebook(dir / "codebook");
  try {
    model.codebook_ready = m.at("codebook_ready").get<bool>();
    const auto& u = m.at("universe");
    const auto table = u.at("table").get<std::vector<Permutation>>();
    if (!table.empty()) model.universe = PermutationUniverse(u.at("segments").get<std::size_t>(), table);
  } catch (const json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
  return model;
}

}  // namespace unirep
