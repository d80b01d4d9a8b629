#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "unirep/codebook.hpp"
#include "unirep/pipeline.hpp"
#include "unirep/synthdata.hpp"
#include "unirep/tensor.hpp"

namespace unirep {

namespace fs = std::filesystem;

// `<stem>.bin` holds little-endian float32 values in row-major order;
// `<stem>.json` holds {"dtype": "float32", "shape": [...]}.
void write_tensor(const fs::path& stem, const Tensor& t);
Tensor read_tensor(const fs::path& stem);

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const fs::path& path);

nlohmann::json gen_spec_to_json(const GenSpec& spec);
GenSpec gen_spec_from_json(const nlohmann::json& j);

// One directory per split plus manifest.json {spec, classes, splits}.
void save_dataset(const fs::path& dir, const Dataset& data);
Dataset load_dataset(const fs::path& dir);

// codewords and EMA sums as tensors; manifest.json {H, D, gamma, epsilon, step, cluster_size}.
void save_codebook(const fs::path& dir, const Codebook& codebook);
Codebook load_codebook(const fs::path& dir);

// One tensor per parameter plus manifest.json describing each
// {name, module, modality, layer, shape}; the codebook goes in a codebook/ subdirectory.
void save_checkpoint(const fs::path& dir, const Model& model);
Model load_checkpoint(const fs::path& dir);

}  // namespace unirep
