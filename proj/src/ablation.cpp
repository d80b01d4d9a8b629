#include "unirep/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "unirep/errors.hpp"
#include "unirep/io.hpp"

namespace unirep {

using nlohmann::json;

namespace {

AblationCell loss_cell(bool fine, bool coarse, bool cujp) {
  std::string name;
  if (fine) name += "fine+";
  if (coarse) name += "coarse+";
  if (cujp) name += "cujp+";
  name.pop_back();
  return {name, json{{"fcmi.fine", fine}, {"fcmi.coarse", coarse}, {"train.lambda_cujp", cujp ? 2.0 : 0.0}}};
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string drop_first_field(const std::string& line) {
  const auto comma = line.find(',');
  return comma == std::string::npos ? std::string() : line.substr(comma + 1);
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return out;
}

using RowKey = std::pair<std::string, std::uint64_t>;

std::optional<RowKey> key_of(const std::string& line) {
  const auto c1 = line.find(',');
  if (c1 == std::string::npos) return std::nullopt;
  const auto c2 = line.find(',', c1 + 1);
  try {
    return RowKey{line.substr(0, c1), std::stoull(line.substr(c1 + 1, c2 - c1 - 1))};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void read_rows(const fs::path& path, std::map<RowKey, std::string>& rows) {
  std::istringstream in(read_text(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (auto k = key_of(line)) rows[*k] = line;
  }
}

}  // namespace

std::vector<std::string> preset_names() { return {"loss", "jigsaw", "codebook", "mask"}; }

std::vector<AblationCell> preset_cells(const std::string& name) {
  if (name == "loss") {
    return {loss_cell(true, false, false), loss_cell(false, true, false), loss_cell(false, false, true),
            loss_cell(true, true, false),  loss_cell(true, false, true),  loss_cell(false, true, true),
            loss_cell(true, true, true)};
  }
  if (name == "jigsaw") {
    return {{"off", json{{"cujp.mode", "off"}}},
            {"mmjp6", json{{"cujp.mode", "mmjp"}, {"cujp.mmjp_splits", 3}}},
            {"cujp2", json{{"cujp.mode", "cujp"}, {"cujp.segments", 2}}},
            {"cujp4", json{{"cujp.mode", "cujp"}, {"cujp.segments", 4}}},
            {"cujp8", json{{"cujp.mode", "cujp"}, {"cujp.segments", 8}}}};
  }
  if (name == "codebook") {
    std::vector<AblationCell> cells;
    for (int h : {256, 400, 512, 800, 1024}) cells.push_back({"h" + std::to_string(h), json{{"codebook.size", h}}});
    return cells;
  }
  if (name == "mask") {
    return {{"aligned", json{{"fcmi.mask_mode", "aligned"}}}, {"independent", json{{"fcmi.mask_mode", "independent"}}}};
  }
  throw ConfigError("unknown sweep preset '" + name + "' (loss, jigsaw, codebook, mask)", "sweep.preset");
}

SweepSpec parse_sweep(const json& j, std::uint64_t base_seed) {
  SweepSpec s;
  if (j.contains("preset")) {
    s.cells = preset_cells(j.at("preset").get<std::string>());
  } else if (j.contains("cells")) {
    for (const auto& c : j.at("cells")) {
      AblationCell cell{c.at("name").get<std::string>(), c.value("overrides", json::object())};
      if (cell.name.empty() || cell.name.find(',') != std::string::npos) {
        throw ConfigError("sweep cell names must be non-empty and comma-free", "sweep.cells");
      }
      s.cells.push_back(std::move(cell));
    }
  } else {
    throw ConfigError("sweep spec needs \"preset\" or \"cells\"", "sweep");
  }
  if (j.contains("seeds")) {
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    for (std::uint64_t k = 0; k < 5; ++k) s.seeds.push_back(base_seed + k);
  }
  if (s.seeds.empty()) throw ConfigError("sweep needs at least one seed", "sweep.seeds");
  return s;
}

std::string ablation_csv_header() { return "cell,seed,status,reason," + drop_first_field(EvalReport::csv_header()); }

std::string AblationRow::csv_row() const {
  std::ostringstream os;
  os << cell << ',' << seed << ',' << status << ',' << quote(reason) << ',';
  if (report) {
    os << drop_first_field(report->csv_row());
  } else {
    const std::string header = ablation_csv_header();
    const auto fields = std::count(header.begin(), header.end(), ',') - 4;
    os << std::string(static_cast<std::size_t>(fields), ',');
  }
  return os.str();
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("UNIREP_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void merge_ablation(const fs::path& out_dir) {
  std::map<RowKey, std::string> rows;
  const fs::path target = out_dir / "ablation.csv";
  if (fs::exists(target)) read_rows(target, rows);
  if (fs::is_directory(out_dir / "cells")) {
    std::vector<fs::path> parts;
    for (const auto& e : fs::recursive_directory_iterator(out_dir / "cells")) {
      if (e.is_regular_file() && e.path().extension() == ".csv") parts.push_back(e.path());
    }
    std::sort(parts.begin(), parts.end());
    for (const auto& p : parts) read_rows(p, rows);
  }
  std::string text = ablation_csv_header() + "\n";
  for (const auto& [key, line] : rows) text += line + "\n";
  const fs::path tmp = out_dir / "ablation.csv.tmp";
  write_text(tmp, text);
  fs::rename(tmp, target);
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const SweepSpec& sweep, const fs::path& out_dir,
                                      std::size_t threads, const std::function<void(const AblationRow&)>& on_row) {
  struct Task {
    const AblationCell* cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& c : sweep.cells) {
    for (auto seed : sweep.seeds) tasks.push_back({&c, seed});
  }
  std::vector<AblationRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto worker = [&]() {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      AblationRow row;
      row.cell = t.cell->name;
      row.seed = t.seed;
      const fs::path cell_dir = out_dir / "cells" / safe_name(t.cell->name);
      fs::create_directories(cell_dir);
      try {
        RunConfig cfg = base.with("seed", t.seed);
        for (const auto& [key, value] : t.cell->overrides.items()) cfg = cfg.with(key, value);
        cfg.validate();
        cfg.save((cell_dir / ("seed" + std::to_string(t.seed) + ".config.json")).string());
        row.report = run_pipeline(cfg).report;
        row.status = "ok";
      } catch (const ConfigError& e) {
        row.status = "skipped";
        row.reason = e.what();
      } catch (const Error& e) {
        row.status = "failed";
        row.reason = e.what();
      }
      write_text(cell_dir / ("seed" + std::to_string(t.seed) + ".csv"), ablation_csv_header() + "\n" + row.csv_row() + "\n");
      rows[i] = std::move(row);
      if (on_row) {
        std::lock_guard lock(report_mutex);
        on_row(rows[i]);
      }
    }
  };

  const std::size_t n = std::min(tasks.size(), threads == 0 ? worker_threads() : threads);
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  merge_ablation(out_dir);
  return rows;
}

std::map<std::string, double> mean_hos(const std::vector<AblationRow>& rows) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    if (r.status != "ok" || !r.report || !r.report->scores.hos) continue;
    auto& a = acc[r.cell];
    a.first += *r.report->scores.hos;
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [cell, a] : acc) out[cell] = a.first / static_cast<double>(a.second);
  return out;
}

}  // namespace unirep
