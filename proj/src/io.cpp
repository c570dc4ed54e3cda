#include "dgm/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dgm/error.hpp"
#include "dgm/format.hpp"

namespace dgm {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(PairFeatures features) {
  return features == PairFeatures::kConcat ? "concat" : "concat_sqdiff";
}

PairFeatures parse_pair_features(const std::string& name) {
  if (name == "concat") return PairFeatures::kConcat;
  if (name == "concat_sqdiff") return PairFeatures::kConcatSquaredDiff;
  throw config_error("pair_features: expected concat or concat_sqdiff, got '" + name + "'");
}

std::string RunConfig::canonical_text() const {
  std::map<std::string, std::string> fields = model.to_map();
  fields["dataset"] = dataset;
  fields["neg_ratio"] = std::to_string(neg_ratio);
  fields["pair_features"] = to_string(pair_features);
  fields["use_sigma"] = use_sigma ? "true" : "false";
  std::string text;
  for (const auto& [k, v] : fields) text += k + "=" + v + "\n";
  return text;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical_text())); }

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.ratio = neg_ratio;
  o.seed = model.seed;
  o.classifier.features = pair_features;
  o.classifier.use_sigma = use_sigma;
  return o;
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw config_error(where + "duplicate key '" + key + "'");
    try {
      if (key == "dataset") cfg.dataset = value;
      else if (key == "out") cfg.out = value;
      else if (key == "neg_ratio") cfg.neg_ratio = std::stoul(value);
      else if (key == "pair_features") cfg.pair_features = parse_pair_features(value);
      else if (key == "use_sigma") {
        if (value != "true" && value != "false") throw config_error("use_sigma: expected true or false");
        cfg.use_sigma = value == "true";
      } else if (!apply_config_key(cfg.model, key, value)) {
        throw config_error("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      throw Error(e.kind(), where + e.what());
    } catch (const std::exception&) {
      throw config_error(where + key + ": bad value '" + value + "'");
    }
  }
  if (cfg.neg_ratio == 0) throw config_error(source + ": neg_ratio must be positive");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::istringstream in(read_file(path));
  return parse_run_config(in, path);
}

std::string resolve_data_path(const std::string& path) {
  const char* root = std::getenv("DGM_DATA_ROOT");
  if (root == nullptr || *root == '\0' || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(root) / path).string();
}

std::string provenance_line(const std::string& config_hash, std::uint64_t seed) {
  return "# config_hash=" + config_hash + " seed=" + std::to_string(seed);
}

void write_stats(const TemporalGraph& g, std::ostream& out) {
  std::size_t total = 0;
  for (const auto& s : g.snapshots) total += s.edges.size();
  out << "n=" << g.n << '\n';
  out << "T=" << g.num_timestamps() << '\n';
  out << "directed=" << (g.directed ? "true" : "false") << '\n';
  out << "train_end=" << g.train_end << '\n';
  out << "val_end=" << g.val_end << '\n';
  out << "edges=" << total << '\n';
  out << "t,edges,active_nodes\n";
  for (const auto& s : g.snapshots) {
    out << s.t << ',' << s.edges.size() << ',' << s.active_nodes().size() << '\n';
  }
}

void write_bundle(const TemporalGraph& g, const std::string& dir, const std::string& provenance) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir + ": " + ec.message());
  std::ostringstream edges, ids, stats;
  edges << provenance << '\n';
  write_edge_list(g, edges);
  ids << provenance << '\n';
  write_id_map(g, ids);
  stats << provenance << '\n';
  write_stats(g, stats);
  write_file((fs::path(dir) / "edges.txt").string(), edges.str());
  write_file((fs::path(dir) / "id_map.csv").string(), ids.str());
  write_file((fs::path(dir) / "stats.txt").string(), stats.str());
}

TemporalGraph load_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw io_error("dataset: no bundle directory at " + dir);
  std::istringstream edges(read_file((root / "edges.txt").string()));
  TemporalGraph g = parse_edge_list(edges, {}, (root / "edges.txt").string());
  const fs::path id_path = root / "id_map.csv";
  if (fs::exists(id_path)) {
    std::istringstream ids(read_file(id_path.string()));
    std::string line;
    std::vector<std::string> original(g.n);
    bool header = true;
    while (std::getline(ids, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) throw parse_error(id_path.string() + ": bad row '" + line + "'");
      const std::size_t dense = std::stoul(line.substr(comma + 1));
      if (dense >= g.n) throw data_error(id_path.string() + ": dense id out of range");
      original[dense] = line.substr(0, comma);
    }
    g.original_ids = std::move(original);
  }
  return g;
}

void write_matrix_csv(const Tensor& m, std::ostream& out) {
  if (m.rank() != 2) throw dimension_error("matrix csv: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const auto data = m.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << format_double(data[r * cols + c]);
    }
    out << '\n';
  }
}

Tensor read_matrix_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (rows == 0) cols = cells.size();
    if (cells.size() != cols) throw parse_error("matrix csv: ragged row " + std::to_string(rows + 1));
    for (const auto& c : cells) values.push_back(parse_double_exact(c));
    ++rows;
  }
  return Tensor::from({rows, cols}, std::move(values));
}

GaussianEmbeddings read_embeddings_csv(std::istream& in) {
  std::string line;
  std::size_t width = 0;
  std::vector<double> mu, sigma;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (width == 0) {
      if (cells.empty() || cells[0] != "node_id" || cells.size() % 2 != 1 || cells.size() < 3) {
        throw parse_error("embeddings csv: bad header");
      }
      width = (cells.size() - 1) / 2;
      continue;
    }
    if (cells.size() != 2 * width + 1) {
      throw parse_error("embeddings csv: row " + std::to_string(rows + 1) + " has " +
                        std::to_string(cells.size()) + " cells");
    }
    if (cells[0] != std::to_string(rows)) throw parse_error("embeddings csv: node ids must be 0..n-1 in order");
    for (std::size_t k = 0; k < width; ++k) mu.push_back(parse_double_exact(cells[1 + k]));
    for (std::size_t k = 0; k < width; ++k) sigma.push_back(parse_double_exact(cells[1 + width + k]));
    ++rows;
  }
  if (width == 0) throw parse_error("embeddings csv: empty file");
  return {Tensor::from({rows, width}, std::move(mu)), Tensor::from({rows, width}, std::move(sigma))};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  if (!out) throw io_error("cannot write " + path);
}

}  // namespace dgm
