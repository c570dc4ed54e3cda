#pragma once

// Run configuration, dataset bundles and plain-text artifacts.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "dgm/eval.hpp"
#include "dgm/graph.hpp"
#include "dgm/models.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

// Flat `key = value` document; `#` starts a comment. Keys: dataset, out,
// neg_ratio, pair_features (concat | concat_sqdiff), use_sigma, and every
// ModelConfig field (model, d, d_model, ..., seed). n is taken from the
// dataset unless set.
struct RunConfig {
  std::string dataset;
  std::string out = "run";
  ModelConfig model;
  std::size_t neg_ratio = 10;
  PairFeatures pair_features = PairFeatures::kConcatSquaredDiff;
  bool use_sigma = false;

  // Sorted key=value lines of every field that affects results.
  std::string canonical_text() const;
  std::string hash() const;
  EvalOptions eval_options() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

std::string to_string(PairFeatures features);
PairFeatures parse_pair_features(const std::string& name);

// Relative paths are taken under $DGM_DATA_ROOT when that variable is set.
std::string resolve_data_path(const std::string& path);

// `# config_hash=<hex> seed=<n>`, the first line of every text artifact.
std::string provenance_line(const std::string& config_hash, std::uint64_t seed);

// Bundle layout: edges.txt (canonical edge list), id_map.csv, stats.txt.
void write_bundle(const TemporalGraph& g, const std::string& dir, const std::string& provenance);
TemporalGraph load_bundle(const std::string& dir);
void write_stats(const TemporalGraph& g, std::ostream& out);

// Row-major CSV with shortest round-trip decimals; `#` lines are skipped on read.
void write_matrix_csv(const Tensor& m, std::ostream& out);
Tensor read_matrix_csv(std::istream& in);

// Inverse of write_embeddings_csv.
GaussianEmbeddings read_embeddings_csv(std::istream& in);

// Whole-file helpers that raise io_error naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace dgm
