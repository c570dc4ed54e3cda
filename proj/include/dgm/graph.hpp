#pragma once

// Discrete-time dynamic graphs: ingestion, zero-padded adjacency, splits,
// hop distances, triplet sampling and a churning stochastic block model.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dgm {

using Rng = std::mt19937_64;

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  double w = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Snapshot {
  std::size_t t = 0;
  // Sorted by (u, v). Undirected graphs store each edge once with u <= v.
  std::vector<Edge> edges;

  // Nodes touching at least one edge, ascending.
  std::vector<std::size_t> active_nodes() const;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct TemporalGraph {
  std::vector<Snapshot> snapshots;
  std::size_t n = 0;
  bool directed = false;
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  // original_ids[dense] is the id as it appeared in the source file.
  std::vector<std::string> original_ids;

  std::size_t num_timestamps() const { return snapshots.size(); }
  // (0, 0) marks a graph without split boundaries.
  bool has_split() const { return train_end != 0 || val_end != 0; }
  // Throws when an invariant (contiguous indices, endpoint range, finite
  // weights, split ordering) is broken.
  void validate() const;

  friend bool operator==(const TemporalGraph&, const TemporalGraph&) = default;
};

struct PaddedAdjacency {
  std::size_t t = 0;
  std::size_t n = 0;
  std::vector<double> values;  // row-major n×n

  double at(std::size_t u, std::size_t v) const { return values[u * n + v]; }
};

struct Triplet {
  std::size_t ref = 0;
  std::size_t near = 0;
  std::size_t far = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletSet {
  std::size_t t = 0;
  std::vector<Triplet> triples;
};

enum class TagFormat { kSnapshotId, kTimeBinned };

struct IngestOptions {
  TagFormat format = TagFormat::kSnapshotId;
  double bin_width = 1.0;  // only for kTimeBinned
  bool directed = false;
  // Explicit (train_end, val_end); otherwise split_timestamps(T).
  std::optional<std::pair<std::size_t, std::size_t>> split;
};

// Lines are `src dst weight tag`; `#` starts a comment. Lines of the form
// `#! key value...` are directives written by write_edge_list (n, T,
// directed, split); when `n` is given, ids are taken as dense already.
TemporalGraph parse_edge_list(std::istream& in, const IngestOptions& options,
                              const std::string& source = "<stream>");
// Files ending in .gz are decompressed transparently.
TemporalGraph load_edge_list(const std::string& path, const IngestOptions& options);

// Canonical export; parse_edge_list on the result reproduces `g`.
void write_edge_list(const TemporalGraph& g, std::ostream& out);
void write_id_map(const TemporalGraph& g, std::ostream& out);

PaddedAdjacency pad_adjacency(const Snapshot& s, std::size_t n, bool directed);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

std::pair<std::size_t, std::size_t> split_timestamps(std::size_t T, SplitRatios ratios = {});

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// Hop distances from `source`, ignoring direction and weight.
std::vector<std::size_t> hop_distances(const PaddedAdjacency& adj, std::size_t source);
std::optional<std::size_t> shortest_path_length(const PaddedAdjacency& adj, std::size_t u,
                                                std::size_t v);

// One (ref, near, far) triple per active node that has a node within
// k_near hops and a strictly farther one (unreachable counts as infinite).
TripletSet sample_triplets(const Snapshot& s, std::size_t n, std::size_t k_near, Rng& rng);

struct SbmParams {
  std::size_t n = 1000;
  std::size_t communities = 3;
  double p_in = 0.2;
  double p_out = 0.01;
  std::size_t churn_min = 10;
  std::size_t churn_max = 20;
  std::size_t timestamps = 50;
};

struct SbmGraph {
  TemporalGraph graph;
  // memberships[t][node] = community at snapshot t.
  std::vector<std::vector<std::size_t>> memberships;
};

SbmGraph generate_sbm(const SbmParams& params, Rng& rng);

}  // namespace dgm
