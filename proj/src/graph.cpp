#include "dgm/graph.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dgm/error.hpp"
#include "dgm/format.hpp"

namespace dgm {

namespace {

struct RawEdge {
  std::string src, dst;
  double w;
  double tag;
  std::size_t line;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_index(const std::string& s, std::size_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_int(const std::string& s, long long& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::string read_all(const std::string& path) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (gz) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw io_error("cannot open " + path);
    std::string out;
    char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw io_error("corrupt gzip stream in " + path);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Orders ids numerically when every id is an integer, else lexically.
std::vector<std::string> sorted_ids(const std::set<std::string>& ids) {
  std::vector<std::string> out(ids.begin(), ids.end());
  const bool numeric = std::all_of(out.begin(), out.end(), [](const std::string& s) {
    long long v;
    return parse_int(s, v);
  });
  if (numeric) {
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      parse_int(a, x);
      parse_int(b, y);
      return x < y;
    });
  }
  return out;
}

std::vector<std::vector<std::size_t>> undirected_lists(const PaddedAdjacency& adj) {
  std::vector<std::vector<std::size_t>> nbrs(adj.n);
  for (std::size_t u = 0; u < adj.n; ++u) {
    for (std::size_t v = 0; v < adj.n; ++v) {
      if (u != v && (adj.at(u, v) != 0.0 || adj.at(v, u) != 0.0)) nbrs[u].push_back(v);
    }
  }
  return nbrs;
}

std::vector<std::size_t> bfs(const std::vector<std::vector<std::size_t>>& nbrs,
                             std::size_t source) {
  std::vector<std::size_t> dist(nbrs.size(), kUnreachable);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : nbrs[u]) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace

std::vector<std::size_t> Snapshot::active_nodes() const {
  std::set<std::size_t> nodes;
  for (const auto& e : edges) {
    nodes.insert(e.u);
    nodes.insert(e.v);
  }
  return {nodes.begin(), nodes.end()};
}

void TemporalGraph::validate() const {
  const std::size_t T = snapshots.size();
  for (std::size_t t = 0; t < T; ++t) {
    if (snapshots[t].t != t) throw data_error("snapshot indices are not contiguous at " +
                                              std::to_string(t));
    for (const auto& e : snapshots[t].edges) {
      if (e.u >= n || e.v >= n) {
        throw data_error("edge endpoint outside node universe of size " + std::to_string(n));
      }
      if (!std::isfinite(e.w)) throw data_error("non-finite edge weight");
    }
  }
  if (has_split() && !(0 < train_end && train_end < val_end && val_end <= T)) {
    throw data_error("invalid split " + std::to_string(train_end) + "/" +
                     std::to_string(val_end) + " for T=" + std::to_string(T));
  }
  if (!original_ids.empty() && original_ids.size() != n) {
    throw data_error("id mapping covers " + std::to_string(original_ids.size()) +
                     " nodes, expected " + std::to_string(n));
  }
}

TemporalGraph parse_edge_list(std::istream& in, const IngestOptions& options,
                              const std::string& source) {
  if (options.format == TagFormat::kTimeBinned && !(options.bin_width > 0.0)) {
    throw config_error("bin width must be positive");
  }
  std::vector<RawEdge> raw;
  std::optional<std::size_t> declared_n, declared_T;
  std::optional<std::pair<std::size_t, std::size_t>> declared_split = options.split;
  bool directed = options.directed;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      if (line.compare(hash, 2, "#!") == 0) {
        auto tok = split_ws(line.substr(hash + 2));
        auto bad = [&] {
          return parse_error(source + ":" + std::to_string(lineno) + ": malformed directive");
        };
        if (tok.empty()) throw bad();
        std::size_t a = 0, b = 0;
        if (tok[0] == "n" && tok.size() == 2 && parse_index(tok[1], a)) {
          declared_n = a;
        } else if (tok[0] == "T" && tok.size() == 2 && parse_index(tok[1], a)) {
          declared_T = a;
        } else if (tok[0] == "directed" && tok.size() == 2 && parse_index(tok[1], a)) {
          directed = a != 0;
        } else if (tok[0] == "split" && tok.size() == 3 && parse_index(tok[1], a) &&
                   parse_index(tok[2], b)) {
          if (!options.split) declared_split = std::make_pair(a, b);
        } else {
          throw bad();
        }
      }
      line.erase(hash);
    }
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    RawEdge e{tok.size() > 0 ? tok[0] : "", tok.size() > 1 ? tok[1] : "", 0.0, 0.0, lineno};
    if (tok.size() != 4 || !parse_double(tok[2], e.w) || !parse_double(tok[3], e.tag) ||
        !std::isfinite(e.w) || !std::isfinite(e.tag)) {
      throw parse_error(source + ":" + std::to_string(lineno) +
                        ": expected `src dst weight tag`, got '" + line + "'");
    }
    if (options.format == TagFormat::kSnapshotId && e.tag != std::floor(e.tag)) {
      throw parse_error(source + ":" + std::to_string(lineno) + ": snapshot id '" + tok[3] +
                        "' is not an integer");
    }
    raw.push_back(std::move(e));
  }
  if (raw.empty() && !declared_T) throw data_error("no edges");

  TemporalGraph g;
  g.directed = directed;

  std::map<std::string, std::size_t> dense;
  if (declared_n) {
    g.n = *declared_n;
    for (std::size_t i = 0; i < g.n; ++i) g.original_ids.push_back(std::to_string(i));
    for (const auto& e : raw) {
      for (const auto* id : {&e.src, &e.dst}) {
        std::size_t v = 0;
        if (!parse_index(*id, v) || v >= g.n) {
          throw parse_error(source + ":" + std::to_string(e.line) + ": node '" + *id +
                            "' outside declared universe");
        }
        dense[*id] = v;
      }
    }
  } else {
    std::set<std::string> ids;
    for (const auto& e : raw) {
      ids.insert(e.src);
      ids.insert(e.dst);
    }
    g.original_ids = sorted_ids(ids);
    g.n = g.original_ids.size();
    for (std::size_t i = 0; i < g.n; ++i) dense[g.original_ids[i]] = i;
  }

  double tmin = 0.0;
  if (!raw.empty()) {
    tmin = std::min_element(raw.begin(), raw.end(), [](const RawEdge& a, const RawEdge& b) {
             return a.tag < b.tag;
           })->tag;
  }
  if (declared_n) tmin = 0.0;  // canonical files index snapshots from zero
  auto bin_of = [&](double tag) -> std::size_t {
    if (options.format == TagFormat::kTimeBinned) {
      return static_cast<std::size_t>(std::floor((tag - tmin) / options.bin_width));
    }
    return static_cast<std::size_t>(tag - tmin);
  };

  std::size_t T = declared_T.value_or(0);
  for (const auto& e : raw) T = std::max(T, bin_of(e.tag) + 1);
  if (declared_T && T != *declared_T) {
    throw parse_error(source + ": edge tags exceed declared T=" + std::to_string(*declared_T));
  }

  // Later lines overwrite earlier duplicates within the same snapshot.
  std::vector<std::map<std::pair<std::size_t, std::size_t>, double>> per_t(T);
  for (const auto& e : raw) {
    if (options.format == TagFormat::kSnapshotId && e.tag < tmin) {
      throw parse_error(source + ":" + std::to_string(e.line) + ": negative snapshot id");
    }
    std::size_t u = dense.at(e.src), v = dense.at(e.dst);
    if (!directed && u > v) std::swap(u, v);
    per_t[bin_of(e.tag)][{u, v}] = e.w;
  }
  g.snapshots.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    g.snapshots[t].t = t;
    for (const auto& [key, w] : per_t[t]) g.snapshots[t].edges.push_back({key.first, key.second, w});
  }

  if (declared_split) {
    g.train_end = declared_split->first;
    g.val_end = declared_split->second;
  } else if (T >= 5) {
    std::tie(g.train_end, g.val_end) = split_timestamps(T);
  }
  g.validate();
  return g;
}

TemporalGraph load_edge_list(const std::string& path, const IngestOptions& options) {
  std::istringstream in(read_all(path));
  return parse_edge_list(in, options, path);
}

void write_edge_list(const TemporalGraph& g, std::ostream& out) {
  out << "#! n " << g.n << '\n';
  out << "#! T " << g.num_timestamps() << '\n';
  out << "#! directed " << (g.directed ? 1 : 0) << '\n';
  out << "#! split " << g.train_end << ' ' << g.val_end << '\n';
  for (const auto& s : g.snapshots) {
    for (const auto& e : s.edges) {
      out << e.u << ' ' << e.v << ' ' << format_double(e.w) << ' ' << s.t << '\n';
    }
  }
}

void write_id_map(const TemporalGraph& g, std::ostream& out) {
  out << "original_id,dense_id\n";
  for (std::size_t i = 0; i < g.original_ids.size(); ++i) {
    out << g.original_ids[i] << ',' << i << '\n';
  }
}

PaddedAdjacency pad_adjacency(const Snapshot& s, std::size_t n, bool directed) {
  PaddedAdjacency adj{s.t, n, std::vector<double>(n * n, 0.0)};
  for (const auto& e : s.edges) {
    if (e.u >= n || e.v >= n) {
      throw contract_error("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                           ") outside padded extent " + std::to_string(n));
    }
    adj.values[e.u * n + e.v] = e.w;
    if (!directed) adj.values[e.v * n + e.u] = e.w;
  }
  return adj;
}

std::pair<std::size_t, std::size_t> split_timestamps(std::size_t T, SplitRatios ratios) {
  if (T < 5) throw data_error("need at least 5 timestamps to split, got " + std::to_string(T));
  const double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw config_error("split ratios must be positive and sum to 1");
  }
  const auto train = static_cast<std::size_t>(std::round(ratios.train * static_cast<double>(T)));
  const auto val = static_cast<std::size_t>(std::round(ratios.val * static_cast<double>(T)));
  const std::size_t train_end = std::clamp<std::size_t>(train, 1, T - 1);
  const std::size_t val_end = std::clamp<std::size_t>(train_end + std::max<std::size_t>(val, 1),
                                                      train_end + 1, T);
  return {train_end, val_end};
}

std::vector<std::size_t> hop_distances(const PaddedAdjacency& adj, std::size_t source) {
  if (source >= adj.n) throw contract_error("hop_distances: source out of range");
  return bfs(undirected_lists(adj), source);
}

std::optional<std::size_t> shortest_path_length(const PaddedAdjacency& adj, std::size_t u,
                                                std::size_t v) {
  if (u >= adj.n || v >= adj.n) throw contract_error("shortest_path_length: node out of range");
  const auto d = hop_distances(adj, u)[v];
  if (d == kUnreachable) return std::nullopt;
  return d;
}

TripletSet sample_triplets(const Snapshot& s, std::size_t n, std::size_t k_near, Rng& rng) {
  if (k_near < 1) throw contract_error("k_near must be >= 1");
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& e : s.edges) {
    if (e.u >= n || e.v >= n) throw contract_error("sample_triplets: endpoint out of range");
    if (e.u == e.v) continue;
    nbrs[e.u].push_back(e.v);
    nbrs[e.v].push_back(e.u);
  }
  TripletSet out{s.t, {}};
  std::vector<std::size_t> near, far;
  for (auto ref : s.active_nodes()) {
    const auto dist = bfs(nbrs, ref);
    near.clear();
    far.clear();
    for (std::size_t x = 0; x < n; ++x) {
      if (x == ref) continue;
      if (dist[x] != kUnreachable && dist[x] <= k_near) {
        near.push_back(x);
      } else {
        far.push_back(x);
      }
    }
    if (near.empty() || far.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_near(0, near.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_far(0, far.size() - 1);
    const auto a = near[pick_near(rng)];
    const auto b = far[pick_far(rng)];
    out.triples.push_back({ref, a, b});
  }
  return out;
}

SbmGraph generate_sbm(const SbmParams& p, Rng& rng) {
  if (p.communities < 2 || p.n == 0 || p.n % p.communities != 0) {
    throw config_error("sbm: n must be a positive multiple of the community count (>= 2)");
  }
  if (!(p.p_in >= 0 && p.p_in <= 1 && p.p_out >= 0 && p.p_out <= 1)) {
    throw config_error("sbm: probabilities must lie in [0, 1]");
  }
  if (p.churn_min > p.churn_max || p.churn_max > p.n) {
    throw config_error("sbm: churn range must satisfy min <= max <= n");
  }
  if (p.timestamps < 1) throw config_error("sbm: need at least one timestamp");

  const std::size_t block = p.n / p.communities;
  std::vector<std::size_t> member(p.n);
  for (std::size_t i = 0; i < p.n; ++i) member[i] = i / block;

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::set<std::pair<std::size_t, std::size_t>> edges;
  auto sample_pair = [&](std::size_t a, std::size_t b) {
    const double prob = member[a] == member[b] ? p.p_in : p.p_out;
    if (coin(rng) < prob) edges.insert({std::min(a, b), std::max(a, b)});
  };
  for (std::size_t u = 0; u < p.n; ++u) {
    for (std::size_t v = u + 1; v < p.n; ++v) sample_pair(u, v);
  }

  SbmGraph out;
  auto& g = out.graph;
  g.n = p.n;
  g.directed = false;
  for (std::size_t i = 0; i < p.n; ++i) g.original_ids.push_back(std::to_string(i));
  auto emit = [&](std::size_t t) {
    Snapshot s;
    s.t = t;
    for (const auto& [u, v] : edges) s.edges.push_back({u, v, 1.0});
    g.snapshots.push_back(std::move(s));
    out.memberships.push_back(member);
  };
  emit(0);

  std::vector<std::size_t> order(p.n);
  std::uniform_int_distribution<std::size_t> churn(p.churn_min, p.churn_max);
  std::uniform_int_distribution<std::size_t> other(0, p.communities - 2);
  for (std::size_t t = 1; t < p.timestamps; ++t) {
    for (std::size_t i = 0; i < p.n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t count = churn(rng);
    std::vector<bool> moved(p.n, false);
    for (std::size_t i = 0; i < count; ++i) {
      const auto node = order[i];
      auto c = other(rng);
      if (c >= member[node]) ++c;  // uniform over the other communities
      member[node] = c;
      moved[node] = true;
    }
    for (auto it = edges.begin(); it != edges.end();) {
      it = (moved[it->first] || moved[it->second]) ? edges.erase(it) : std::next(it);
    }
    for (std::size_t u = 0; u < p.n; ++u) {
      if (!moved[u]) continue;
      for (std::size_t v = 0; v < p.n; ++v) {
        if (v == u || (moved[v] && v < u)) continue;
        sample_pair(u, v);
      }
    }
    emit(t);
  }
  if (p.timestamps >= 5) std::tie(g.train_end, g.val_end) = split_timestamps(p.timestamps);
  return out;
}

}  // namespace dgm
