#include "dgm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_set>

#include "dgm/error.hpp"
#include "dgm/ops.hpp"

namespace dgm {

std::vector<LinkSample> sample_link_pairs(const TemporalGraph& g, std::size_t t,
                                          std::size_t ratio, Rng& rng) {
  if (t >= g.num_timestamps()) {
    throw contract_error("sample_link_pairs: timestamp " + std::to_string(t) + " out of range");
  }
  const std::size_t n = g.n;
  auto key = [&](std::size_t u, std::size_t v) {
    if (!g.directed && u > v) std::swap(u, v);
    return u * n + v;
  };
  std::vector<LinkSample> out;
  std::unordered_set<std::size_t> taken;
  for (const Edge& e : g.snapshots[t].edges) {
    if (e.u == e.v) continue;
    if (!taken.insert(key(e.u, e.v)).second) continue;
    if (g.directed || e.u < e.v) {
      out.push_back({t, e.u, e.v, 1});
    } else {
      out.push_back({t, e.v, e.u, 1});
    }
  }
  if (out.empty()) {
    throw data_error("sample_link_pairs: snapshot " + std::to_string(t) + " has no edges");
  }
  const std::size_t positives = out.size();
  const std::size_t wanted = ratio * positives;
  const std::size_t pairs = g.directed ? n * (n - 1) : n * (n - 1) / 2;
  if (wanted > pairs - positives) {
    throw sampling_error("sample_link_pairs: snapshot " + std::to_string(t) + " has " +
                         std::to_string(pairs - positives) + " non-edges, " +
                         std::to_string(wanted) + " requested");
  }
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  const std::size_t max_attempts = 50 * wanted + 1000;
  std::size_t attempts = 0;
  while (out.size() < positives + wanted) {
    if (++attempts > max_attempts) {
      throw sampling_error("sample_link_pairs: gave up after " + std::to_string(max_attempts) +
                           " draws at snapshot " + std::to_string(t));
    }
    std::size_t u = node(rng);
    std::size_t v = node(rng);
    if (u == v || !taken.insert(key(u, v)).second) continue;
    if (!g.directed && u > v) std::swap(u, v);
    out.push_back({t, u, v, 0});
  }
  return out;
}

std::vector<double> pair_features(const GaussianEmbeddings& emb, std::size_t u, std::size_t v,
                                  const ClassifierOptions& options) {
  if (!emb.mu.defined() || emb.mu.rank() != 2) {
    throw contract_error("pair_features: missing embeddings");
  }
  const std::size_t rows = emb.mu.dim(0), width = emb.mu.dim(1);
  if (u >= rows || v >= rows) {
    throw contract_error("pair_features: node " + std::to_string(std::max(u, v)) +
                         " has no embedding");
  }
  auto node_vector = [&](std::size_t i) {
    std::vector<double> x(emb.mu.data().begin() + static_cast<std::ptrdiff_t>(i * width),
                          emb.mu.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
    if (options.use_sigma) {
      const auto s = emb.sigma.data().subspan(i * width, width);
      x.insert(x.end(), s.begin(), s.end());
    }
    return x;
  };
  const std::vector<double> a = node_vector(u), b = node_vector(v);
  std::vector<double> f = a;
  f.insert(f.end(), b.begin(), b.end());
  if (options.features == PairFeatures::kConcatSquaredDiff) {
    for (std::size_t i = 0; i < a.size(); ++i) f.push_back((a[i] - b[i]) * (a[i] - b[i]));
  }
  return f;
}

double LinkClassifier::logit(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw dimension_error("classifier: " + std::to_string(features.size()) + " features vs " +
                          std::to_string(weights.size()) + " weights");
  }
  double z = bias;
  for (std::size_t i = 0; i < features.size(); ++i) {
    z += weights[i] * (features[i] - mean[i]) * inv_std[i];
  }
  return z;
}

double LinkClassifier::score(const GaussianEmbeddings& emb, std::size_t u, std::size_t v) const {
  const double z = logit(pair_features(emb, u, v, options));
  return 1.0 / (1.0 + std::exp(-z));
}

LinkClassifier train_logistic(const std::vector<std::vector<double>>& features,
                              const std::vector<int>& labels, const ClassifierOptions& options) {
  if (features.empty() || features.size() != labels.size()) {
    throw data_error("classifier: " + std::to_string(features.size()) + " feature rows for " +
                     std::to_string(labels.size()) + " labels");
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw data_error("classifier: training set has a single class");
  }
  const std::size_t rows = features.size(), width = features.front().size();
  LinkClassifier c;
  c.options = options;
  c.mean.assign(width, 0.0);
  c.inv_std.assign(width, 1.0);
  for (const auto& f : features) {
    if (f.size() != width) throw dimension_error("classifier: ragged feature rows");
    for (std::size_t i = 0; i < width; ++i) c.mean[i] += f[i];
  }
  for (double& m : c.mean) m /= static_cast<double>(rows);
  std::vector<double> var(width, 0.0);
  for (const auto& f : features) {
    for (std::size_t i = 0; i < width; ++i) var[i] += (f[i] - c.mean[i]) * (f[i] - c.mean[i]);
  }
  for (std::size_t i = 0; i < width; ++i) {
    const double sd = std::sqrt(var[i] / static_cast<double>(rows));
    if (sd > 0.0) c.inv_std[i] = 1.0 / sd;
  }

  std::vector<double> x(rows * width), y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < width; ++i) {
      x[r * width + i] = (features[r][i] - c.mean[i]) * c.inv_std[i];
    }
    y[r] = labels[r] == 1 ? 1.0 : 0.0;
  }
  const Tensor design = Tensor::from({rows, width}, std::move(x));
  const Tensor target = Tensor::from({rows, 1}, std::move(y));
  const Tensor w = Tensor::zeros({width, 1}, true);
  const Tensor b = Tensor::scalar(0.0, true);
  const ParameterList params{{"weights", w}, {"bias", b}};
  Adam adam(params, options.lr);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    adam.zero_grad();
    // softplus(z) − y·z is the cross-entropy of sigmoid(z) against y.
    const Tensor z = add(matmul(design, w), b);
    const Tensor loss = mean(sub(softplus(z), mul(target, z)));
    backward(loss);
    adam.step();
    c.epochs_run = epoch + 1;
    const double value = loss.item();
    if (std::abs(previous - value) < options.plateau) break;
    previous = value;
  }
  c.weights.assign(w.data().begin(), w.data().end());
  c.bias = b.item();
  return c;
}

LinkClassifier train_link_classifier(const std::vector<GaussianEmbeddings>& emb_by_t,
                                     const std::vector<LinkSample>& samples,
                                     const ClassifierOptions& options) {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  features.reserve(samples.size());
  for (const LinkSample& s : samples) {
    if (s.t >= emb_by_t.size()) {
      throw contract_error("classifier: no embeddings for timestamp " + std::to_string(s.t));
    }
    features.push_back(pair_features(emb_by_t[s.t], s.u, s.v, options));
    labels.push_back(s.label);
  }
  return train_logistic(features, labels, options);
}

RankingResult make_ranking(std::size_t t, std::size_t query,
                           std::vector<RankedCandidate> candidates) {
  std::sort(candidates.begin(), candidates.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return {t, query, std::move(candidates)};
}

double average_precision(const RankingResult& r) {
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (!r.candidates[i].relevant) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits == 0 ? 0.0 : total / static_cast<double>(hits);
}

double reciprocal_rank(const RankingResult& r) {
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    if (r.candidates[i].relevant) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

namespace {

void check_results(std::span<const RankingResult> results, const char* what) {
  if (results.empty()) throw data_error(std::string(what) + ": no queries");
  for (const auto& r : results) {
    if (r.candidates.empty()) {
      throw contract_error(std::string(what) + ": query " + std::to_string(r.query) +
                           " has no candidates");
    }
  }
}

bool has_relevant(const RankingResult& r) {
  return std::any_of(r.candidates.begin(), r.candidates.end(),
                     [](const RankedCandidate& c) { return c.relevant; });
}

}  // namespace

double compute_map(std::span<const RankingResult> results) {
  check_results(results, "compute_map");
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& r : results) {
    if (!has_relevant(r)) continue;
    total += average_precision(r);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double compute_mrr(std::span<const RankingResult> results) {
  check_results(results, "compute_mrr");
  double total = 0.0;
  for (const auto& r : results) total += reciprocal_rank(r);
  return total / static_cast<double>(results.size());
}

double expected_random_ap(std::size_t candidates, std::size_t relevant) {
  if (relevant == 0 || candidates == 0) return 0.0;
  if (relevant > candidates) throw contract_error("expected_random_ap: relevant > candidates");
  if (candidates == 1) return 1.0;
  const double n = static_cast<double>(candidates), r = static_cast<double>(relevant);
  double harmonic = 0.0;
  for (std::size_t k = 1; k <= candidates; ++k) harmonic += 1.0 / static_cast<double>(k);
  return (r - 1.0) / (n - 1.0) + (n - r) / (n * (n - 1.0)) * harmonic;
}

Metrics evaluate(const std::vector<GaussianEmbeddings>& emb_by_t, const TemporalGraph& g,
                 std::size_t lookback, const EvalOptions& options,
                 std::vector<RankingResult>* rankings) {
  if (!g.has_split()) throw data_error("evaluate: graph has no train/validation/test split");
  if (emb_by_t.size() != g.num_timestamps()) {
    throw dimension_error("evaluate: " + std::to_string(emb_by_t.size()) +
                          " embedding timestamps for " + std::to_string(g.num_timestamps()) +
                          " snapshots");
  }
  std::vector<LinkSample> pool;
  {
    Rng rng(derive_seed(options.seed, 3));
    for (std::size_t t = lookback; t < g.train_end; ++t) {
      if (g.snapshots[t].edges.empty()) continue;
      auto part = sample_link_pairs(g, t, options.ratio, rng);
      pool.insert(pool.end(), part.begin(), part.end());
    }
  }
  if (pool.empty()) throw data_error("evaluate: no training-period samples");
  const LinkClassifier clf = train_link_classifier(emb_by_t, pool, options.classifier);

  std::vector<RankingResult> results;
  for (std::size_t t = std::max(g.val_end, lookback); t < g.num_timestamps(); ++t) {
    if (g.snapshots[t].edges.empty()) continue;
    Rng rng(derive_seed(options.seed, 2000 + t));
    const auto samples = sample_link_pairs(g, t, options.ratio, rng);
    std::map<std::size_t, std::vector<RankedCandidate>> queries;
    for (const LinkSample& s : samples) {
      // Logits rank like sigmoid scores without saturating into ties.
      const double z = clf.logit(pair_features(emb_by_t[t], s.u, s.v, options.classifier));
      queries[s.u].push_back({s.v, z, s.label == 1});
      if (!g.directed) queries[s.v].push_back({s.u, z, s.label == 1});
    }
    for (auto& [query, candidates] : queries) {
      RankingResult r = make_ranking(t, query, std::move(candidates));
      if (has_relevant(r)) results.push_back(std::move(r));
    }
  }
  if (results.empty()) throw data_error("evaluate: no test query has a positive candidate");
  Metrics m{compute_map(results), compute_mrr(results), results.size()};
  if (rankings) *rankings = std::move(results);
  return m;
}

Metrics evaluate(const EmbeddingModel& model, const TemporalGraph& g, const EvalOptions& options) {
  return evaluate(embed_all(model, g), g, model.config().lookback, options);
}

std::vector<GaussianEmbeddings> shuffle_embeddings(const std::vector<GaussianEmbeddings>& emb_by_t,
                                                   Rng& rng) {
  std::vector<GaussianEmbeddings> out(emb_by_t.size());
  for (std::size_t t = 0; t < emb_by_t.size(); ++t) {
    const auto& e = emb_by_t[t];
    if (!e.mu.defined()) continue;
    const std::size_t rows = e.mu.dim(0), width = e.mu.dim(1);
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> mu(rows * width), sigma(rows * width);
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(e.mu.data().begin() + static_cast<std::ptrdiff_t>(order[i] * width), width,
                  mu.begin() + static_cast<std::ptrdiff_t>(i * width));
      std::copy_n(e.sigma.data().begin() + static_cast<std::ptrdiff_t>(order[i] * width), width,
                  sigma.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    out[t] = {Tensor::from({rows, width}, std::move(mu)),
              Tensor::from({rows, width}, std::move(sigma))};
  }
  return out;
}

}  // namespace dgm
