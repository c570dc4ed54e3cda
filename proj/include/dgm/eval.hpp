#pragma once

// Temporal link prediction: pair sampling, a logistic classifier over pair
// features built from Gaussian embeddings, and MAP / MRR over ranked queries.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dgm/graph.hpp"
#include "dgm/models.hpp"

namespace dgm {

struct LinkSample {
  std::size_t t = 0;
  std::size_t u = 0;
  std::size_t v = 0;
  int label = 0;  // 1 = edge of snapshot t, 0 = sampled non-edge

  friend bool operator==(const LinkSample&, const LinkSample&) = default;
};

// Every edge of snapshot t as a positive plus ratio× uniformly drawn
// non-edges over the node universe (no self-pairs, no duplicates). Undirected
// pairs are canonical with u < v.
std::vector<LinkSample> sample_link_pairs(const TemporalGraph& g, std::size_t t,
                                          std::size_t ratio, Rng& rng);

enum class PairFeatures {
  kConcat,               // [x_u ∥ x_v]
  kConcatSquaredDiff,    // [x_u ∥ x_v ∥ (x_u − x_v)²]
};

struct ClassifierOptions {
  PairFeatures features = PairFeatures::kConcatSquaredDiff;
  bool use_sigma = false;  // append σ to μ before building pair features
  double lr = 1e-3;
  std::size_t max_epochs = 500;
  double plateau = 1e-6;   // stop when the loss moves less than this
};

std::vector<double> pair_features(const GaussianEmbeddings& emb, std::size_t u, std::size_t v,
                                  const ClassifierOptions& options);

// Logistic regression over standardized pair features.
struct LinkClassifier {
  ClassifierOptions options;
  std::vector<double> mean, inv_std;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t epochs_run = 0;

  double logit(std::span<const double> features) const;
  // sigmoid(logit), in (0, 1).
  double score(const GaussianEmbeddings& emb, std::size_t u, std::size_t v) const;
};

// Full-batch Adam on binary cross-entropy over raw feature rows.
LinkClassifier train_logistic(const std::vector<std::vector<double>>& features,
                              const std::vector<int>& labels, const ClassifierOptions& options);

// emb_by_t[t] must hold embeddings for every sample's timestamp.
LinkClassifier train_link_classifier(const std::vector<GaussianEmbeddings>& emb_by_t,
                                     const std::vector<LinkSample>& samples,
                                     const ClassifierOptions& options);

struct RankedCandidate {
  std::size_t id = 0;
  double score = 0.0;
  bool relevant = false;
};

struct RankingResult {
  std::size_t t = 0;
  std::size_t query = 0;
  std::vector<RankedCandidate> candidates;  // score descending, then id ascending
};

// Sorts candidates into ranking order.
RankingResult make_ranking(std::size_t t, std::size_t query,
                           std::vector<RankedCandidate> candidates);

// Mean over relevant ranks r of (relevant at or above r) / r; 0 without relevant items.
double average_precision(const RankingResult& r);
double reciprocal_rank(const RankingResult& r);

// Queries without a relevant candidate are excluded from MAP and count as 0
// in MRR. Both throw data_error on an empty list.
double compute_map(std::span<const RankingResult> results);
double compute_mrr(std::span<const RankingResult> results);

// Expected AP of a uniformly random ordering of N candidates with R relevant.
double expected_random_ap(std::size_t candidates, std::size_t relevant);

struct Metrics {
  double map = 0.0;
  double mrr = 0.0;
  std::size_t queries = 0;
};

struct EvalOptions {
  std::size_t ratio = 10;
  std::uint64_t seed = 0;
  ClassifierOptions classifier;
};

// Classifier trained on pooled samples from t in [lookback, train_end); one
// query per source node per test timestamp (both endpoints for undirected
// pairs), kept when it has at least one positive.
Metrics evaluate(const std::vector<GaussianEmbeddings>& emb_by_t, const TemporalGraph& g,
                 std::size_t lookback, const EvalOptions& options,
                 std::vector<RankingResult>* rankings = nullptr);
Metrics evaluate(const EmbeddingModel& model, const TemporalGraph& g, const EvalOptions& options);

// Same embeddings with node rows permuted independently per timestamp.
std::vector<GaussianEmbeddings> shuffle_embeddings(const std::vector<GaussianEmbeddings>& emb_by_t,
                                                   Rng& rng);

}  // namespace dgm
