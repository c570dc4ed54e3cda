#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dgm/graph.hpp"
#include "dgm/nn.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

// D̂^{-1/2} (Ã + I) D̂^{-1/2}, with D̂ the row sums of |Ã| + I.
Tensor gcn_normalized_adjacency(const PaddedAdjacency& adj);

struct GCNLayer {
  Linear linear;
  double dropout = 0.5;

  GCNLayer() = default;
  GCNLayer(std::size_t d_in, std::size_t d_out, double dropout_rate, Rng& rng);

  // tanh(Â X W + b), followed by dropout when `rng` is given (training).
  Tensor forward(const Tensor& x, const Tensor& a_hat, Rng* rng = nullptr) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

// Message-passing edges for one snapshot: messages flow src -> dst, one
// attribute row per edge.
struct GineEdges {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  Tensor attr;  // (E, d_e)
};

// Scalar edge weights as 1-wide attributes. Undirected edges yield both
// directions; directed edges deliver to their head (in-neighbourhoods).
GineEdges gine_edges(const Snapshot& s, bool directed);

struct GINELayer {
  Linear mlp_in;     // d -> hidden
  Linear mlp_out;    // hidden -> d
  Tensor eps;        // learnable scalar
  Linear edge_proj;  // d_e -> d

  GINELayer() = default;
  GINELayer(std::size_t d, std::size_t hidden, std::size_t d_edge, Rng& rng);

  std::size_t width() const { return mlp_out.out_features(); }

  // φ((1+ε) x_i + Σ_{j→i} relu(x_j + proj(e_ji))) with φ = mlp_out∘relu∘mlp_in.
  Tensor forward(const Tensor& x, const GineEdges& edges) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

}  // namespace dgm
