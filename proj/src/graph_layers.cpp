#include "dgm/graph_layers.hpp"

#include <cmath>

#include "dgm/error.hpp"
#include "dgm/ops.hpp"

namespace dgm {

Tensor gcn_normalized_adjacency(const PaddedAdjacency& adj) {
  const std::size_t n = adj.n;
  std::vector<double> inv_sqrt(n);
  for (std::size_t u = 0; u < n; ++u) {
    // Absolute weights keep the degree positive for signed graphs.
    double deg = 1.0;
    for (std::size_t v = 0; v < n; ++v) deg += std::abs(adj.at(u, v));
    inv_sqrt[u] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(n * n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      const double a = adj.at(u, v) + (u == v ? 1.0 : 0.0);
      out[u * n + v] = inv_sqrt[u] * a * inv_sqrt[v];
    }
  }
  return Tensor::from({n, n}, std::move(out));
}

GCNLayer::GCNLayer(std::size_t d_in, std::size_t d_out, double dropout_rate, Rng& rng)
    : linear(d_in, d_out, rng), dropout(dropout_rate) {}

Tensor GCNLayer::forward(const Tensor& x, const Tensor& a_hat, Rng* rng) const {
  if (a_hat.rank() != 2 || a_hat.dim(0) != a_hat.dim(1) || x.rank() != 2 ||
      x.dim(0) != a_hat.dim(0)) {
    throw dimension_error("gcn: features " + shape_str(x.shape()) + " vs adjacency " +
                          shape_str(a_hat.shape()));
  }
  Tensor h = matmul(a_hat, matmul(x, linear.weight));
  h = tanh(add(h, linear.bias));
  if (rng) h = dgm::dropout(h, dropout, *rng);
  return h;
}

void GCNLayer::collect(ParameterList& out, const std::string& prefix) const {
  linear.collect(out, prefix);
}

GineEdges gine_edges(const Snapshot& s, bool directed) {
  GineEdges e;
  std::vector<double> w;
  for (const auto& edge : s.edges) {
    e.src.push_back(edge.u);
    e.dst.push_back(edge.v);
    w.push_back(edge.w);
    if (!directed && edge.u != edge.v) {
      e.src.push_back(edge.v);
      e.dst.push_back(edge.u);
      w.push_back(edge.w);
    }
  }
  const std::size_t count = w.size();
  e.attr = Tensor::from({count, 1}, std::move(w));
  return e;
}

GINELayer::GINELayer(std::size_t d, std::size_t hidden, std::size_t d_edge, Rng& rng)
    : mlp_in(d, hidden, rng),
      mlp_out(hidden, d, rng),
      eps(Tensor::scalar(0.0, true)),
      edge_proj(d_edge, d, rng) {}

Tensor GINELayer::forward(const Tensor& x, const GineEdges& edges) const {
  if (x.rank() != 2 || x.dim(1) != mlp_in.in_features()) {
    throw dimension_error("gine: features " + shape_str(x.shape()) + " vs width " +
                          std::to_string(mlp_in.in_features()));
  }
  if (edges.src.size() != edges.dst.size()) throw data_error("gine: ragged edge index");
  const std::size_t count = edges.src.size();
  if (!edges.attr.defined() || edges.attr.rank() != 2 || edges.attr.dim(0) != count) {
    throw data_error("gine: every edge needs an attribute row (" + std::to_string(count) +
                     " edges)");
  }
  if (edges.attr.dim(1) != edge_proj.in_features()) {
    throw dimension_error("gine: edge attributes " + shape_str(edges.attr.shape()) +
                          " vs projection width " + std::to_string(edge_proj.in_features()));
  }
  Tensor h = mul(x, add_scalar(eps, 1.0));
  if (count > 0) {
    const Tensor msg = relu(add(index_rows(x, edges.src), edge_proj.forward(edges.attr)));
    h = add(h, scatter_add_rows(msg, edges.dst, x.dim(0)));
  }
  return mlp_out.forward(relu(mlp_in.forward(h)));
}

void GINELayer::collect(ParameterList& out, const std::string& prefix) const {
  mlp_in.collect(out, prefix + ".mlp_in");
  mlp_out.collect(out, prefix + ".mlp_out");
  out.push_back({prefix + ".eps", eps});
  edge_proj.collect(out, prefix + ".edge_proj");
}

}  // namespace dgm
