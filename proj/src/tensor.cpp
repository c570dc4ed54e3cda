#include "dgm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "dgm/error.hpp"

namespace dgm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kData: return "data";
    case ErrorKind::kSampling: return "sampling";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw dimension_error("tensor of shape " + shape_str(shape) + " given " +
                          std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw dimension_error("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw contract_error("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw dimension_error("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  shape();
  if (node_->backward) throw contract_error("mutable_data() on a non-leaf tensor");
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw dimension_error("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return data()[i]; }

double Tensor::at(std::size_t i, std::size_t j) const {
  return data()[i * dim(1) + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data()[(i * dim(1) + j) * dim(2) + k];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

std::span<const double> Tensor::grad() const {
  shape();
  node_->ensure_grad();
  return node_->grad;
}

Tensor Tensor::grad_tensor() const {
  auto g = grad();
  return from(shape(), {g.begin(), g.end()});
}

void Tensor::zero_grad() {
  shape();
  node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), to_vector()); }

std::span<const double> BackwardContext::input(std::size_t i) const {
  return inputs_[i]->value;
}

const Shape& BackwardContext::input_shape(std::size_t i) const { return inputs_[i]->shape; }

bool BackwardContext::needs_grad(std::size_t i) const { return inputs_[i]->requires_grad; }

std::span<double> BackwardContext::grad_in(std::size_t i) {
  auto& node = *inputs_[i];
  if (!node.requires_grad) return {};
  node.ensure_grad();
  return node.grad;
}

Tensor record_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                 BackwardFn backward) {
  auto node = make_leaf(std::move(shape), std::move(value), false);
  if (!g_grad_enabled) return Tensor(node);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Tensor(node);
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node_);
  node->backward = std::move(backward);
  return Tensor(node);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.node_ || !root.node_->requires_grad) return tape;
  // Iterative post-order DFS; reversing it yields outputs before inputs.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  std::vector<std::shared_ptr<detail::Node>> post;
  stack.emplace_back(root.node_, 0);
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(post.begin(), post.end());
  tape.order_ = std::move(post);
  return tape;
}

const std::vector<const detail::Node*>& Tape::nodes() const {
  if (nodes_.size() != order_.size()) {
    nodes_.clear();
    for (const auto& n : order_) nodes_.push_back(n.get());
  }
  return nodes_;
}

void Tape::replay_backward() {
  if (order_.empty()) return;
  // Interior gradients are rebuilt from scratch on every replay.
  for (auto& n : order_) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  auto& root = *order_.front();
  root.ensure_grad();
  for (auto& g : root.grad) g += 1.0;
  for (auto& n : order_) {
    if (!n->backward) continue;
    BackwardContext ctx;
    ctx.grad_out_ = n->grad;
    ctx.value_out_ = n->value;
    ctx.inputs_ = n->inputs;
    n->backward(ctx);
  }
  for (auto& n : order_) {
    if (n->backward) std::vector<double>().swap(n->grad);
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1 || loss.rank() > 1) {
    throw contract_error("backward() needs a scalar loss, got shape " +
                         shape_str(loss.shape()));
  }
  Tape::record(loss).replay_backward();
}

std::vector<Tensor> backward(const Tensor& loss, const ParameterList& params) {
  zero_grad(params);
  backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.value.grad_tensor());
  return grads;
}

void zero_grad(const ParameterList& params) {
  for (auto p : params) p.value.zero_grad();
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

}  // namespace dgm
