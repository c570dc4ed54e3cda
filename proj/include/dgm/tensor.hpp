#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// Every primitive op records a node holding its value, its inputs and a
// backward rule. backward() linearises the reachable graph into a Tape
// (reverse topological order) and replays it once.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dgm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of a leaf's storage. Throws for op results: mutating an
  // interior node would desynchronise it from its recorded backward rule.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Gradient accumulated by the last backward(); zeros when nothing flowed.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Copy of the value with no history.
  Tensor detach() const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Tensor record_op(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
  friend class Tape;
};

// Handed to a backward rule. grad_in(i) is empty when input i needs no
// gradient, so rules can skip that work.
class BackwardContext {
 public:
  std::span<const double> grad_out() const { return grad_out_; }
  std::span<const double> value_out() const { return value_out_; }
  std::span<const double> input(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  std::span<double> grad_in(std::size_t i);

 private:
  friend class Tape;
  std::span<const double> grad_out_;
  std::span<const double> value_out_;
  std::span<const std::shared_ptr<detail::Node>> inputs_;
};

// Register the result of a primitive. When gradient recording is disabled
// or no input requires a gradient, the inputs and rule are dropped.
Tensor record_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                 BackwardFn backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Nodes reachable from a root, ordered so that every node precedes all of
// its inputs. Each node appears exactly once.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<const detail::Node*>& nodes() const;

  // Seeds the root gradient with 1 and runs each backward rule once.
  void replay_backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
  mutable std::vector<const detail::Node*> nodes_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
void backward(const Tensor& loss);

struct Parameter {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<Parameter>;

// Clears the parameters' gradients, back-propagates `loss` and returns one
// gradient per parameter in list order. Parameters the loss does not
// depend on receive zeros.
std::vector<Tensor> backward(const Tensor& loss, const ParameterList& params);

void zero_grad(const ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

}  // namespace dgm
