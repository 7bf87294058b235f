#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mscmhmst/tensor.hpp"

namespace mscmhmst {

/// Named trainable arrays with paired gradient buffers, kept in
/// insertion order. Insertion order is the checkpoint order.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  Tensor& add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;
  Entry& entry(const std::string& name) { return entries_[index_of(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[index_of(name)]; }
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  /// Number of arrays.
  std::size_t count() const { return entries_.size(); }
  /// Number of scalars across all arrays.
  std::size_t total_size() const;

  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a value recorded in a Graph. Cheap to copy; valid for the
/// lifetime of its Graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Graph::backward; zeros if the value did not influence the loss.
  Tensor grad() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of executed operations. Operations append nodes after their
/// inputs, so walking the tape backwards is a reverse topological order
/// and visits each operation once.
///
/// A Graph built with record=false stores values only; nothing requires
/// gradients and backward() is unavailable. Use it for inference.
class Graph {
 public:
  /// Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(const Tensor& out_grad, Graph& graph)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Leaf bound to a ParameterSet entry; backward() accumulates into its grad.
  /// Repeated requests for the same entry return the same node.
  Var parameter(ParameterSet& params, const std::string& name);

  /// Appends an operation result. `backward` runs only when at least one
  /// input requires a gradient.
  Var emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var emit(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient buffer of an input, allocated on first use; nullptr when the
  /// input does not require a gradient.
  Tensor* grad_target(const Var& v);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor grad(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a single-element loss. Parameter gradients are
  /// added to the ParameterSet grad buffers, so consecutive calls (on this
  /// or other graphs) accumulate until the caller runs zero_grad().
  void backward(const Var& loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    ParameterSet* params = nullptr;
    std::size_t param_index = 0;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::unordered_map<std::size_t, std::size_t>> param_nodes_;
};

}  // namespace mscmhmst
