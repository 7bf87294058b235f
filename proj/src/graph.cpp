#include "mscmhmst/graph.hpp"

#include "mscmhmst/errors.hpp"

namespace mscmhmst {

Tensor& ParameterSet::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  Tensor grad(init.shape(), 0.0);
  entries_.push_back({name, std::move(init), std::move(grad)});
  return entries_.back().value;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

const Tensor& Var::value() const { return graph_->value(id_); }
Tensor Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(ParameterSet& params, const std::string& name) {
  const std::size_t index = params.index_of(name);
  auto& cache = param_nodes_[&params];
  if (auto it = cache.find(index); it != cache.end()) return Var(this, it->second);
  nodes_.push_back(Node{params.entries()[index].value, {}, {}, record_, &params, index});
  cache.emplace(index, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs, nullptr, 0};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::emit(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs, nullptr, 0};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor* Graph::grad_target(const Var& v) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return &node.grad;
}

Tensor Graph::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.grad.empty() ? Tensor(node.value.shape(), 0.0) : node.grad;
}

void Graph::backward(const Var& loss) {
  if (!record_) throw ConfigError("backward() on a graph built without recording");
  if (loss.value().size() != 1) {
    throw ConfigError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(loss.shape(), 1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) {
      // The callback may allocate input grads, which never reallocates nodes_.
      node.backward(node.grad, *this);
    } else if (node.params) {
      auto& dst = node.params->entries()[node.param_index].grad;
      auto g = node.grad.data();
      auto d = dst.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += g[k];
    }
  }
}

}  // namespace mscmhmst
