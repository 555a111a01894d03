#include "dilskit/learn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dilskit/error.hpp"

namespace dilskit {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::identity, Activation::sigmoid, Activation::tanh, Activation::relu}) {
    if (to_string(a) == name) return a;
  }
  throw UnknownName("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::tanh:
      return std::tanh(z);
    case Activation::relu:
      return z > 0 ? z : 0.0;
  }
  return z;
}

double activate_derivative(Activation act, double z) {
  switch (act) {
    case Activation::identity:
      return 1.0;
    case Activation::sigmoid: {
      double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::relu:
      return z > 0 ? 1.0 : 0.0;
  }
  return 1.0;
}

std::string unit_input_name(std::size_t i) { return "x" + std::to_string(i); }

BoxInterface unit_interface(std::size_t inputs) {
  BoxInterface iface;
  for (std::size_t i = 0; i < inputs; ++i) iface.inputs.push_back({unit_input_name(i), PortKind::real()});
  iface.outputs.push_back({std::string(kUnitOutput), PortKind::real()});
  return iface;
}

BoxInterface LearnerUnit::interface() const { return unit_interface(w.size()); }

double LearnerUnit::pre_activation(std::span<const double> x) const {
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
  return z + b;
}

UnitPlan plan_units(const WiringDiagram& flat, const std::map<std::string, LearnerUnit>& units) {
  require_valid(flat, "network diagram");
  auto all_real = [](const std::vector<PortSpec>& side) {
    for (const auto& p : side) {
      if (p.kind != PortKind::real()) return false;
    }
    return true;
  };
  if (!all_real(flat.outer.inputs) || !all_real(flat.outer.outputs)) {
    throw InvalidDiagram("network ports must all be real", {});
  }
  UnitPlan plan;
  std::map<std::string, std::size_t> index;
  for (const auto& [id, iface] : flat.inner) {
    auto it = units.find(id);
    if (it == units.end()) throw InvalidDiagram("box '" + id + "' has no unit", {});
    if (it->second.interface() != iface) {
      throw InvalidDiagram("box '" + id + "' is " + to_string(iface) + " but its unit has " +
                               std::to_string(it->second.w.size()) + " weights",
                           {});
    }
    index.emplace(id, plan.ids.size());
    plan.ids.push_back(id);
  }
  for (const auto& [id, u] : units) {
    if (!flat.inner.count(id)) throw InvalidDiagram("unit '" + id + "' has no box", {});
  }

  std::map<PortRef, PortRef> feed;
  for (const auto& w : flat.wires) feed.emplace(w.dest, w.source);
  auto source_of = [&](const PortRef& dest) {
    const auto& s = feed.at(dest);
    if (s.locus == Locus::outer_input) return UnitPlan::Source{true, *flat.outer.input_index(s.port)};
    return UnitPlan::Source{false, index.at(s.box)};
  };

  const std::size_t n = plan.ids.size();
  std::vector<std::set<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<UnitPlan::Source> ins;
    std::set<std::size_t> preds;
    for (const auto& p : flat.inner.at(plan.ids[u]).inputs) {
      ins.push_back(source_of(PortRef::in(plan.ids[u], p.name)));
      if (!ins.back().outer) preds.insert(ins.back().index);
    }
    for (auto p : preds) succ[p].insert(u);
    indegree[u] = preds.size();
    plan.unit_inputs.push_back(std::move(ins));
  }
  for (const auto& p : flat.outer.outputs) plan.outer_outputs.push_back(source_of(PortRef::outer_out(p.name)));

  std::set<std::size_t> ready;
  for (std::size_t u = 0; u < n; ++u) {
    if (indegree[u] == 0) ready.insert(u);
  }
  while (!ready.empty()) {
    auto u = *ready.begin();
    ready.erase(ready.begin());
    plan.order.push_back(u);
    for (auto s : succ[u]) {
      if (--indegree[s] == 0) ready.insert(s);
    }
  }
  if (plan.order.size() != n) {
    std::vector<std::string> stuck;
    for (std::size_t u = 0; u < n; ++u) {
      if (indegree[u] > 0) stuck.push_back(plan.ids[u]);
    }
    std::string text;
    for (const auto& s : stuck) text += (text.empty() ? "" : ", ") + s;
    throw CycleError("value wires form a cycle through: " + text, stuck);
  }
  return plan;
}

DiagramNet::DiagramNet(NestedDiagram tree, std::map<std::string, LearnerUnit> units)
    : tree_(std::move(tree)), flat_(flatten(tree_)), units_(std::move(units)) {
  plan_ = plan_units(flat_, units_);
}

LearnerUnit& DiagramNet::unit(const std::string& id) {
  auto it = units_.find(id);
  if (it == units_.end()) throw UnknownName("no unit '" + id + "'");
  cache_.reset();
  return it->second;
}

namespace {

void check_arity(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                     std::to_string(got));
  }
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NonFiniteError("non-finite value at " + where, 0.0, where);
}

}  // namespace

std::vector<double> DiagramNet::forward(std::span<const double> x) {
  check_arity(x.size(), input_count(), "network input");
  Cache c;
  const auto n = plan_.ids.size();
  c.x.resize(n);
  c.z.assign(n, 0.0);
  c.y.assign(n, 0.0);
  for (auto u : plan_.order) {
    const auto& unit = units_.at(plan_.ids[u]);
    auto& in = c.x[u];
    for (const auto& s : plan_.unit_inputs[u]) in.push_back(s.outer ? x[s.index] : c.y[s.index]);
    c.z[u] = unit.pre_activation(in);
    c.y[u] = activate(unit.act, c.z[u]);
    check_finite(c.y[u], plan_.ids[u] + ".y");
  }
  std::vector<double> out;
  for (const auto& s : plan_.outer_outputs) out.push_back(s.outer ? x[s.index] : c.y[s.index]);
  cache_ = std::move(c);
  return out;
}

namespace {

std::vector<double> eval_level(const NestedDiagram& tree, const std::string& prefix,
                               const std::map<std::string, LearnerUnit>& units,
                               std::span<const double> x) {
  const auto& d = tree.diagram;
  std::map<PortRef, PortRef> feed;
  for (const auto& w : d.wires) feed.emplace(w.dest, w.source);

  // Boxes of this level in dependency order, lowest id first.
  std::map<std::string, std::set<std::string>> preds;
  for (const auto& [id, iface] : d.inner) {
    auto& p = preds[id];
    for (const auto& port : iface.inputs) {
      const auto& s = feed.at(PortRef::in(id, port.name));
      if (s.locus == Locus::inner_output) p.insert(s.box);
    }
  }
  std::map<std::string, std::vector<double>> outputs;
  auto value_of = [&](const PortRef& src) {
    if (src.locus == Locus::outer_input) return x[*d.outer.input_index(src.port)];
    return outputs.at(src.box)[*d.inner.at(src.box).output_index(src.port)];
  };
  while (outputs.size() < d.inner.size()) {
    const std::string* next = nullptr;
    for (const auto& [id, p] : preds) {
      if (outputs.count(id)) continue;
      bool ready = true;
      for (const auto& q : p) ready = ready && outputs.count(q);
      if (ready) {
        next = &id;
        break;
      }
    }
    if (!next) {
      std::vector<std::string> stuck;
      for (const auto& [id, p] : preds) {
        if (!outputs.count(id)) stuck.push_back(prefix + id);
      }
      throw CycleError("nested level '" + prefix + "' has a box cycle", stuck);
    }
    const auto& iface = d.inner.at(*next);
    std::vector<double> in;
    for (const auto& port : iface.inputs) in.push_back(value_of(feed.at(PortRef::in(*next, port.name))));
    if (const auto* c = tree.child(*next)) {
      outputs[*next] = eval_level(*c, prefix + *next + "/", units, in);
    } else {
      const auto& unit = units.at(prefix + *next);
      outputs[*next] = {activate(unit.act, unit.pre_activation(in))};
    }
  }
  std::vector<double> out;
  for (const auto& p : d.outer.outputs) out.push_back(value_of(feed.at(PortRef::outer_out(p.name))));
  return out;
}

}  // namespace

std::vector<double> DiagramNet::forward_nested(std::span<const double> x) const {
  check_arity(x.size(), input_count(), "network input");
  return eval_level(tree_, "", units_, x);
}

Gradients DiagramNet::backward(std::span<const double> dy) const {
  if (!cache_) throw StaleCache("backward() needs a forward() with the current parameters");
  check_arity(dy.size(), output_count(), "output gradient");
  const auto& c = *cache_;
  const auto n = plan_.ids.size();
  Gradients g;
  g.dx.assign(input_count(), 0.0);
  std::vector<double> dy_unit(n, 0.0);

  auto send = [&](const UnitPlan::Source& s, double v) {
    (s.outer ? g.dx[s.index] : dy_unit[s.index]) += v;
  };
  for (std::size_t j = 0; j < plan_.outer_outputs.size(); ++j) send(plan_.outer_outputs[j], dy[j]);

  for (auto it = plan_.order.rbegin(); it != plan_.order.rend(); ++it) {
    auto u = *it;
    const auto& unit = units_.at(plan_.ids[u]);
    double dz = dy_unit[u] * activate_derivative(unit.act, c.z[u]);
    UnitGradient ug;
    ug.db = dz;
    for (std::size_t i = 0; i < unit.w.size(); ++i) {
      ug.dw.push_back(dz * c.x[u][i]);
      send(plan_.unit_inputs[u][i], dz * unit.w[i]);
    }
    g.units.emplace(plan_.ids[u], std::move(ug));
  }
  return g;
}

void DiagramNet::apply(const Gradients& g, double eta) {
  for (auto& [id, unit] : units_) {
    if (!unit.trainable) continue;
    auto it = g.units.find(id);
    if (it == g.units.end()) continue;
    for (std::size_t i = 0; i < unit.w.size(); ++i) unit.w[i] -= eta * it->second.dw[i];
    unit.b -= eta * it->second.db;
  }
  cache_.reset();
}

std::string mlp_unit_id(std::size_t layers, std::size_t layer, std::size_t j) {
  std::string id;
  for (std::size_t k = layer + 1; k < layers; ++k) id += "sub/";
  return id + "l" + std::to_string(layer) + "n" + std::to_string(j);
}

std::size_t nesting_depth(std::string_view id) {
  return static_cast<std::size_t>(std::count(id.begin(), id.end(), '/'));
}

namespace {

NestedDiagram mlp_level(std::span<const std::size_t> sizes, std::size_t layer) {
  const bool top = layer + 1 == sizes.size();
  const std::string out_prefix = top ? "y" : "h";
  NestedDiagram t;
  auto& d = t.diagram;
  for (std::size_t i = 0; i < sizes[0]; ++i) d.outer.inputs.push_back({unit_input_name(i), PortKind::real()});
  for (std::size_t j = 0; j < sizes[layer]; ++j) {
    d.outer.outputs.push_back({out_prefix + std::to_string(j), PortKind::real()});
  }
  const std::size_t fanin = layer == 0 ? 1 : sizes[layer - 1];
  for (std::size_t j = 0; j < sizes[layer]; ++j) {
    auto id = "l" + std::to_string(layer) + "n" + std::to_string(j);
    d.inner.emplace(id, unit_interface(fanin));
    if (layer == 0) {
      d.wires.push_back({PortRef::outer_in(unit_input_name(j)), PortRef::in(id, unit_input_name(0))});
    } else {
      for (std::size_t i = 0; i < fanin; ++i) {
        d.wires.push_back({PortRef::out("sub", "h" + std::to_string(i)), PortRef::in(id, unit_input_name(i))});
      }
    }
    d.wires.push_back({PortRef::out(id, std::string(kUnitOutput)), PortRef::outer_out(out_prefix + std::to_string(j))});
  }
  if (layer > 0) {
    auto below = mlp_level(sizes, layer - 1);
    d.inner.emplace("sub", below.diagram.outer);
    for (const auto& p : d.outer.inputs) {
      d.wires.push_back({PortRef::outer_in(p.name), PortRef::in("sub", p.name)});
    }
    t.set_child("sub", std::move(below));
  }
  normalize(d);
  return t;
}

}  // namespace

DiagramNet unfold_mlp(std::span<const std::size_t> layer_sizes, Activation act, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ShapeError("an MLP needs at least two layers");
  for (auto s : layer_sizes) {
    if (s == 0) throw ShapeError("layer sizes must be positive");
  }
  const auto layers = layer_sizes.size();
  std::mt19937_64 rng(seed);
  std::map<std::string, LearnerUnit> units;
  for (std::size_t j = 0; j < layer_sizes[0]; ++j) {
    units.emplace(mlp_unit_id(layers, 0, j), LearnerUnit{{1.0}, 0.0, Activation::identity, false});
  }
  for (std::size_t l = 1; l < layers; ++l) {
    const auto fanin = layer_sizes[l - 1];
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fanin)),
                                                1.0 / std::sqrt(double(fanin)));
    for (std::size_t j = 0; j < layer_sizes[l]; ++j) {
      LearnerUnit u;
      u.act = act;
      for (std::size_t i = 0; i < fanin; ++i) u.w.push_back(dist(rng));
      units.emplace(mlp_unit_id(layers, l, j), std::move(u));
    }
  }
  return DiagramNet(mlp_level(layer_sizes, layers - 1), std::move(units));
}

double mse(std::span<const double> y, std::span<const double> target) {
  check_arity(target.size(), y.size(), "target");
  double s = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) s += (y[j] - target[j]) * (y[j] - target[j]);
  return y.empty() ? 0.0 : s / double(y.size());
}

std::vector<double> mse_gradient(std::span<const double> y, std::span<const double> target) {
  check_arity(target.size(), y.size(), "target");
  std::vector<double> g;
  for (std::size_t j = 0; j < y.size(); ++j) g.push_back(2.0 * (y[j] - target[j]) / double(y.size()));
  return g;
}

TrainResult train(DiagramNet& net, std::span<const Example> data, const TrainConfig& cfg) {
  if (data.empty()) throw ShapeError("training needs at least one example");
  if (!(cfg.eta >= 0)) throw ShapeError("learning rate must be non-negative");
  TrainResult r;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto y = net.forward(data[i].x);
      double loss = mse(y, data[i].target);
      if (!std::isfinite(loss)) {
        auto where = "epoch " + std::to_string(e) + ", example " + std::to_string(i);
        throw NonFiniteError("non-finite loss at " + where, double(e), where);
      }
      r.step_loss.push_back(loss);
      total += loss;
      net.apply(net.backward(mse_gradient(y, data[i].target)), cfg.eta);
    }
    r.epoch_loss.push_back(total / double(data.size()));
  }
  return r;
}

}  // namespace dilskit
