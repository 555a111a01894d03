#include "dilskit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <set>
#include <type_traits>

#include "dilskit/error.hpp"

namespace dilskit {

PortKind kind_of(const Value& v) {
  if (std::holds_alternative<bool>(v)) return PortKind::boolean();
  if (std::holds_alternative<double>(v)) return PortKind::real();
  return PortKind::vector(static_cast<int>(std::get<RealVector>(v).size()));
}

bool is_finite(const Value& v) {
  if (const auto* x = std::get_if<double>(&v)) return std::isfinite(*x);
  if (const auto* xs = std::get_if<RealVector>(&v)) {
    for (double x : *xs) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

Value zero_value(PortKind kind) {
  switch (kind.kind) {
    case ValueKind::boolean:
      return false;
    case ValueKind::real:
      return 0.0;
    case ValueKind::real_vector:
      return RealVector(static_cast<std::size_t>(kind.dim), 0.0);
  }
  return 0.0;
}

namespace {

void check_values(ValuesView values, const std::vector<PortSpec>& ports, const std::string& what) {
  if (values.size() != ports.size()) {
    throw ShapeError(what + ": expected " + std::to_string(ports.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < ports.size(); ++i) {
    if (kind_of(values[i]) != ports[i].kind) {
      throw ShapeError(what + ": port '" + ports[i].name + "' expects " +
                       to_string(ports[i].kind) + ", got " + to_string(kind_of(values[i])));
    }
  }
}

void check_passthrough(const Passthrough& pass, const BoxInterface& iface) {
  if (pass.empty()) return;
  if (pass.size() != iface.outputs.size()) {
    throw ShapeError("passthrough table does not match the output ports");
  }
  for (std::size_t j = 0; j < pass.size(); ++j) {
    if (pass[j] && (*pass[j] >= iface.inputs.size() ||
                    iface.inputs[*pass[j]].kind != iface.outputs[j].kind)) {
      throw ShapeError("passthrough for output '" + iface.outputs[j].name + "' is ill-typed");
    }
  }
}

void apply_passthrough(Values& out, const Passthrough& pass, ValuesView inputs) {
  for (std::size_t j = 0; j < pass.size(); ++j) {
    if (pass[j]) out[j] = inputs[*pass[j]];
  }
}

}  // namespace

Values CombinationalSystem::operator()(ValuesView inputs) const {
  auto out = fn(inputs);
  check_values(out, interface.outputs, "combinational output");
  return out;
}

Values MooreSystem::outputs(ValuesView s, ValuesView inputs) const {
  auto out = readout(s);
  if (out.size() != interface.outputs.size()) {
    throw ShapeError("Moore readout produced " + std::to_string(out.size()) + " values for " +
                     std::to_string(interface.outputs.size()) + " outputs");
  }
  apply_passthrough(out, passthrough, inputs);
  check_values(out, interface.outputs, "Moore readout");
  return out;
}

Values MooreSystem::next(ValuesView s, ValuesView inputs) const {
  auto n = update(s, inputs);
  if (n.size() != s.size()) throw ShapeError("Moore update changed the state size");
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (kind_of(n[i]) != kind_of(s[i])) {
      throw ShapeError("Moore update changed the kind of state[" + std::to_string(i) + "]");
    }
  }
  return n;
}

Values ContinuousSystem::outputs(std::span<const double> s, ValuesView inputs) const {
  auto out = readout(s);
  if (out.size() != interface.outputs.size()) {
    throw ShapeError("continuous readout produced " + std::to_string(out.size()) +
                     " values for " + std::to_string(interface.outputs.size()) + " outputs");
  }
  apply_passthrough(out, passthrough, inputs);
  check_values(out, interface.outputs, "continuous readout");
  return out;
}

std::vector<double> ContinuousSystem::derivative(std::span<const double> s,
                                                 ValuesView inputs) const {
  auto d = field(s, inputs);
  if (d.size() != s.size()) throw ShapeError("vector field changed the state dimension");
  return d;
}

namespace {

// Where a composite reads a value from: an outer input, or a readout-driven
// output of an inner box (pass-through outputs are resolved away).
struct Source {
  bool outer = false;
  std::size_t index = 0;  // outer input index, or box index
  std::size_t port = 0;   // output index when !outer
};

struct Routing {
  std::vector<std::string> ids;
  std::vector<BoxInterface> ifaces;
  std::vector<std::vector<Source>> box_inputs;
  std::vector<Source> outer_outputs;
  Passthrough passthrough;  // of the composite
};

template <class System>
std::vector<const System*> check_assignment(const WiringDiagram& d,
                                            const std::map<std::string, System>& assign) {
  require_valid(d, "diagram");
  std::vector<const System*> systems;
  for (const auto& [id, iface] : d.inner) {
    auto it = assign.find(id);
    if (it == assign.end()) throw CompositionError("no system assigned to box '" + id + "'");
    if (it->second.interface != iface) {
      throw CompositionError("interface mismatch for box '" + id + "': box is " +
                             to_string(iface) + ", system is " +
                             to_string(it->second.interface));
    }
    systems.push_back(&it->second);
  }
  for (const auto& [id, s] : assign) {
    if (!d.inner.count(id)) throw CompositionError("system assigned to unknown box '" + id + "'");
  }
  return systems;
}

Routing route(const WiringDiagram& d, const std::vector<const Passthrough*>& pass) {
  Routing r;
  std::map<std::string, std::size_t> index;
  for (const auto& [id, iface] : d.inner) {
    index.emplace(id, r.ids.size());
    r.ids.push_back(id);
    r.ifaces.push_back(iface);
  }
  std::map<PortRef, PortRef> feed;
  for (const auto& w : d.wires) feed.emplace(w.dest, w.source);

  auto resolve = [&](const PortRef& dest) {
    std::set<std::pair<std::size_t, std::size_t>> visited;
    PortRef src = feed.at(dest);
    while (true) {
      if (src.locus == Locus::outer_input) {
        return Source{true, *d.outer.input_index(src.port), 0};
      }
      std::size_t b = index.at(src.box);
      std::size_t p = *r.ifaces[b].output_index(src.port);
      const auto& pt = *pass[b];
      if (pt.empty() || !pt[p]) return Source{false, b, p};
      if (!visited.emplace(b, p).second) {
        throw CompositionError("algebraic loop through pass-through output '" + src.box + "." +
                               src.port + "'");
      }
      src = feed.at(PortRef::in(src.box, r.ifaces[b].inputs[*pt[p]].name));
    }
  };

  for (std::size_t b = 0; b < r.ids.size(); ++b) {
    std::vector<Source> ins;
    for (const auto& p : r.ifaces[b].inputs) ins.push_back(resolve(PortRef::in(r.ids[b], p.name)));
    r.box_inputs.push_back(std::move(ins));
  }
  bool any_pass = false;
  for (const auto& p : d.outer.outputs) {
    auto s = resolve(PortRef::outer_out(p.name));
    r.outer_outputs.push_back(s);
    r.passthrough.push_back(s.outer ? std::optional<std::size_t>(s.index) : std::nullopt);
    any_pass = any_pass || s.outer;
  }
  if (!any_pass) r.passthrough.clear();
  return r;
}

template <class Readouts>
Values gather(const std::vector<Source>& sources, const Readouts& readouts, ValuesView inputs) {
  Values v;
  v.reserve(sources.size());
  for (const auto& s : sources) v.push_back(s.outer ? inputs[s.index] : readouts[s.index][s.port]);
  return v;
}

}  // namespace

CombinationalSystem compose_combinational(
    const WiringDiagram& d, const std::map<std::string, CombinationalSystem>& assign) {
  auto systems = check_assignment(d, assign);
  Passthrough none;
  std::vector<const Passthrough*> pass(systems.size(), &none);
  auto r = std::make_shared<Routing>(route(d, pass));

  // Kahn's algorithm over inner-to-inner wires, lowest id first.
  const std::size_t n = r->ids.size();
  std::vector<std::set<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t b = 0; b < n; ++b) {
    std::set<std::size_t> preds;
    for (const auto& s : r->box_inputs[b]) {
      if (!s.outer) preds.insert(s.index);
    }
    for (auto p : preds) succ[p].insert(b);
    indegree[b] = preds.size();
  }
  std::set<std::size_t> ready;
  for (std::size_t b = 0; b < n; ++b) {
    if (indegree[b] == 0) ready.insert(b);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    auto b = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(b);
    for (auto s : succ[b]) {
      if (--indegree[s] == 0) ready.insert(s);
    }
  }
  if (order.size() != n) {
    // Walk predecessors among the leftover boxes until one repeats.
    std::vector<std::size_t> path;
    std::vector<int> seen(n, -1);
    std::size_t b = 0;
    while (indegree[b] == 0) ++b;
    while (seen[b] < 0) {
      seen[b] = static_cast<int>(path.size());
      path.push_back(b);
      for (const auto& s : r->box_inputs[b]) {
        if (!s.outer && indegree[s.index] > 0) {
          b = s.index;
          break;
        }
      }
    }
    std::vector<std::string> cycle;
    std::string text;
    for (auto i = static_cast<std::size_t>(seen[b]); i < path.size(); ++i) {
      cycle.push_back(r->ids[path[i]]);
    }
    std::reverse(cycle.begin(), cycle.end());
    for (const auto& id : cycle) text += id + " -> ";
    throw CycleError("combinational wiring has a cycle: " + text + cycle.front(), cycle);
  }

  std::vector<CombinationalSystem> boxes;
  for (const auto* s : systems) boxes.push_back(*s);
  auto impl = std::make_shared<const std::tuple<Routing, std::vector<CombinationalSystem>,
                                                std::vector<std::size_t>>>(
      *r, std::move(boxes), std::move(order));

  CombinationalSystem out;
  out.interface = d.outer;
  out.fn = [impl](ValuesView inputs) {
    const auto& [routing, boxes, order] = *impl;
    std::vector<Values> outs(boxes.size());
    for (auto b : order) {
      auto in = gather(routing.box_inputs[b], outs, inputs);
      outs[b] = boxes[b](in);
    }
    return gather(routing.outer_outputs, outs, inputs);
  };
  return out;
}

namespace {

struct MooreImpl {
  Routing routing;
  std::vector<MooreSystem> boxes;
  std::vector<std::size_t> offset;  // into the concatenated state
  BoxInterface outer;

  std::vector<Values> readouts(ValuesView state) const {
    std::vector<Values> r;
    r.reserve(boxes.size());
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      auto s = state.subspan(offset[b], boxes[b].state.size());
      auto out = boxes[b].readout(s);
      if (out.size() != boxes[b].interface.outputs.size()) {
        throw ShapeError("readout of '" + routing.ids[b] + "' has the wrong arity");
      }
      r.push_back(std::move(out));
    }
    return r;
  }
};

struct ContinuousImpl {
  Routing routing;
  std::vector<ContinuousSystem> boxes;
  std::vector<std::size_t> offset;

  std::vector<Values> readouts(std::span<const double> state) const {
    std::vector<Values> r;
    r.reserve(boxes.size());
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      auto out = boxes[b].readout(state.subspan(offset[b], boxes[b].state.size()));
      if (out.size() != boxes[b].interface.outputs.size()) {
        throw ShapeError("readout of '" + routing.ids[b] + "' has the wrong arity");
      }
      r.push_back(std::move(out));
    }
    return r;
  }
};

Values outer_readout(const Routing& r, const std::vector<Values>& readouts,
                     const BoxInterface& outer) {
  Values v;
  for (std::size_t j = 0; j < r.outer_outputs.size(); ++j) {
    const auto& s = r.outer_outputs[j];
    v.push_back(s.outer ? zero_value(outer.outputs[j].kind) : readouts[s.index][s.port]);
  }
  return v;
}

}  // namespace

MooreSystem compose_moore(const WiringDiagram& d, const std::map<std::string, MooreSystem>& assign) {
  auto systems = check_assignment(d, assign);
  std::vector<const Passthrough*> pass;
  for (const auto* s : systems) {
    check_passthrough(s->passthrough, s->interface);
    pass.push_back(&s->passthrough);
  }
  auto impl = std::make_shared<MooreImpl>();
  impl->routing = route(d, pass);
  impl->outer = d.outer;

  MooreSystem out;
  out.interface = d.outer;
  for (const auto* s : systems) {
    impl->offset.push_back(out.state.size());
    out.state.insert(out.state.end(), s->state.begin(), s->state.end());
    impl->boxes.push_back(*s);
  }
  out.passthrough = impl->routing.passthrough;
  std::shared_ptr<const MooreImpl> cimpl = impl;
  out.readout = [cimpl](ValuesView state) {
    return outer_readout(cimpl->routing, cimpl->readouts(state), cimpl->outer);
  };
  out.update = [cimpl](ValuesView state, ValuesView inputs) {
    const auto& m = *cimpl;
    auto r = m.readouts(state);
    Values next;
    next.reserve(state.size());
    for (std::size_t b = 0; b < m.boxes.size(); ++b) {
      auto in = gather(m.routing.box_inputs[b], r, inputs);
      auto s = state.subspan(m.offset[b], m.boxes[b].state.size());
      auto n = m.boxes[b].next(s, in);
      next.insert(next.end(), std::make_move_iterator(n.begin()),
                  std::make_move_iterator(n.end()));
    }
    return next;
  };
  return out;
}

ContinuousSystem compose_continuous(const WiringDiagram& d,
                                    const std::map<std::string, ContinuousSystem>& assign) {
  auto check_real = [](const BoxInterface& iface, const std::string& owner) {
    for (const auto* side : {&iface.inputs, &iface.outputs}) {
      for (const auto& p : *side) {
        if (p.kind.kind == ValueKind::boolean) {
          throw CompositionError(owner + ": boolean port '" + p.name +
                                 "' in a continuous composite");
        }
      }
    }
  };
  check_real(d.outer, "outer");
  for (const auto& [id, iface] : d.inner) check_real(iface, "box '" + id + "'");

  auto systems = check_assignment(d, assign);
  std::vector<const Passthrough*> pass;
  for (const auto* s : systems) {
    check_passthrough(s->passthrough, s->interface);
    pass.push_back(&s->passthrough);
  }
  auto impl = std::make_shared<ContinuousImpl>();
  impl->routing = route(d, pass);

  ContinuousSystem out;
  out.interface = d.outer;
  for (const auto* s : systems) {
    impl->offset.push_back(out.state.size());
    out.state.insert(out.state.end(), s->state.begin(), s->state.end());
    impl->boxes.push_back(*s);
  }
  out.passthrough = impl->routing.passthrough;
  std::shared_ptr<const ContinuousImpl> cimpl = impl;
  BoxInterface outer = d.outer;
  out.readout = [cimpl, outer](std::span<const double> state) {
    return outer_readout(cimpl->routing, cimpl->readouts(state), outer);
  };
  out.field = [cimpl](std::span<const double> state, ValuesView inputs) {
    const auto& c = *cimpl;
    auto r = c.readouts(state);
    std::vector<double> dx;
    dx.reserve(state.size());
    for (std::size_t b = 0; b < c.boxes.size(); ++b) {
      auto in = gather(c.routing.box_inputs[b], r, inputs);
      auto part = c.boxes[b].derivative(state.subspan(c.offset[b], c.boxes[b].state.size()), in);
      dx.insert(dx.end(), part.begin(), part.end());
    }
    return dx;
  };
  return out;
}

namespace {

template <class System, class Compose>
System nested(const NestedDiagram& tree, const std::map<std::string, System>& leaves,
              const std::string& prefix, Compose compose) {
  std::map<std::string, System> assign;
  for (const auto& [id, iface] : tree.diagram.inner) {
    if (const auto* c = tree.child(id)) {
      assign.emplace(id, nested(*c, leaves, prefix + id + "/", compose));
    } else {
      auto it = leaves.find(prefix + id);
      if (it == leaves.end()) {
        throw CompositionError("no system for leaf '" + prefix + id + "'");
      }
      assign.emplace(id, it->second);
    }
  }
  return compose(tree.diagram, assign);
}

}  // namespace

CombinationalSystem compose_nested(const NestedDiagram& tree,
                                   const std::map<std::string, CombinationalSystem>& leaves) {
  return nested(tree, leaves, "", [](const auto& d, const auto& a) {
    return compose_combinational(d, a);
  });
}

MooreSystem compose_nested(const NestedDiagram& tree,
                           const std::map<std::string, MooreSystem>& leaves) {
  return nested(tree, leaves, "",
                [](const auto& d, const auto& a) { return compose_moore(d, a); });
}

ContinuousSystem compose_nested(const NestedDiagram& tree,
                                const std::map<std::string, ContinuousSystem>& leaves) {
  return nested(tree, leaves, "",
                [](const auto& d, const auto& a) { return compose_continuous(d, a); });
}

std::size_t steps_for(double t_end, double dt) {
  if (!(dt > 0) || !(t_end >= 0)) throw ShapeError("need dt > 0 and t_end >= 0");
  return static_cast<std::size_t>(std::llround(t_end / dt));
}

namespace {

void check_config(const SimConfig& cfg) {
  if (!(cfg.dt > 0) || !std::isfinite(cfg.dt)) throw ShapeError("dt must be positive and finite");
}

void check_inputs(const BoxInterface& iface, const InputTrace& inputs, std::size_t steps) {
  if (iface.inputs.empty()) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k].empty()) {
        throw ShapeError("input row " + std::to_string(k) + ": system has no inputs");
      }
    }
    return;
  }
  if (inputs.size() < steps + 1) {
    throw ShapeError("input trace has " + std::to_string(inputs.size()) + " rows; " +
                     std::to_string(steps) + " steps need " + std::to_string(steps + 1));
  }
  for (std::size_t k = 0; k <= steps; ++k) {
    check_values(inputs[k], iface.inputs, "input row " + std::to_string(k));
  }
}

ValuesView row_at(const InputTrace& inputs, std::size_t k) {
  return k < inputs.size() ? ValuesView(inputs[k]) : ValuesView();
}

void check_finite_row(const Values& row, const std::vector<PortSpec>& ports, double t) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (!is_finite(row[j])) {
      throw NonFiniteError("non-finite value on port '" + ports[j].name + "' at t=" +
                               std::to_string(t),
                           t, ports[j].name);
    }
  }
}

template <class State>
void check_finite_state(const State& state, double t) {
  for (std::size_t i = 0; i < state.size(); ++i) {
    bool ok;
    if constexpr (std::is_same_v<typename State::value_type, double>) {
      ok = std::isfinite(state[i]);
    } else {
      ok = is_finite(state[i]);
    }
    if (!ok) {
      auto port = "state[" + std::to_string(i) + "]";
      throw NonFiniteError("non-finite " + port + " at t=" + std::to_string(t), t, port);
    }
  }
}

}  // namespace

SimTrace simulate(const MooreSystem& system, const InputTrace& inputs, const SimConfig& cfg) {
  check_config(cfg);
  check_inputs(system.interface, inputs, cfg.steps);
  SimTrace trace;
  trace.ports = system.interface.outputs;
  Values state = system.state;
  for (std::size_t k = 0;; ++k) {
    double t = static_cast<double>(k) * cfg.dt;
    auto in = row_at(inputs, k);
    auto row = system.outputs(state, in);
    check_finite_row(row, trace.ports, t);
    trace.times.push_back(t);
    trace.rows.push_back(std::move(row));
    if (cfg.record_state) trace.states.push_back(state);
    if (k == cfg.steps) break;
    state = system.next(state, in);
    check_finite_state(state, static_cast<double>(k + 1) * cfg.dt);
  }
  return trace;
}

SimTrace simulate(const ContinuousSystem& system, const InputTrace& inputs, const SimConfig& cfg) {
  check_config(cfg);
  check_inputs(system.interface, inputs, cfg.steps);
  SimTrace trace;
  trace.ports = system.interface.outputs;
  std::vector<double> x = system.state;
  const double dt = cfg.dt;
  const std::size_t n = x.size();
  std::vector<double> tmp(n);
  for (std::size_t k = 0;; ++k) {
    double t = static_cast<double>(k) * dt;
    auto in = row_at(inputs, k);
    auto row = system.outputs(x, in);
    check_finite_row(row, trace.ports, t);
    trace.times.push_back(t);
    trace.rows.push_back(std::move(row));
    if (cfg.record_state) trace.states.push_back(Values(x.begin(), x.end()));
    if (k == cfg.steps) break;

    if (cfg.integrator == Integrator::euler) {
      auto k1 = system.derivative(x, in);
      for (std::size_t i = 0; i < n; ++i) x[i] += dt * k1[i];
    } else {
      auto k1 = system.derivative(x, in);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
      auto k2 = system.derivative(tmp, in);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
      auto k3 = system.derivative(tmp, in);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
      auto k4 = system.derivative(tmp, in);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    check_finite_state(x, static_cast<double>(k + 1) * dt);
  }
  return trace;
}

SimTrace simulate(const CombinationalSystem& system, const InputTrace& inputs,
                  const SimConfig& cfg) {
  check_config(cfg);
  check_inputs(system.interface, inputs, cfg.steps);
  SimTrace trace;
  trace.ports = system.interface.outputs;
  for (std::size_t k = 0; k <= cfg.steps; ++k) {
    double t = static_cast<double>(k) * cfg.dt;
    auto row = system(row_at(inputs, k));
    check_finite_row(row, trace.ports, t);
    trace.times.push_back(t);
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const SimTrace& trace) {
  out << "t";
  for (const auto& p : trace.ports) {
    if (p.kind.kind == ValueKind::real_vector) {
      for (int i = 0; i < p.kind.dim; ++i) out << ',' << p.name << '[' << i << ']';
    } else {
      out << ',' << p.name;
    }
  }
  out << '\n';
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    out << fmt17(trace.times[k]);
    for (const auto& v : trace.rows[k]) {
      if (const auto* b = std::get_if<bool>(&v)) {
        out << ',' << (*b ? '1' : '0');
      } else if (const auto* x = std::get_if<double>(&v)) {
        out << ',' << fmt17(*x);
      } else {
        for (double x : std::get<RealVector>(v)) out << ',' << fmt17(x);
      }
    }
    out << '\n';
  }
}

}  // namespace dilskit
