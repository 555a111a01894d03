// Random generators and small oracles shared by the test binaries.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dilskit/diagram.hpp"
#include "dilskit/dils.hpp"
#include "dilskit/dsl.hpp"
#include "dilskit/dynamics.hpp"
#include "dilskit/learn.hpp"

namespace testkit {

using namespace dilskit;
using Rng = std::mt19937_64;

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& xs) {
  return xs[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(xs.size()) - 1))];
}

struct GenOptions {
  int max_boxes = 4;
  int max_ports = 3;  // per side
  std::vector<PortKind> kinds{PortKind::boolean(), PortKind::real(), PortKind::vector(2)};
  bool passthrough = true;  // outer input -> outer output wires
  bool self_loops = true;
  bool acyclic = false;     // inner wiring only goes from earlier to later boxes
};

inline std::vector<PortSpec> random_ports(Rng& rng, const GenOptions& o, const std::string& stem,
                                          int min = 0) {
  std::vector<PortSpec> out;
  int n = uniform_int(rng, min, o.max_ports);
  for (int i = 0; i < n; ++i) out.push_back({stem + std::to_string(i), pick(rng, o.kinds)});
  return out;
}

inline BoxInterface random_interface(Rng& rng, const GenOptions& o) {
  return {random_ports(rng, o, "i"), random_ports(rng, o, "o")};
}

// Picks a kind that some source can supply, or nothing.
inline std::optional<PortKind> feedable_kind(Rng& rng, const std::vector<std::pair<PortRef, PortKind>>& sources) {
  if (sources.empty()) return std::nullopt;
  return pick(rng, sources).second;
}

// A valid diagram with the given outer interface. Box ids are drawn from
// `ids` (the first `n` of them). Input port kinds are chosen among the kinds
// some legal source provides, so every destination can be fed.
inline WiringDiagram random_diagram(Rng& rng, const BoxInterface& outer, const GenOptions& o,
                                    std::vector<std::string> ids = {}) {
  if (ids.empty()) {
    int n = uniform_int(rng, 1, o.max_boxes);
    for (int i = 0; i < n; ++i) ids.push_back("k" + std::to_string(i));
  }
  WiringDiagram d;
  d.outer = outer;
  // Outputs first so that input kinds can follow the available sources.
  std::vector<std::vector<PortSpec>> outs;
  for (std::size_t b = 0; b < ids.size(); ++b) outs.push_back(random_ports(rng, o, "o"));

  auto sources_for = [&](std::optional<std::size_t> box) {
    std::vector<std::pair<PortRef, PortKind>> s;
    for (const auto& p : outer.inputs) s.push_back({PortRef::outer_in(p.name), p.kind});
    for (std::size_t b = 0; b < ids.size(); ++b) {
      if (box) {
        if (o.acyclic && b >= *box) continue;
        if (!o.self_loops && b == *box) continue;
      }
      for (const auto& p : outs[b]) s.push_back({PortRef::out(ids[b], p.name), p.kind});
    }
    return s;
  };

  for (std::size_t b = 0; b < ids.size(); ++b) {
    auto sources = sources_for(b);
    BoxInterface iface;
    iface.outputs = outs[b];
    int n_in = sources.empty() ? 0 : uniform_int(rng, 0, o.max_ports);
    for (int i = 0; i < n_in; ++i) {
      iface.inputs.push_back({"i" + std::to_string(i), *feedable_kind(rng, sources)});
    }
    d.inner[ids[b]] = iface;
    for (const auto& p : iface.inputs) {
      std::vector<PortRef> match;
      for (const auto& [ref, kind] : sources) {
        if (kind == p.kind) match.push_back(ref);
      }
      d.wires.push_back({pick(rng, match), PortRef::in(ids[b], p.name)});
    }
  }
  auto all_sources = sources_for(std::nullopt);
  for (const auto& p : outer.outputs) {
    std::vector<PortRef> match;
    for (const auto& [ref, kind] : all_sources) {
      if (kind == p.kind && (o.passthrough || !ref.is_outer())) match.push_back(ref);
    }
    if (match.empty()) {
      // No legal source of this kind: give some box an output that provides one.
      auto& iface = d.inner[ids[0]];
      std::string name = "o" + std::to_string(iface.outputs.size());
      iface.outputs.push_back({name, p.kind});
      match.push_back(PortRef::out(ids[0], name));
    }
    d.wires.push_back({pick(rng, match), PortRef::outer_out(p.name)});
  }
  std::shuffle(d.wires.begin(), d.wires.end(), rng);
  return d;
}

// Nested tree; each box gets a body with probability `p_body` while depth
// remains. Child diagrams use fresh box ids.
inline NestedDiagram random_tree(Rng& rng, const BoxInterface& outer, const GenOptions& o, int depth,
                                 double p_body = 0.5) {
  NestedDiagram t = NestedDiagram::leaf(random_diagram(rng, outer, o));
  if (depth > 0) {
    for (const auto& [id, iface] : t.diagram.inner) {
      if (coin(rng, p_body)) t.set_child(id, random_tree(rng, iface, o, depth - 1, p_body));
    }
  }
  return t;
}

inline Value random_value(Rng& rng, PortKind k) {
  switch (k.kind) {
    case ValueKind::boolean:
      return coin(rng);
    case ValueKind::real:
      return uniform(rng, -1.0, 1.0);
    case ValueKind::real_vector: {
      RealVector v;
      for (int i = 0; i < k.dim; ++i) v.push_back(uniform(rng, -1.0, 1.0));
      return v;
    }
  }
  return false;
}

inline Values random_values(Rng& rng, const std::vector<PortSpec>& ports) {
  Values out;
  for (const auto& p : ports) out.push_back(random_value(rng, p.kind));
  return out;
}

inline double sum_reals(ValuesView vs, const std::vector<double>& coef) {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& v : vs) {
    if (const auto* x = std::get_if<double>(&v)) {
      s += coef[k++ % coef.size()] * *x;
    } else if (const auto* xs = std::get_if<RealVector>(&v)) {
      for (double c : *xs) s += coef[k++ % coef.size()] * c;
    }
  }
  return s;
}

inline bool xor_bools(ValuesView vs) {
  bool b = false;
  for (const auto& v : vs) {
    if (const auto* x = std::get_if<bool>(&v)) b ^= *x;
  }
  return b;
}

// Moore leaf: one state slot per output (read out directly) plus a hidden
// real; updates mix the inputs nonlinearly.
inline MooreSystem random_moore(Rng& rng, const BoxInterface& iface) {
  MooreSystem m;
  m.interface = iface;
  for (const auto& p : iface.outputs) m.state.push_back(random_value(rng, p.kind));
  m.state.push_back(uniform(rng, -1.0, 1.0));
  std::vector<double> coef;
  for (int i = 0; i < 5; ++i) coef.push_back(uniform(rng, -1.0, 1.0));
  bool flip = coin(rng);
  std::size_t n_out = iface.outputs.size();
  m.readout = [n_out](ValuesView s) { return Values(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n_out)); };
  m.update = [coef, flip, n_out](ValuesView s, ValuesView in) {
    double drive = sum_reals(in, coef);
    bool parity = xor_bools(in) ^ flip;
    double hidden = std::get<double>(s[n_out]);
    Values next;
    for (std::size_t j = 0; j < n_out; ++j) {
      const auto& v = s[j];
      if (const auto* b = std::get_if<bool>(&v)) {
        next.emplace_back(static_cast<bool>(*b ^ parity ^ (hidden > 0.0)));
      } else if (const auto* x = std::get_if<double>(&v)) {
        next.emplace_back(std::tanh(0.5 * *x + drive - 0.3 * hidden));
      } else {
        RealVector xs = std::get<RealVector>(v);
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = std::tanh(0.7 * xs[i] + coef[i % coef.size()] * drive);
        next.emplace_back(std::move(xs));
      }
    }
    next.emplace_back(std::tanh(0.9 * hidden + 0.1 * drive + (parity ? 0.2 : -0.2)));
    return next;
  };
  m.passthrough.assign(n_out, std::nullopt);
  return m;
}

inline std::size_t width(const std::vector<PortSpec>& ports) {
  std::size_t n = 0;
  for (const auto& p : ports) n += static_cast<std::size_t>(p.kind.dim);
  return n;
}

// Continuous leaf over real ports: state per output component plus a
// hidden one; field = -x + tanh(mixed inputs).
inline ContinuousSystem random_continuous(Rng& rng, const BoxInterface& iface) {
  ContinuousSystem c;
  c.interface = iface;
  std::size_t n = width(iface.outputs) + 1;
  for (std::size_t i = 0; i < n; ++i) c.state.push_back(uniform(rng, -1.0, 1.0));
  std::vector<double> coef;
  for (int i = 0; i < 7; ++i) coef.push_back(uniform(rng, -1.0, 1.0));
  auto outputs = iface.outputs;
  c.readout = [outputs](std::span<const double> x) {
    Values out;
    std::size_t k = 0;
    for (const auto& p : outputs) {
      if (p.kind.kind == ValueKind::real) {
        out.emplace_back(x[k++]);
      } else {
        out.emplace_back(RealVector(x.begin() + static_cast<std::ptrdiff_t>(k),
                                    x.begin() + static_cast<std::ptrdiff_t>(k) + p.kind.dim));
        k += static_cast<std::size_t>(p.kind.dim);
      }
    }
    return out;
  };
  c.field = [coef, n](std::span<const double> x, ValuesView in) {
    double drive = sum_reals(in, coef);
    std::vector<double> dx(n);
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = -x[i] + std::tanh(coef[i % coef.size()] * drive + 0.5 * x[(i + 1) % n]);
    }
    return dx;
  };
  c.passthrough.assign(iface.outputs.size(), std::nullopt);
  return c;
}

inline double max_abs_gap(const SimTrace& a, const SimTrace& b) {
  double gap = 0.0;
  for (std::size_t r = 0; r < a.rows.size() && r < b.rows.size(); ++r) {
    for (std::size_t j = 0; j < a.rows[r].size(); ++j) {
      const auto& x = a.rows[r][j];
      const auto& y = b.rows[r][j];
      if (const auto* u = std::get_if<double>(&x)) {
        gap = std::max(gap, std::abs(*u - std::get<double>(y)));
      } else if (const auto* us = std::get_if<RealVector>(&x)) {
        const auto& vs = std::get<RealVector>(y);
        for (std::size_t i = 0; i < us->size(); ++i) gap = std::max(gap, std::abs((*us)[i] - vs[i]));
      } else if (x != y) {
        return INFINITY;
      }
    }
  }
  return gap;
}

// A flat DAG of learner units with peer wiring: unit k draws its inputs
// from outer inputs and earlier units.
inline DiagramNet random_unit_dag(Rng& rng, int n_in, int n_units, int n_out,
                                  const std::vector<Activation>& acts) {
  WiringDiagram d;
  for (int i = 0; i < n_in; ++i) d.outer.inputs.push_back({"x" + std::to_string(i), PortKind::real()});
  for (int i = 0; i < n_out; ++i) d.outer.outputs.push_back({"y" + std::to_string(i), PortKind::real()});
  std::map<std::string, LearnerUnit> units;
  std::vector<PortRef> sources;
  for (int i = 0; i < n_in; ++i) sources.push_back(PortRef::outer_in("x" + std::to_string(i)));
  for (int u = 0; u < n_units; ++u) {
    std::string id = "u" + std::to_string(u);
    int k = uniform_int(rng, 1, 3);
    LearnerUnit unit;
    unit.act = pick(rng, acts);
    unit.b = uniform(rng, -0.5, 0.5);
    for (int i = 0; i < k; ++i) {
      unit.w.push_back(uniform(rng, -1.0, 1.0));
      d.wires.push_back({pick(rng, sources), PortRef::in(id, unit_input_name(static_cast<std::size_t>(i)))});
    }
    d.inner[id] = unit.interface();
    units[id] = unit;
    sources.push_back(PortRef::out(id, std::string(kUnitOutput)));
  }
  for (int i = 0; i < n_out; ++i) {
    // Prefer the later units so that most of the net matters.
    std::size_t lo = sources.size() > 2 ? sources.size() - 2 : 0;
    std::size_t j = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(lo), static_cast<int>(sources.size()) - 1));
    d.wires.push_back({sources[j], PortRef::outer_out("y" + std::to_string(i))});
  }
  return DiagramNet(NestedDiagram::leaf(d), units);
}

// Relative error with a floor on the scale so that values near zero are
// compared absolutely.
inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}


struct SoftNet {
  BoxInterface outer;
  std::map<std::string, LearnerUnit> units;
  std::vector<std::string> order;  // creation order, which is topological
  SoftWiring wiring;
};

// Units u0..u{n-1}; every input and outer output gets 1..3 distinct
// candidates drawn from the outer inputs and the earlier units.
inline SoftNet random_soft_net(Rng& rng, int n_in, int n_units, int n_out, const std::vector<Activation>& acts) {
  SoftNet s;
  for (int i = 0; i < n_in; ++i) s.outer.inputs.push_back({"x" + std::to_string(i), PortKind::real()});
  for (int i = 0; i < n_out; ++i) s.outer.outputs.push_back({"y" + std::to_string(i), PortKind::real()});
  std::vector<PortRef> sources;
  for (int i = 0; i < n_in; ++i) sources.push_back(PortRef::outer_in("x" + std::to_string(i)));
  auto candidates = [&] {
    auto pool = sources;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(uniform_int(rng, 1, 3))));
    std::vector<Candidate> out;
    for (auto& p : pool) out.push_back({p, uniform(rng, -2.0, 2.0), uniform(rng, 0.5, 1.5)});
    return out;
  };
  for (int u = 0; u < n_units; ++u) {
    std::string id = "u" + std::to_string(u);
    LearnerUnit unit;
    unit.act = pick(rng, acts);
    unit.b = uniform(rng, -0.5, 0.5);
    int k = uniform_int(rng, 1, 3);
    for (int i = 0; i < k; ++i) {
      unit.w.push_back(uniform(rng, -1.0, 1.0));
      s.wiring.destinations.push_back({PortRef::in(id, unit_input_name(static_cast<std::size_t>(i))), candidates()});
    }
    s.units[id] = unit;
    s.order.push_back(id);
    sources.push_back(PortRef::out(id, std::string(kUnitOutput)));
  }
  for (int i = 0; i < n_out; ++i) {
    s.wiring.destinations.push_back({PortRef::outer_out("y" + std::to_string(i)), candidates()});
  }
  return s;
}

inline DilsNetwork build_soft(const SoftNet& s) { return DilsNetwork(s.outer, s.units, s.wiring); }

inline NestedDiagram normalized(NestedDiagram t) {
  normalize(t.diagram);
  for (auto& c : t.children) c.tree = normalized(c.tree);
  return t;
}

inline std::optional<PortKind> dest_kind(const WiringDiagram& d, const PortRef& r) {
  const auto& ports = r.is_outer() ? d.outer.outputs : d.inner.at(r.box).inputs;
  for (const auto& p : ports) {
    if (p.name == r.port) return p.kind;
  }
  return std::nullopt;
}

inline Param random_param(Rng& rng, int depth) {
  switch (uniform_int(rng, 0, depth > 0 ? 2 : 1)) {
    case 0: {
      std::vector<double> pool{0.0, -0.0, 1.0, -2.5, 0.1, 1e-7, 3.5e12, 1.0 / 3.0, -123456789.0};
      double x = coin(rng) ? pick(rng, pool) : uniform(rng, -100.0, 100.0);
      return Param::of(x);
    }
    case 1:
      return Param::of_word(pick(rng, std::vector<std::string>{"tanh", "true", "false", "NAND", "delay"}));
    default: {
      std::vector<Param> items;
      int n = uniform_int(rng, 0, 3);
      for (int i = 0; i < n; ++i) items.push_back(random_param(rng, depth - 1));
      return Param::of_list(std::move(items));
    }
  }
}

inline Attachment random_attachment(Rng& rng) {
  Attachment a;
  a.family = pick(rng, std::vector<std::string>{"unit", "gate", "moore", "ode"});
  if (coin(rng)) a.variant = pick(rng, std::vector<std::string>{"NAND", "linear", "delay"});
  int n = uniform_int(rng, 0, 3);
  for (int i = 0; i < n; ++i) {
    a.params[pick(rng, std::vector<std::string>{"w", "b", "act", "init", "A", "x0"})] = random_param(rng, 2);
  }
  return a;
}

// A random tree with random attachments on some leaves and, sometimes,
// candidate lists replacing the hard feed of a few root destinations.
inline Document random_document(Rng& rng) {
  GenOptions o;
  o.max_boxes = 3;
  Document doc;
  doc.tree = normalized(random_tree(rng, random_interface(rng, o), o, 2, 0.4));
  for (const auto& [path, iface] : leaf_interfaces(doc.tree)) {
    if (coin(rng, 0.6)) doc.attachments[path] = random_attachment(rng);
  }
  if (coin(rng)) {
    auto& d = doc.tree.diagram;
    std::vector<std::pair<PortRef, PortKind>> sources;
    for (const auto& p : d.outer.inputs) sources.push_back({PortRef::outer_in(p.name), p.kind});
    for (const auto& [id, iface] : d.inner) {
      for (const auto& p : iface.outputs) sources.push_back({PortRef::out(id, p.name), p.kind});
    }
    std::vector<Wire> kept;
    for (const auto& w : d.wires) {
      std::vector<PortRef> match;
      auto kind = dest_kind(d, w.dest);
      for (const auto& [ref, k] : sources) {
        if (kind && k == *kind) match.push_back(ref);
      }
      if (!coin(rng, 0.3) || match.empty()) {
        kept.push_back(w);
        continue;
      }
      std::shuffle(match.begin(), match.end(), rng);
      match.resize(std::min<std::size_t>(match.size(), static_cast<std::size_t>(uniform_int(rng, 1, 3))));
      SoftDestination sd{w.dest, {}};
      for (const auto& m : match) sd.candidates.push_back({m, uniform(rng, -3.0, 3.0), uniform(rng, 0.0, 2.0)});
      doc.candidates.destinations.push_back(std::move(sd));
    }
    d.wires = kept;
    std::sort(doc.candidates.destinations.begin(), doc.candidates.destinations.end(),
              [](const SoftDestination& a, const SoftDestination& b) { return a.dest < b.dest; });
  }
  return doc;
}

}  // namespace testkit
