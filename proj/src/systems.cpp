#include <algorithm>

#include "dilskit/dsl.hpp"

namespace dilskit {

namespace {

[[noreturn]] void bad(const std::string& what) { throw ShapeError(what); }

const Param* find_param(const Attachment& a, const std::string& key) {
  auto it = a.params.find(key);
  return it == a.params.end() ? nullptr : &it->second;
}

double as_number(const Param& p, const std::string& key) {
  if (p.type != Param::Type::number) bad("parameter '" + key + "' must be a number");
  return p.number;
}

std::vector<double> as_vector(const Param& p, const std::string& key) {
  if (p.type != Param::Type::list) bad("parameter '" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : p.items) out.push_back(as_number(x, key));
  return out;
}

using Matrix = std::vector<std::vector<double>>;

Matrix as_matrix(const Param& p, const std::string& key, std::size_t rows, std::size_t cols) {
  if (p.type != Param::Type::list || p.items.size() != rows) {
    bad("parameter '" + key + "' must have " + std::to_string(rows) + " rows");
  }
  Matrix m;
  for (const auto& row : p.items) {
    m.push_back(as_vector(row, key));
    if (m.back().size() != cols) {
      bad("parameter '" + key + "' rows must have " + std::to_string(cols) + " entries");
    }
  }
  return m;
}

bool as_flag(const Param& p, const std::string& key) {
  if (p.type == Param::Type::word && (p.word == "true" || p.word == "false")) return p.word == "true";
  if (p.type == Param::Type::number && (p.number == 0.0 || p.number == 1.0)) return p.number == 1.0;
  bad("parameter '" + key + "' must be true or false");
}

void only_params(const Attachment& a, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : a.params) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* s) { return k == s; })) {
      bad("unknown parameter '" + k + "' for " + a.family + (a.variant.empty() ? "" : " " + a.variant));
    }
  }
}

Value param_value(const Param& p, PortKind kind, const std::string& key) {
  switch (kind.kind) {
    case ValueKind::boolean:
      return as_flag(p, key);
    case ValueKind::real:
      return as_number(p, key);
    case ValueKind::real_vector: {
      auto v = as_vector(p, key);
      if (v.size() != static_cast<std::size_t>(kind.dim)) {
        bad("parameter '" + key + "' must have " + std::to_string(kind.dim) + " entries");
      }
      return v;
    }
  }
  return 0.0;
}

std::size_t width(const std::vector<PortSpec>& ports) {
  std::size_t n = 0;
  for (const auto& p : ports) {
    if (p.kind.kind == ValueKind::boolean) bad("linear systems need real ports, '" + p.name + "' is bool");
    n += static_cast<std::size_t>(p.kind.dim);
  }
  return n;
}

std::vector<double> components(ValuesView vs) {
  std::vector<double> out;
  for (const auto& v : vs) {
    if (const auto* x = std::get_if<double>(&v)) {
      out.push_back(*x);
    } else if (const auto* xs = std::get_if<RealVector>(&v)) {
      out.insert(out.end(), xs->begin(), xs->end());
    }
  }
  return out;
}

Values split(const std::vector<double>& flat, const std::vector<PortSpec>& ports) {
  Values out;
  std::size_t k = 0;
  for (const auto& p : ports) {
    if (p.kind.kind == ValueKind::real) {
      out.emplace_back(flat[k++]);
    } else {
      out.emplace_back(RealVector(flat.begin() + static_cast<std::ptrdiff_t>(k),
                                  flat.begin() + static_cast<std::ptrdiff_t>(k) + p.kind.dim));
      k += static_cast<std::size_t>(p.kind.dim);
    }
  }
  return out;
}

std::vector<double> mat_vec(const Matrix& m, std::span<const double> x) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += m[i][j] * x[j];
  }
  return out;
}

// x' = A x + B u (next state or derivative), y = C x.
struct Linear {
  Matrix A, B, C;
  std::vector<double> x0;
};

Linear linear_params(const Attachment& a, const BoxInterface& iface) {
  only_params(a, {"A", "B", "C", "x0"});
  const Param* pa = find_param(a, "A");
  if (!pa || pa->type != Param::Type::list) bad("linear systems need a square matrix A");
  std::size_t n = pa->items.size(), m = width(iface.inputs), p = width(iface.outputs);
  Linear lin;
  lin.A = as_matrix(*pa, "A", n, n);
  if (const Param* pb = find_param(a, "B")) {
    lin.B = as_matrix(*pb, "B", n, m);
  } else {
    lin.B.assign(n, std::vector<double>(m, 0.0));
  }
  if (const Param* pc = find_param(a, "C")) {
    lin.C = as_matrix(*pc, "C", p, n);
  } else if (p == n) {
    lin.C.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) lin.C[i][i] = 1.0;
  } else {
    bad("matrix C is required when outputs and state differ in size");
  }
  if (const Param* px = find_param(a, "x0")) {
    lin.x0 = as_vector(*px, "x0");
    if (lin.x0.size() != n) bad("x0 must have " + std::to_string(n) + " entries");
  } else {
    lin.x0.assign(n, 0.0);
  }
  return lin;
}

std::string where(const std::string& path) { return "box '" + path + "': "; }

template <class System, class Make>
std::map<std::string, System> leaves_of(const Document& doc, Make make) {
  std::map<std::string, System> out;
  for (const auto& [path, iface] : leaf_interfaces(doc.tree)) {
    auto it = doc.attachments.find(path);
    if (it == doc.attachments.end()) bad(where(path) + "no attachment");
    try {
      out.emplace(path, make(it->second, iface));
    } catch (const ShapeError& e) {
      bad(where(path) + e.what());
    } catch (const UnknownName& e) {
      throw UnknownName(where(path) + e.what());
    }
  }
  return out;
}

}  // namespace

Attachment unit_attachment(const LearnerUnit& u) {
  Attachment a;
  a.family = "unit";
  a.params["act"] = Param::of_word(std::string(to_string(u.act)));
  a.params["b"] = Param::of(u.b);
  std::vector<Param> w;
  for (double x : u.w) w.push_back(Param::of(x));
  a.params["w"] = Param::of_list(std::move(w));
  if (!u.trainable) a.params["trainable"] = Param::of_word("false");
  return a;
}

LearnerUnit make_unit(const Attachment& a, const BoxInterface& iface) {
  if (a.family != "unit" || !a.variant.empty()) bad("expected a unit attachment");
  only_params(a, {"act", "b", "w", "trainable"});
  LearnerUnit u;
  const Param* w = find_param(a, "w");
  if (!w) bad("unit needs weights 'w'");
  u.w = as_vector(*w, "w");
  if (iface != unit_interface(u.w.size())) {
    bad("unit with " + std::to_string(u.w.size()) + " weights needs interface " +
        to_string(unit_interface(u.w.size())) + ", got " + to_string(iface));
  }
  if (const Param* b = find_param(a, "b")) u.b = as_number(*b, "b");
  if (const Param* act = find_param(a, "act")) {
    if (act->type != Param::Type::word) bad("parameter 'act' must be a word");
    u.act = parse_activation(act->word);
  }
  if (const Param* t = find_param(a, "trainable")) u.trainable = as_flag(*t, "trainable");
  return u;
}

CombinationalSystem make_combinational(const Attachment& a, const BoxInterface& iface) {
  if (a.family == "gate") {
    if (!a.params.empty()) bad("gates take no parameters");
    CombinationalSystem g = gate(a.variant);
    if (g.interface != iface) {
      bad("gate " + a.variant + " needs interface " + to_string(g.interface) + ", got " +
          to_string(iface));
    }
    return g;
  }
  if (a.family == "unit") {
    LearnerUnit u = make_unit(a, iface);
    return {iface, [u](ValuesView in) {
              std::vector<double> x;
              for (const auto& v : in) x.push_back(std::get<double>(v));
              return Values{activate(u.act, u.pre_activation(x))};
            }};
  }
  bad("'" + a.family + "' is not a combinational family");
}

MooreSystem make_moore(const Attachment& a, const BoxInterface& iface) {
  if (a.family != "moore") bad("'" + a.family + "' is not a Moore family");
  if (a.variant == "delay" || a.variant == "not_delay") {
    only_params(a, {"init"});
    if (iface.inputs.size() != 1 || iface.outputs.size() != 1 ||
        iface.inputs[0].kind != iface.outputs[0].kind) {
      bad(a.variant + " needs one input and one output of the same kind");
    }
    PortKind kind = iface.inputs[0].kind;
    bool negate = a.variant == "not_delay";
    if (negate && kind != PortKind::boolean()) bad("not_delay needs bool ports");
    const Param* init = find_param(a, "init");
    Value x0 = init ? param_value(*init, kind, "init") : zero_value(kind);
    MooreSystem m;
    m.interface = iface;
    m.state = {x0};
    m.readout = [](ValuesView s) { return Values(s.begin(), s.end()); };
    m.update = [negate](ValuesView, ValuesView in) {
      if (negate) return Values{!std::get<bool>(in[0])};
      return Values{in[0]};
    };
    m.passthrough.assign(1, std::nullopt);
    return m;
  }
  if (a.variant == "linear") {
    Linear lin = linear_params(a, iface);
    MooreSystem m;
    m.interface = iface;
    for (double x : lin.x0) m.state.emplace_back(x);
    auto outputs = iface.outputs;
    m.readout = [lin, outputs](ValuesView s) {
      return split(mat_vec(lin.C, components(s)), outputs);
    };
    m.update = [lin](ValuesView s, ValuesView in) {
      auto x = components(s), u = components(in);
      auto ax = mat_vec(lin.A, x), bu = mat_vec(lin.B, u);
      Values next;
      for (std::size_t i = 0; i < ax.size(); ++i) next.emplace_back(ax[i] + bu[i]);
      return next;
    };
    m.passthrough.assign(iface.outputs.size(), std::nullopt);
    return m;
  }
  throw UnknownName("unknown Moore variant '" + a.variant + "'");
}

ContinuousSystem make_continuous(const Attachment& a, const BoxInterface& iface) {
  if (a.family != "ode") bad("'" + a.family + "' is not a continuous family");
  if (a.variant != "linear") throw UnknownName("unknown ode variant '" + a.variant + "'");
  Linear lin = linear_params(a, iface);
  ContinuousSystem c;
  c.interface = iface;
  c.state = lin.x0;
  auto outputs = iface.outputs;
  c.readout = [lin, outputs](std::span<const double> x) { return split(mat_vec(lin.C, x), outputs); };
  c.field = [lin](std::span<const double> x, ValuesView in) {
    auto u = components(in);
    auto ax = mat_vec(lin.A, x), bu = mat_vec(lin.B, u);
    for (std::size_t i = 0; i < ax.size(); ++i) ax[i] += bu[i];
    return ax;
  };
  c.passthrough.assign(iface.outputs.size(), std::nullopt);
  return c;
}

SystemKind system_kind(const Document& doc) {
  std::optional<SystemKind> kind;
  for (const auto& [path, iface] : leaf_interfaces(doc.tree)) {
    auto it = doc.attachments.find(path);
    if (it == doc.attachments.end()) bad(where(path) + "no attachment");
    const auto& family = it->second.family;
    SystemKind k;
    if (family == "gate" || family == "unit") {
      k = SystemKind::combinational;
    } else if (family == "moore") {
      k = SystemKind::moore;
    } else if (family == "ode") {
      k = SystemKind::continuous;
    } else {
      bad(where(path) + "unknown attachment family '" + family + "'");
    }
    if (kind && *kind != k) bad(where(path) + "attachment families of different regimes are mixed");
    kind = k;
  }
  // A diagram without boxes has pure pass-through behaviour.
  return kind.value_or(SystemKind::combinational);
}

CombinationalSystem build_combinational(const Document& doc) {
  return compose_nested(doc.tree, leaves_of<CombinationalSystem>(doc, make_combinational));
}

MooreSystem build_moore(const Document& doc) {
  return compose_nested(doc.tree, leaves_of<MooreSystem>(doc, make_moore));
}

ContinuousSystem build_continuous(const Document& doc) {
  return compose_nested(doc.tree, leaves_of<ContinuousSystem>(doc, make_continuous));
}

Document from_diagram(const WiringDiagram& d) {
  Document doc;
  doc.tree = NestedDiagram::leaf(d);
  return doc;
}

DiagramNet to_diagram_net(const Document& doc) {
  if (!doc.candidates.destinations.empty()) bad("document has candidates; it describes a soft-wired network");
  return DiagramNet(doc.tree, leaves_of<LearnerUnit>(doc, make_unit));
}

Document from_diagram_net(const DiagramNet& net) {
  Document doc;
  doc.tree = net.tree();
  for (const auto& [id, u] : net.units()) doc.attachments[id] = unit_attachment(u);
  return doc;
}

DilsNetwork to_dils_network(const Document& doc) {
  if (doc.candidates.destinations.empty()) return from_dnn(to_diagram_net(doc));
  if (!doc.tree.children.empty()) bad("soft-wired networks must be flat");
  auto units = leaves_of<LearnerUnit>(doc, make_unit);
  SoftWiring wiring = doc.candidates;
  for (const auto& w : doc.tree.diagram.wires) {
    wiring.destinations.push_back({w.dest, {{w.source, kEmbeddedLogit, 1.0}}});
  }
  std::stable_sort(wiring.destinations.begin(), wiring.destinations.end(),
                   [](const SoftDestination& a, const SoftDestination& b) { return a.dest < b.dest; });
  return DilsNetwork(doc.tree.diagram.outer, std::move(units), std::move(wiring));
}

Document from_dils_network(const DilsNetwork& n) {
  Document doc;
  doc.tree.diagram.outer = n.outer();
  for (const auto& [id, u] : n.units()) {
    doc.tree.diagram.inner[id] = u.interface();
    doc.attachments[id] = unit_attachment(u);
  }
  for (const auto& dest : n.wiring().destinations) {
    const auto& cs = dest.candidates;
    if (cs.size() == 1 && cs[0].logit == kEmbeddedLogit && cs[0].gain == 1.0) {
      doc.tree.diagram.wires.push_back({cs[0].source, dest.dest});
    } else {
      doc.candidates.destinations.push_back(dest);
    }
  }
  normalize(doc.tree.diagram);
  return doc;
}

}  // namespace dilskit
