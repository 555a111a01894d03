#include <string>

#include "dilskit/dynamics.hpp"
#include "dilskit/error.hpp"

namespace dilskit {

BoxInterface gate_interface(std::string_view name) {
  auto b = PortKind::boolean();
  if (name == "NOT") return {{{"a", b}}, {{"y", b}}};
  if (name == "NAND" || name == "AND" || name == "OR" || name == "XOR") {
    return {{{"a", b}, {"b", b}}, {{"y", b}}};
  }
  throw UnknownName("unknown gate '" + std::string(name) + "'");
}

CombinationalSystem gate(std::string_view name) {
  CombinationalSystem g;
  g.interface = gate_interface(name);
  auto binary = [](bool (*op)(bool, bool)) {
    return [op](ValuesView in) {
      return Values{op(std::get<bool>(in[0]), std::get<bool>(in[1]))};
    };
  };
  if (name == "NOT") {
    g.fn = [](ValuesView in) { return Values{!std::get<bool>(in[0])}; };
  } else if (name == "NAND") {
    g.fn = binary([](bool a, bool b) { return !(a && b); });
  } else if (name == "AND") {
    g.fn = binary([](bool a, bool b) { return a && b; });
  } else if (name == "OR") {
    g.fn = binary([](bool a, bool b) { return a || b; });
  } else {
    g.fn = binary([](bool a, bool b) { return a != b; });
  }
  return g;
}

namespace {

WiringDiagram not_from_nand() {
  WiringDiagram d;
  d.outer = gate_interface("NOT");
  d.inner.emplace("nand", gate_interface("NAND"));
  d.wires = {{PortRef::outer_in("a"), PortRef::in("nand", "a")},
             {PortRef::outer_in("a"), PortRef::in("nand", "b")},
             {PortRef::out("nand", "y"), PortRef::outer_out("y")}};
  normalize(d);
  return d;
}

}  // namespace

WiringDiagram nand_construction(std::string_view name) {
  if (name == "NAND") {
    auto d = identity_diagram(gate_interface("NAND"));
    // Rename the single slot so the box reads as a gate.
    WiringDiagram r;
    r.outer = d.outer;
    r.inner.emplace("nand", d.inner.begin()->second);
    for (auto w : d.wires) {
      if (!w.source.is_outer()) w.source.box = "nand";
      if (!w.dest.is_outer()) w.dest.box = "nand";
      r.wires.push_back(w);
    }
    normalize(r);
    return r;
  }
  if (name == "NOT") return not_from_nand();
  if (name == "AND") {
    WiringDiagram d;
    d.outer = gate_interface("AND");
    d.inner.emplace("nand", gate_interface("NAND"));
    d.inner.emplace("not", gate_interface("NOT"));
    d.wires = {{PortRef::outer_in("a"), PortRef::in("nand", "a")},
               {PortRef::outer_in("b"), PortRef::in("nand", "b")},
               {PortRef::out("nand", "y"), PortRef::in("not", "a")},
               {PortRef::out("not", "y"), PortRef::outer_out("y")}};
    normalize(d);
    return substitute(d, "not", not_from_nand());
  }
  if (name == "OR") {
    // NOT is the intermediate abstraction: OR = NAND(NOT a, NOT b).
    WiringDiagram d;
    d.outer = gate_interface("OR");
    d.inner.emplace("not_a", gate_interface("NOT"));
    d.inner.emplace("not_b", gate_interface("NOT"));
    d.inner.emplace("nand", gate_interface("NAND"));
    d.wires = {{PortRef::outer_in("a"), PortRef::in("not_a", "a")},
               {PortRef::outer_in("b"), PortRef::in("not_b", "a")},
               {PortRef::out("not_a", "y"), PortRef::in("nand", "a")},
               {PortRef::out("not_b", "y"), PortRef::in("nand", "b")},
               {PortRef::out("nand", "y"), PortRef::outer_out("y")}};
    normalize(d);
    auto once = substitute(d, "not_a", not_from_nand());
    return substitute(once, "not_b", not_from_nand());
  }
  if (name == "XOR") {
    WiringDiagram d;
    d.outer = gate_interface("XOR");
    for (const char* id : {"n1", "n2", "n3", "n4"}) d.inner.emplace(id, gate_interface("NAND"));
    d.wires = {{PortRef::outer_in("a"), PortRef::in("n1", "a")},
               {PortRef::outer_in("b"), PortRef::in("n1", "b")},
               {PortRef::outer_in("a"), PortRef::in("n2", "a")},
               {PortRef::out("n1", "y"), PortRef::in("n2", "b")},
               {PortRef::out("n1", "y"), PortRef::in("n3", "a")},
               {PortRef::outer_in("b"), PortRef::in("n3", "b")},
               {PortRef::out("n2", "y"), PortRef::in("n4", "a")},
               {PortRef::out("n3", "y"), PortRef::in("n4", "b")},
               {PortRef::out("n4", "y"), PortRef::outer_out("y")}};
    normalize(d);
    return d;
  }
  throw UnknownName("unknown gate '" + std::string(name) + "'");
}

}  // namespace dilskit
