#include "dilskit/diagram.hpp"

#include <algorithm>
#include <set>

#include "dilskit/error.hpp"

namespace dilskit {

std::string to_string(PortKind kind) {
  switch (kind.kind) {
    case ValueKind::boolean:
      return "bool";
    case ValueKind::real:
      return "real";
    case ValueKind::real_vector:
      return "real[" + std::to_string(kind.dim) + "]";
  }
  return "?";
}

namespace {

std::optional<std::size_t> find_port(const std::vector<PortSpec>& side, std::string_view name) {
  for (std::size_t i = 0; i < side.size(); ++i) {
    if (side[i].name == name) return i;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> BoxInterface::input_index(std::string_view name) const {
  return find_port(inputs, name);
}

std::optional<std::size_t> BoxInterface::output_index(std::string_view name) const {
  return find_port(outputs, name);
}

std::string to_string(const BoxInterface& iface) {
  std::string s = "{";
  for (const auto& p : iface.inputs) s += " in " + p.name + ": " + to_string(p.kind) + ";";
  for (const auto& p : iface.outputs) s += " out " + p.name + ": " + to_string(p.kind) + ";";
  if (!s.empty() && s.back() == ';') s.pop_back();
  return s + " }";
}

std::string to_string(const PortRef& ref) {
  return (ref.is_outer() ? std::string(kOuter) : ref.box) + "." + ref.port;
}

std::string to_string(const Wire& wire) {
  return to_string(wire.source) + " -> " + to_string(wire.dest);
}

bool wire_order(const Wire& a, const Wire& b) {
  auto da = to_string(a.dest), db = to_string(b.dest);
  if (da != db) return da < db;
  auto sa = to_string(a.source), sb = to_string(b.source);
  if (sa != sb) return sa < sb;
  return a < b;
}

void normalize(WiringDiagram& d) { std::stable_sort(d.wires.begin(), d.wires.end(), wire_order); }

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::empty_name:
      return "empty-name";
    case Rule::duplicate_port:
      return "duplicate-port";
    case Rule::bad_dimension:
      return "bad-dimension";
    case Rule::reserved_box_id:
      return "reserved-box-id";
    case Rule::illegal_direction:
      return "illegal-direction";
    case Rule::unknown_box:
      return "unknown-box";
    case Rule::unknown_port:
      return "unknown-port";
    case Rule::kind_mismatch:
      return "kind-mismatch";
    case Rule::multiple_feeds:
      return "multiple-feeds";
    case Rule::missing_feed:
      return "missing-feed";
  }
  return "?";
}

namespace {

void check_interface(const BoxInterface& iface, const std::string& owner,
                     std::vector<Violation>& out) {
  auto check_side = [&](const std::vector<PortSpec>& side, const char* side_name) {
    std::set<std::string> seen;
    for (const auto& p : side) {
      if (p.name.empty()) {
        out.push_back({Rule::empty_name, std::nullopt,
                       owner + ": " + side_name + " port with empty name"});
      } else if (!seen.insert(p.name).second) {
        out.push_back({Rule::duplicate_port, std::nullopt,
                       owner + ": duplicate " + side_name + " port '" + p.name + "'"});
      }
      if (p.kind.kind == ValueKind::real_vector ? p.kind.dim < 1 : p.kind.dim != 1) {
        out.push_back({Rule::bad_dimension, std::nullopt,
                       owner + ": port '" + p.name + "' has dimension " +
                           std::to_string(p.kind.dim)});
      }
    }
  };
  check_side(iface.inputs, "input");
  check_side(iface.outputs, "output");
}

// Kind of the port `ref` names, or a violation describing why it does not resolve.
std::optional<PortKind> resolve_kind(const WiringDiagram& d, const PortRef& ref,
                                     std::size_t wire_index, std::vector<Violation>& out) {
  const std::vector<PortSpec>* side = nullptr;
  std::string owner;
  switch (ref.locus) {
    case Locus::outer_input:
      side = &d.outer.inputs;
      owner = "outer inputs";
      break;
    case Locus::outer_output:
      side = &d.outer.outputs;
      owner = "outer outputs";
      break;
    case Locus::inner_input:
    case Locus::inner_output: {
      auto it = d.inner.find(ref.box);
      if (it == d.inner.end()) {
        out.push_back({Rule::unknown_box, wire_index,
                       "wire #" + std::to_string(wire_index) + ": unknown box '" + ref.box + "'"});
        return std::nullopt;
      }
      bool input = ref.locus == Locus::inner_input;
      side = input ? &it->second.inputs : &it->second.outputs;
      owner = "box '" + ref.box + "' " + (input ? "inputs" : "outputs");
      break;
    }
  }
  if (auto i = find_port(*side, ref.port)) return (*side)[*i].kind;
  out.push_back({Rule::unknown_port, wire_index,
                 "wire #" + std::to_string(wire_index) + ": no port '" + ref.port + "' among " +
                     owner});
  return std::nullopt;
}

}  // namespace

ValidationReport validate(const WiringDiagram& d) {
  ValidationReport report;
  auto& out = report.violations;

  check_interface(d.outer, "outer", out);
  for (const auto& [id, iface] : d.inner) {
    if (id.empty()) out.push_back({Rule::empty_name, std::nullopt, "inner box with empty id"});
    if (id == kOuter) {
      out.push_back({Rule::reserved_box_id, std::nullopt, "box id 'outer' is reserved"});
    }
    check_interface(iface, "box '" + id + "'", out);
  }

  // dest -> indices of wires feeding it
  std::map<PortRef, std::vector<std::size_t>> feeds;
  for (std::size_t i = 0; i < d.wires.size(); ++i) {
    const auto& w = d.wires[i];
    auto label = "wire #" + std::to_string(i) + " (" + to_string(w) + ")";
    bool src_ok = w.source.locus == Locus::outer_input || w.source.locus == Locus::inner_output;
    bool dst_ok = w.dest.locus == Locus::inner_input || w.dest.locus == Locus::outer_output;
    if (!src_ok || !dst_ok) {
      out.push_back({Rule::illegal_direction, i,
                     label + ": " + (!src_ok ? "source" : "destination") +
                         " is on the wrong side of its box"});
      continue;
    }
    auto sk = resolve_kind(d, w.source, i, out);
    auto dk = resolve_kind(d, w.dest, i, out);
    if (dk) feeds[w.dest].push_back(i);
    if (sk && dk && *sk != *dk) {
      out.push_back({Rule::kind_mismatch, i,
                     label + ": " + to_string(*sk) + " source feeds " + to_string(*dk) +
                         " destination"});
    }
  }

  auto check_feed = [&](const PortRef& dest) {
    auto it = feeds.find(dest);
    if (it == feeds.end()) {
      out.push_back(
          {Rule::missing_feed, std::nullopt, to_string(dest) + ": not fed by any wire", dest});
    } else if (it->second.size() > 1) {
      std::string list;
      for (auto i : it->second) list += (list.empty() ? "#" : ", #") + std::to_string(i);
      out.push_back({Rule::multiple_feeds, it->second[1],
                     to_string(dest) + ": multiple feeds (wires " + list + ")", dest});
    }
  };
  for (const auto& [id, iface] : d.inner) {
    for (const auto& p : iface.inputs) check_feed(PortRef::in(id, p.name));
  }
  for (const auto& p : d.outer.outputs) check_feed(PortRef::outer_out(p.name));
  return report;
}

void require_valid(const WiringDiagram& d, std::string_view what) {
  auto report = validate(d);
  if (report.ok()) return;
  std::vector<std::string> details;
  for (const auto& v : report.violations) details.push_back(v.message);
  std::string message = std::string(what) + " is not a valid diagram: " + details.front();
  throw InvalidDiagram(message, std::move(details));
}

WiringDiagram identity_diagram(const BoxInterface& iface) {
  WiringDiagram d;
  d.outer = iface;
  std::string slot(kIdentitySlot);
  d.inner.emplace(slot, iface);
  for (const auto& p : iface.inputs) {
    d.wires.push_back({PortRef::outer_in(p.name), PortRef::in(slot, p.name)});
  }
  for (const auto& p : iface.outputs) {
    d.wires.push_back({PortRef::out(slot, p.name), PortRef::outer_out(p.name)});
  }
  normalize(d);
  return d;
}

namespace {

void check_same_interface(const BoxInterface& expected, const BoxInterface& got,
                          std::string_view slot) {
  auto compare_side = [&](const std::vector<PortSpec>& e, const std::vector<PortSpec>& g,
                          const char* side) {
    for (std::size_t i = 0; i < std::max(e.size(), g.size()); ++i) {
      auto prefix = "interface mismatch at slot '" + std::string(slot) + "', " + side + " port #" +
                    std::to_string(i) + ": ";
      if (i >= g.size()) throw CompositionError(prefix + "guest lacks '" + e[i].name + "'");
      if (i >= e.size()) throw CompositionError(prefix + "guest has extra '" + g[i].name + "'");
      if (e[i] != g[i]) {
        throw CompositionError(prefix + "expected '" + e[i].name + "': " + to_string(e[i].kind) +
                               ", got '" + g[i].name + "': " + to_string(g[i].kind));
      }
    }
  };
  compare_side(expected.inputs, got.inputs, "input");
  compare_side(expected.outputs, got.outputs, "output");
}

std::map<PortRef, PortRef> feed_map(const WiringDiagram& d) {
  std::map<PortRef, PortRef> m;
  for (const auto& w : d.wires) m.emplace(w.dest, w.source);
  return m;
}

}  // namespace

WiringDiagram substitute(const WiringDiagram& host, std::string_view slot,
                         const WiringDiagram& guest) {
  auto slot_it = host.inner.find(std::string(slot));
  if (slot_it == host.inner.end()) {
    throw CompositionError("unknown slot '" + std::string(slot) + "'");
  }
  require_valid(host, "host");
  require_valid(guest, "guest");
  check_same_interface(slot_it->second, guest.outer, slot);

  const std::string slot_id(slot);
  const std::string prefix = slot_id + "/";

  WiringDiagram result;
  result.outer = host.outer;
  for (const auto& [id, iface] : host.inner) {
    if (id != slot_id) result.inner.emplace(id, iface);
  }
  for (const auto& [id, iface] : guest.inner) {
    if (!result.inner.emplace(prefix + id, iface).second) {
      throw CompositionError("box id collision on '" + prefix + id + "'");
    }
  }

  const auto host_feed = feed_map(host);
  const auto guest_feed = feed_map(guest);

  // Follows a source through the slot boundary until it lands on a real
  // source in the result. Each hop through the slot consumes one slot output;
  // revisiting one means the loop is made only of pass-through wires.
  auto resolve = [&](PortRef src, bool in_guest) {
    std::set<std::string> visited;
    while (true) {
      if (in_guest) {
        if (src.locus == Locus::inner_output) return PortRef::out(prefix + src.box, src.port);
        src = host_feed.at(PortRef::in(slot_id, src.port));
        in_guest = false;
      } else {
        if (src.locus != Locus::inner_output || src.box != slot_id) return src;
        if (!visited.insert(src.port).second) {
          throw CompositionError("substituting into '" + slot_id +
                                 "' closes a loop of pass-through wires at output '" + src.port +
                                 "'");
        }
        src = guest_feed.at(PortRef::outer_out(src.port));
        in_guest = true;
      }
    }
  };

  // Loops are rejected even when nothing reads them, so that the outcome
  // does not depend on the order in which a tree is flattened.
  for (const auto& p : guest.outer.outputs) resolve(PortRef::out(slot_id, p.name), false);

  for (const auto& w : host.wires) {
    if (w.dest.locus == Locus::inner_input && w.dest.box == slot_id) continue;
    result.wires.push_back({resolve(w.source, false), w.dest});
  }
  for (const auto& w : guest.wires) {
    if (w.dest.locus != Locus::inner_input) continue;
    result.wires.push_back({resolve(w.source, true), PortRef::in(prefix + w.dest.box, w.dest.port)});
  }
  normalize(result);
  return result;
}

NestedDiagram NestedDiagram::leaf(WiringDiagram d) { return NestedDiagram{std::move(d), {}}; }

const NestedDiagram* NestedDiagram::child(std::string_view slot) const {
  for (const auto& c : children) {
    if (c.slot == slot) return &c.tree;
  }
  return nullptr;
}

void NestedDiagram::set_child(std::string slot, NestedDiagram tree) {
  auto it = std::lower_bound(children.begin(), children.end(), slot,
                             [](const NestedChild& c, const std::string& s) { return c.slot < s; });
  if (it != children.end() && it->slot == slot) {
    it->tree = std::move(tree);
  } else {
    children.insert(it, NestedChild{std::move(slot), std::move(tree)});
  }
}

bool operator==(const NestedDiagram& a, const NestedDiagram& b) {
  return a.diagram == b.diagram && a.children == b.children;
}

WiringDiagram flatten(const NestedDiagram& tree) {
  WiringDiagram d = tree.diagram;
  for (const auto& c : tree.children) {
    if (!tree.diagram.inner.count(c.slot)) {
      throw CompositionError("at '" + c.slot + "': no such box in the enclosing diagram");
    }
    try {
      d = substitute(d, c.slot, flatten(c.tree));
    } catch (const CompositionError& e) {
      throw CompositionError("at '" + c.slot + "': " + e.what());
    } catch (const InvalidDiagram& e) {
      throw InvalidDiagram("at '" + c.slot + "': " + e.what(), e.details());
    }
  }
  return d;
}

namespace {

void collect_leaves(const NestedDiagram& tree, const std::string& prefix,
                    std::map<std::string, BoxInterface>& out) {
  for (const auto& [id, iface] : tree.diagram.inner) {
    if (const auto* c = tree.child(id)) {
      collect_leaves(*c, prefix + id + "/", out);
    } else {
      out.emplace(prefix + id, iface);
    }
  }
}

}  // namespace

std::map<std::string, BoxInterface> leaf_interfaces(const NestedDiagram& tree) {
  std::map<std::string, BoxInterface> out;
  collect_leaves(tree, "", out);
  return out;
}

std::vector<std::string> leaf_paths(const NestedDiagram& tree) {
  std::vector<std::string> out;
  for (const auto& [id, iface] : leaf_interfaces(tree)) out.push_back(id);
  return out;
}

}  // namespace dilskit
