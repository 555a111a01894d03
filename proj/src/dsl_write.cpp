#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "dilskit/dsl.hpp"

namespace dilskit {

namespace {

std::string join_path(const std::string& level, const std::string& id) {
  return level.empty() ? id : level + "/" + id;
}

// Shortest text that reads back to the same double.
std::string number_text(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, end);
}

std::string param_text(const Param& p) {
  switch (p.type) {
    case Param::Type::number:
      return number_text(p.number);
    case Param::Type::word:
      return p.word;
    case Param::Type::list: {
      std::string s = "[";
      for (std::size_t i = 0; i < p.items.size(); ++i) {
        if (i) s += ", ";
        s += param_text(p.items[i]);
      }
      return s + "]";
    }
  }
  return {};
}

std::string attachment_text(const std::string& box, const Attachment& a) {
  std::string s = "attach " + box + " " + a.family;
  if (!a.variant.empty()) s += " " + a.variant;
  if (!a.params.empty()) {
    s += " {";
    bool first = true;
    for (const auto& [k, v] : a.params) {
      s += first ? " " : ", ";
      first = false;
      s += k + ": " + param_text(v);
    }
    s += " }";
  }
  return s;
}

void write_level(std::ostringstream& out, const NestedDiagram& node, const std::string& level,
                 const std::map<std::string, Attachment>& attachments, int indent) {
  std::string pad(static_cast<std::size_t>(indent), ' ');
  for (const auto& [id, iface] : node.diagram.inner) {
    out << pad << "box " << id << ": " << to_string(iface);
    if (const auto* child = node.child(id)) {
      out << " {\n";
      write_level(out, *child, join_path(level, id), attachments, indent + 2);
      out << pad << "}";
    }
    out << "\n";
  }
  auto wires = node.diagram.wires;
  std::stable_sort(wires.begin(), wires.end(), wire_order);
  for (const auto& w : wires) out << pad << "wire " << to_string(w) << "\n";
  for (const auto& [id, iface] : node.diagram.inner) {
    if (node.child(id)) continue;
    auto it = attachments.find(join_path(level, id));
    if (it != attachments.end()) out << pad << attachment_text(id, it->second) << "\n";
  }
}

std::string quoted(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q + "\"";
}

void dot_level(std::ostringstream& out, const NestedDiagram& node, const std::string& level,
               int indent) {
  std::string pad(static_cast<std::size_t>(indent), ' ');
  for (const auto& [id, iface] : node.diagram.inner) {
    std::string path = join_path(level, id);
    if (const auto* child = node.child(id)) {
      out << pad << "subgraph " << quoted("cluster_" + path) << " {\n";
      out << pad << "  label=" << quoted(id) << ";\n";
      dot_level(out, *child, path, indent + 2);
      out << pad << "}\n";
    } else {
      out << pad << quoted(path) << " [label=" << quoted(id) << "];\n";
    }
  }
}

std::string dot_node(const PortRef& r) {
  switch (r.locus) {
    case Locus::outer_input:
      return "in:" + r.port;
    case Locus::outer_output:
      return "out:" + r.port;
    default:
      return r.box;
  }
}

// Rule violations of one level, with spans looked up in the source map.
void check_level(const Document& doc, const NestedDiagram& node, const std::string& level,
                 std::vector<Diagnostic>& out) {
  WiringDiagram d = node.diagram;
  std::size_t hard = d.wires.size();
  std::set<PortRef> hard_dests;
  for (const auto& w : d.wires) hard_dests.insert(w.dest);
  std::vector<std::pair<PortRef, std::size_t>> cand_index;
  if (level.empty()) {
    for (const auto& dest : doc.candidates.destinations) {
      for (std::size_t c = 0; c < dest.candidates.size(); ++c) {
        d.wires.push_back({dest.candidates[c].source, dest.dest});
        cand_index.emplace_back(dest.dest, c);
      }
      if (dest.candidates.empty()) {
        auto span_it = doc.spans.boxes.find("");
        out.push_back({span_it == doc.spans.boxes.end() ? Span{} : span_it->second, level,
                       Rule::missing_feed, to_string(dest.dest) + ": empty candidate list"});
      }
    }
  }

  auto span_of_wire = [&](std::size_t i) -> Span {
    if (i < hard) {
      auto it = doc.spans.wires.find({level, d.wires[i]});
      if (it != doc.spans.wires.end()) return it->second;
    } else {
      auto it = doc.spans.candidates.find(cand_index[i - hard]);
      if (it != doc.spans.candidates.end()) return it->second;
    }
    return {};
  };
  auto span_of_port = [&](const std::optional<PortRef>& p) -> Span {
    std::string key = level;
    if (p && !p->is_outer()) key = join_path(level, p->box);
    auto it = doc.spans.boxes.find(key);
    return it == doc.spans.boxes.end() ? Span{} : it->second;
  };

  for (const auto& v : validate(d).violations) {
    if (v.rule == Rule::multiple_feeds && v.port && !hard_dests.count(*v.port)) {
      continue;  // several candidates for one destination is the point
    }
    std::string message = v.message;
    if (v.rule == Rule::multiple_feeds && v.port && v.wire && *v.wire >= hard) {
      message = to_string(*v.port) + ": fed by both a wire and candidates";
    }
    Span at = v.wire ? span_of_wire(*v.wire) : span_of_port(v.port);
    out.push_back({at, level, v.rule, std::move(message)});
  }
  for (const auto& c : node.children) check_level(doc, c.tree, join_path(level, c.slot), out);
}

}  // namespace

std::vector<Diagnostic> check(const Document& doc) {
  std::vector<Diagnostic> out;
  check_level(doc, doc.tree, "", out);
  std::stable_sort(out.begin(), out.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.span < b.span; });
  return out;
}

std::string format_diagnostic(const Diagnostic& d, std::string_view file) {
  std::string s(file);
  s += ":" + std::to_string(d.span.line) + ":" + std::to_string(d.span.column) + ": ";
  s += std::string(to_string(d.rule)) + ": ";
  if (!d.level.empty()) s += "in " + d.level + ": ";
  return s + d.message;
}

std::string serialize(const Document& doc) {
  std::ostringstream out;
  out << "outer " << to_string(doc.tree.diagram.outer) << "\n";
  write_level(out, doc.tree, "", doc.attachments, 0);
  for (const auto& dest : doc.candidates.destinations) {
    for (const auto& c : dest.candidates) {
      out << "candidate " << to_string(c.source) << " -> " << to_string(dest.dest)
          << " { gain: " << number_text(c.gain) << ", logit: " << number_text(c.logit)
          << " }\n";
    }
  }
  return out.str();
}

std::string serialize(const NestedDiagram& tree) {
  Document doc;
  doc.tree = tree;
  return serialize(doc);
}

std::string serialize(const WiringDiagram& d) { return serialize(NestedDiagram::leaf(d)); }

std::string export_dot(const Document& doc) { return export_dot(doc.tree); }

std::string export_dot(const NestedDiagram& tree) {
  WiringDiagram flat = flatten(tree);
  std::ostringstream out;
  out << "digraph diagram {\n";
  out << "  rankdir=LR;\n";
  out << "  node [shape=box];\n";
  for (const auto& p : flat.outer.inputs) {
    out << "  " << quoted("in:" + p.name) << " [shape=point, xlabel=" << quoted(p.name) << "];\n";
  }
  for (const auto& p : flat.outer.outputs) {
    out << "  " << quoted("out:" + p.name) << " [shape=point, xlabel=" << quoted(p.name)
        << "];\n";
  }
  dot_level(out, tree, "", 2);

  auto wires = flat.wires;
  std::stable_sort(wires.begin(), wires.end(), wire_order);
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> edges;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& w : wires) {
    std::pair key{dot_node(w.source), dot_node(w.dest)};
    auto [it, fresh] = edges.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(w.source.port + " -> " + w.dest.port);
  }
  for (const auto& key : order) {
    std::string label;
    for (const auto& l : edges[key]) label += (label.empty() ? "" : ", ") + l;
    out << "  " << quoted(key.first) << " -> " << quoted(key.second) << " [label=" << quoted(label)
        << "];\n";
  }
  out << "}\n";
  return out.str();
}

Document flatten(const Document& doc) {
  for (const auto& dest : doc.candidates.destinations) {
    for (const auto& c : dest.candidates) {
      if (!c.source.is_outer() && doc.tree.child(c.source.box)) {
        throw ShapeError("candidate source " + to_string(c.source) + " is a composite box");
      }
    }
    if (!dest.dest.is_outer() && doc.tree.child(dest.dest.box)) {
      throw ShapeError("candidate destination " + to_string(dest.dest) + " is a composite box");
    }
  }
  Document out;
  out.tree = NestedDiagram::leaf(flatten(doc.tree));
  normalize(out.tree.diagram);
  out.attachments = doc.attachments;
  out.candidates = doc.candidates;
  return out;
}

}  // namespace dilskit
