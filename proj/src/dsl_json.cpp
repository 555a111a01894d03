#include <json.hpp>

#include "dilskit/dsl.hpp"

namespace dilskit {

using nlohmann::ordered_json;

namespace {

std::string join_path(const std::string& level, const std::string& id) {
  return level.empty() ? id : level + "/" + id;
}

ordered_json port_list(const std::vector<PortSpec>& ports) {
  ordered_json a = ordered_json::array();
  for (const auto& p : ports) a.push_back({{"name", p.name}, {"kind", to_string(p.kind)}});
  return a;
}

ordered_json iface_json(const BoxInterface& iface) {
  return {{"inputs", port_list(iface.inputs)}, {"outputs", port_list(iface.outputs)}};
}

ordered_json param_json(const Param& p) {
  switch (p.type) {
    case Param::Type::number:
      return p.number;
    case Param::Type::word:
      return p.word;
    case Param::Type::list: {
      ordered_json a = ordered_json::array();
      for (const auto& x : p.items) a.push_back(param_json(x));
      return a;
    }
  }
  return nullptr;
}

ordered_json level_json(const NestedDiagram& node, const std::string& level,
                        const std::map<std::string, Attachment>& attachments) {
  ordered_json boxes = ordered_json::array();
  for (const auto& [id, iface] : node.diagram.inner) {
    ordered_json b = {{"id", id}, {"interface", iface_json(iface)}};
    if (const auto* child = node.child(id)) {
      b["body"] = level_json(*child, join_path(level, id), attachments);
    } else if (auto it = attachments.find(join_path(level, id)); it != attachments.end()) {
      ordered_json a = {{"family", it->second.family}};
      if (!it->second.variant.empty()) a["variant"] = it->second.variant;
      ordered_json params = ordered_json::object();
      for (const auto& [k, v] : it->second.params) params[k] = param_json(v);
      a["params"] = params;
      b["attach"] = a;
    }
    boxes.push_back(b);
  }
  auto wires = node.diagram.wires;
  std::stable_sort(wires.begin(), wires.end(), wire_order);
  ordered_json ws = ordered_json::array();
  for (const auto& w : wires) ws.push_back({{"from", to_string(w.source)}, {"to", to_string(w.dest)}});
  return {{"boxes", boxes}, {"wires", ws}};
}

[[noreturn]] void schema_error(const std::string& what) {
  throw ParseError("json: " + what, Span{});
}

const ordered_json& field(const ordered_json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::string text_field(const ordered_json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) schema_error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

PortKind parse_kind(const std::string& s) {
  if (s == "bool") return PortKind::boolean();
  if (s == "real") return PortKind::real();
  if (s.size() > 6 && s.rfind("real[", 0) == 0 && s.back() == ']') {
    try {
      return PortKind::vector(std::stoi(s.substr(5, s.size() - 6)));
    } catch (const std::exception&) {
    }
  }
  schema_error("unknown port kind '" + s + "'");
}

std::vector<PortSpec> parse_ports(const ordered_json& a) {
  if (!a.is_array()) schema_error("port list must be an array");
  std::vector<PortSpec> out;
  for (const auto& p : a) out.push_back({text_field(p, "name"), parse_kind(text_field(p, "kind"))});
  return out;
}

BoxInterface parse_iface(const ordered_json& j) {
  return {parse_ports(field(j, "inputs")), parse_ports(field(j, "outputs"))};
}

Param parse_param(const ordered_json& j) {
  if (j.is_number()) return Param::of(j.get<double>());
  if (j.is_string()) return Param::of_word(j.get<std::string>());
  if (j.is_boolean()) return Param::of_word(j.get<bool>() ? "true" : "false");
  if (j.is_array()) {
    std::vector<Param> items;
    for (const auto& x : j) items.push_back(parse_param(x));
    return Param::of_list(std::move(items));
  }
  schema_error("unsupported parameter value");
}

PortRef parse_ref(const WiringDiagram& d, const std::string& text, bool as_source) {
  auto dot = text.rfind('.');
  if (dot == std::string::npos) schema_error("bad port reference '" + text + "'");
  std::string box = text.substr(0, dot), port = text.substr(dot + 1);
  if (box == kOuter) {
    const auto& iface = d.outer;
    if (as_source ? !iface.input_index(port) : !iface.output_index(port)) {
      schema_error("unknown outer port in '" + text + "'");
    }
    return as_source ? PortRef::outer_in(port) : PortRef::outer_out(port);
  }
  auto it = d.inner.find(box);
  if (it == d.inner.end()) schema_error("undeclared box in '" + text + "'");
  if (as_source ? !it->second.output_index(port) : !it->second.input_index(port)) {
    schema_error("unknown port in '" + text + "'");
  }
  return as_source ? PortRef::out(box, port) : PortRef::in(box, port);
}

NestedDiagram parse_level(const ordered_json& j, const BoxInterface& outer, const std::string& level,
                          std::map<std::string, Attachment>& attachments) {
  NestedDiagram node;
  node.diagram.outer = outer;
  const auto& boxes = field(j, "boxes");
  if (!boxes.is_array()) schema_error("'boxes' must be an array");
  for (const auto& b : boxes) {
    std::string id = text_field(b, "id");
    BoxInterface iface = parse_iface(field(b, "interface"));
    if (!node.diagram.inner.emplace(id, iface).second) schema_error("duplicate box '" + id + "'");
    std::string path = join_path(level, id);
    if (b.contains("body")) {
      node.set_child(id, parse_level(b.at("body"), iface, path, attachments));
    }
    if (b.contains("attach")) {
      if (b.contains("body")) schema_error("box '" + id + "' has both a body and an attachment");
      const auto& a = b.at("attach");
      Attachment att;
      att.family = text_field(a, "family");
      if (a.contains("variant")) att.variant = text_field(a, "variant");
      if (a.contains("params")) {
        if (!a.at("params").is_object()) schema_error("'params' must be an object");
        for (const auto& [k, v] : a.at("params").items()) att.params[k] = parse_param(v);
      }
      attachments[path] = std::move(att);
    }
  }
  const auto& wires = field(j, "wires");
  if (!wires.is_array()) schema_error("'wires' must be an array");
  for (const auto& w : wires) {
    node.diagram.wires.push_back({parse_ref(node.diagram, text_field(w, "from"), true),
                                  parse_ref(node.diagram, text_field(w, "to"), false)});
  }
  normalize(node.diagram);
  return node;
}

}  // namespace

std::string to_json(const Document& doc, int indent) {
  ordered_json j = {{"outer", iface_json(doc.tree.diagram.outer)}};
  auto body = level_json(doc.tree, "", doc.attachments);
  for (auto& [k, v] : body.items()) j[k] = v;
  if (!doc.candidates.destinations.empty()) {
    ordered_json cs = ordered_json::array();
    for (const auto& dest : doc.candidates.destinations) {
      for (const auto& c : dest.candidates) {
        cs.push_back({{"from", to_string(c.source)},
                      {"to", to_string(dest.dest)},
                      {"logit", c.logit},
                      {"gain", c.gain}});
      }
    }
    j["candidates"] = cs;
  }
  return j.dump(indent) + "\n";
}

std::string to_json(const WiringDiagram& d, int indent) { return to_json(from_diagram(d), indent); }

Document from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    // Convert the byte offset into a line and column.
    Span at{1, 1};
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++at.line;
        at.column = 1;
      } else {
        ++at.column;
      }
    }
    throw ParseError(std::string("json: ") + e.what(), at);
  }
  Document doc;
  BoxInterface outer = parse_iface(field(j, "outer"));
  doc.tree = parse_level(j, outer, "", doc.attachments);
  if (j.contains("candidates")) {
    std::map<PortRef, std::vector<Candidate>> by_dest;
    for (const auto& c : j.at("candidates")) {
      PortRef src = parse_ref(doc.tree.diagram, text_field(c, "from"), true);
      PortRef dst = parse_ref(doc.tree.diagram, text_field(c, "to"), false);
      double logit = c.value("logit", 0.0), gain = c.value("gain", 1.0);
      by_dest[dst].push_back({src, logit, gain});
    }
    for (auto& [dest, list] : by_dest) doc.candidates.destinations.push_back({dest, std::move(list)});
  }
  return doc;
}

}  // namespace dilskit
