#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dilskit/diagram.hpp"
#include "dilskit/dils.hpp"
#include "dilskit/dynamics.hpp"
#include "dilskit/error.hpp"
#include "dilskit/learn.hpp"

namespace dilskit {

struct Span {
  int line = 0;  // 1-based; 0 means unknown
  int column = 0;

  friend auto operator<=>(const Span&, const Span&) = default;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, Span at, std::vector<std::string> expected = {});

  Span span() const noexcept { return span_; }
  const std::string& message() const noexcept { return message_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  Span span_;
  std::string message_;
  std::vector<std::string> expected_;
};

// Attachment parameter: a number, a bare word (true, tanh, ...) or a list.
struct Param {
  enum class Type { number, word, list };
  Type type = Type::number;
  double number = 0.0;
  std::string word;
  std::vector<Param> items;

  static Param of(double x) { return {Type::number, x, {}, {}}; }
  static Param of_word(std::string w) { return {Type::word, 0.0, std::move(w), {}}; }
  static Param of_list(std::vector<Param> xs) { return {Type::list, 0.0, {}, std::move(xs)}; }

  friend bool operator==(const Param&, const Param&) = default;
};

// Behaviour attached to a leaf box, e.g. `attach n1 unit { act: tanh, w: [0.1] }`.
struct Attachment {
  std::string family;   // unit, gate, moore, ode
  std::string variant;  // NAND, delay, linear, ... (may be empty)
  std::map<std::string, Param> params;

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

// Where things came from in the source text. Wires are keyed by the path
// of the level that holds them ("" for the root).
struct SourceMap {
  std::map<std::string, Span> boxes;  // by full path
  std::map<std::pair<std::string, Wire>, Span> wires;
  std::map<std::pair<PortRef, std::size_t>, Span> candidates;
};

struct Document {
  NestedDiagram tree;
  std::map<std::string, Attachment> attachments;  // by leaf path
  // Soft feeds of root-level destinations, in declaration order per
  // destination. Destinations listed here carry no hard wire.
  SoftWiring candidates;
  SourceMap spans;

  // Equality ignores spans.
  friend bool operator==(const Document& a, const Document& b) {
    return a.tree == b.tree && a.attachments == b.attachments && a.candidates == b.candidates;
  }
};

// Parses the diagram language. Syntax errors, duplicate ids and references
// to undeclared boxes or ports throw ParseError. Rule violations such as
// kind mismatches are left for check().
Document parse_document(std::string_view text);

struct Diagnostic {
  Span span;
  std::string level;  // box path of the level, "" for the root
  Rule rule;
  std::string message;
};

// Validates every level of the tree plus the candidate list.
std::vector<Diagnostic> check(const Document& doc);
std::string format_diagnostic(const Diagnostic& d, std::string_view file);

// Canonical text: boxes sorted by id with inline interfaces, wires in
// canonical order, 2-space indentation for nested bodies.
std::string serialize(const Document& doc);
std::string serialize(const NestedDiagram& tree);
std::string serialize(const WiringDiagram& d);

// Graphviz rendering: leaf boxes are nodes, composite boxes are clusters,
// outer ports are point nodes. Edges join node pairs and list the port
// pairs they carry.
std::string export_dot(const Document& doc);
std::string export_dot(const NestedDiagram& tree);

std::string to_json(const Document& doc, int indent = 2);
std::string to_json(const WiringDiagram& d, int indent = 2);
Document from_json(std::string_view text);  // throws ParseError

Document flatten(const Document& doc);

// Bridges between documents and the model types.
DiagramNet to_diagram_net(const Document& doc);
Document from_diagram_net(const DiagramNet& net);
// Without candidates this is from_dnn(to_diagram_net(doc)); hard wires
// become singleton candidates otherwise.
DilsNetwork to_dils_network(const Document& doc);
Document from_dils_network(const DilsNetwork& n);
Document from_diagram(const WiringDiagram& d);

Attachment unit_attachment(const LearnerUnit& u);
LearnerUnit make_unit(const Attachment& a, const BoxInterface& iface);
CombinationalSystem make_combinational(const Attachment& a, const BoxInterface& iface);
MooreSystem make_moore(const Attachment& a, const BoxInterface& iface);
ContinuousSystem make_continuous(const Attachment& a, const BoxInterface& iface);

enum class SystemKind { combinational, moore, continuous };

// The regime shared by every attachment. Throws ShapeError when a leaf has
// no attachment or the families are mixed.
SystemKind system_kind(const Document& doc);
CombinationalSystem build_combinational(const Document& doc);
MooreSystem build_moore(const Document& doc);
ContinuousSystem build_continuous(const Document& doc);

}  // namespace dilskit
