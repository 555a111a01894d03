#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dilskit {

enum class ValueKind { boolean, real, real_vector };

// The type carried by a port. `dim` is only meaningful for real vectors and
// is kept at 1 for the scalar kinds so that equality is structural.
struct PortKind {
  ValueKind kind = ValueKind::real;
  int dim = 1;

  static constexpr PortKind boolean() { return {ValueKind::boolean, 1}; }
  static constexpr PortKind real() { return {ValueKind::real, 1}; }
  static constexpr PortKind vector(int d) { return {ValueKind::real_vector, d}; }

  friend auto operator<=>(const PortKind&, const PortKind&) = default;
};

std::string to_string(PortKind kind);

struct PortSpec {
  std::string name;
  PortKind kind;

  friend auto operator<=>(const PortSpec&, const PortSpec&) = default;
};

struct BoxInterface {
  std::vector<PortSpec> inputs;
  std::vector<PortSpec> outputs;

  std::optional<std::size_t> input_index(std::string_view name) const;
  std::optional<std::size_t> output_index(std::string_view name) const;

  friend auto operator<=>(const BoxInterface&, const BoxInterface&) = default;
};

std::string to_string(const BoxInterface& iface);

enum class Locus { outer_input, outer_output, inner_input, inner_output };

// One end of a wire. `box` is empty for the two outer loci.
struct PortRef {
  Locus locus = Locus::outer_input;
  std::string box;
  std::string port;

  static PortRef outer_in(std::string port) { return {Locus::outer_input, {}, std::move(port)}; }
  static PortRef outer_out(std::string port) { return {Locus::outer_output, {}, std::move(port)}; }
  static PortRef in(std::string box, std::string port) {
    return {Locus::inner_input, std::move(box), std::move(port)};
  }
  static PortRef out(std::string box, std::string port) {
    return {Locus::inner_output, std::move(box), std::move(port)};
  }

  bool is_outer() const { return locus == Locus::outer_input || locus == Locus::outer_output; }

  friend auto operator<=>(const PortRef&, const PortRef&) = default;
};

// "outer.a" or "box.port"; the side is implied by where the ref appears.
std::string to_string(const PortRef& ref);

struct Wire {
  PortRef source;
  PortRef dest;

  friend auto operator<=>(const Wire&, const Wire&) = default;
};

std::string to_string(const Wire& wire);

// Canonical wire order: by destination text, then source text.
bool wire_order(const Wire& a, const Wire& b);

inline constexpr std::string_view kOuter = "outer";

struct WiringDiagram {
  BoxInterface outer;
  std::map<std::string, BoxInterface> inner;
  std::vector<Wire> wires;

  // Exact equality, including box ids and wire order. Use
  // `structurally_equal` for equality up to box renaming.
  friend bool operator==(const WiringDiagram&, const WiringDiagram&) = default;
};

// Sorts wires into canonical order.
void normalize(WiringDiagram& d);

enum class Rule {
  empty_name,
  duplicate_port,
  bad_dimension,
  reserved_box_id,
  illegal_direction,
  unknown_box,
  unknown_port,
  kind_mismatch,
  multiple_feeds,
  missing_feed,
};

std::string_view to_string(Rule rule);

struct Violation {
  Rule rule;
  std::optional<std::size_t> wire;  // index into WiringDiagram::wires
  std::string message;
  std::optional<PortRef> port = std::nullopt;  // the destination, for feed-count violations
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const WiringDiagram& d);

// Throws InvalidDiagram if `d` is not valid. `what` prefixes the message.
void require_valid(const WiringDiagram& d, std::string_view what);

inline constexpr std::string_view kIdentitySlot = "inner";

// One inner box (id "inner") with interface `iface`, wired straight through.
WiringDiagram identity_diagram(const BoxInterface& iface);

// Operadic substitution of `guest` into the inner box `slot` of `host`.
// Guest boxes are renamed "<slot>/<guest-id>".
WiringDiagram substitute(const WiringDiagram& host, std::string_view slot,
                         const WiringDiagram& guest);

struct NestedChild;

// A diagram whose inner boxes may themselves be filled by diagrams. Boxes
// without a child are leaves.
struct NestedDiagram {
  WiringDiagram diagram;
  std::vector<NestedChild> children;  // sorted by slot

  static NestedDiagram leaf(WiringDiagram d);

  const NestedDiagram* child(std::string_view slot) const;
  // Inserts or replaces the child filling `slot`.
  void set_child(std::string slot, NestedDiagram tree);

  friend bool operator==(const NestedDiagram&, const NestedDiagram&);
};

struct NestedChild {
  std::string slot;
  NestedDiagram tree;

  friend bool operator==(const NestedChild&, const NestedChild&) = default;
};

// Substitutes children bottom-up, each level in slot order.
WiringDiagram flatten(const NestedDiagram& tree);

// Path ids of every leaf box ("a/b/c"), in flattened naming.
std::vector<std::string> leaf_paths(const NestedDiagram& tree);

// Leaf box interfaces keyed by path id.
std::map<std::string, BoxInterface> leaf_interfaces(const NestedDiagram& tree);

// Boxes renamed "b0", "b1", ... in an order derived from the wiring alone
// (iterated neighbourhood refinement, ties broken by original id).
WiringDiagram canonical_form(const WiringDiagram& d);

// Equality up to a bijective renaming of inner boxes.
bool structurally_equal(const WiringDiagram& a, const WiringDiagram& b);

}  // namespace dilskit
