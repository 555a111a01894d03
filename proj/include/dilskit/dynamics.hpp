#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dilskit/diagram.hpp"

namespace dilskit {

using RealVector = std::vector<double>;
using Value = std::variant<bool, double, RealVector>;
using Values = std::vector<Value>;
using ValuesView = std::span<const Value>;

PortKind kind_of(const Value& v);
bool is_finite(const Value& v);
// A zero of the given kind (false, 0.0, or a zero vector).
Value zero_value(PortKind kind);

// Stateless box: outputs are a pure function of the current inputs.
struct CombinationalSystem {
  BoxInterface interface;
  std::function<Values(ValuesView inputs)> fn;

  // Evaluates `fn` and checks the result against the interface.
  Values operator()(ValuesView inputs) const;
};

// For each output port, the input port it copies directly, if any. Atomic
// systems have none; composites acquire them from pass-through wires.
using Passthrough = std::vector<std::optional<std::size_t>>;

// Discrete-time box with Moore discipline: `readout` sees only the state.
// Outputs listed in `passthrough` are not produced by `readout` (their
// slots are ignored) but copied from the current inputs.
struct MooreSystem {
  BoxInterface interface;
  Values state;
  std::function<Values(ValuesView state)> readout;
  std::function<Values(ValuesView state, ValuesView inputs)> update;
  Passthrough passthrough;

  Values outputs(ValuesView state, ValuesView inputs) const;
  Values next(ValuesView state, ValuesView inputs) const;
};

// Continuous-time box. All ports are real or real vectors; `field` returns
// the state derivative (state units per time unit).
struct ContinuousSystem {
  BoxInterface interface;
  std::vector<double> state;
  std::function<Values(std::span<const double> state)> readout;
  std::function<std::vector<double>(std::span<const double> state, ValuesView inputs)> field;
  Passthrough passthrough;

  Values outputs(std::span<const double> state, ValuesView inputs) const;
  std::vector<double> derivative(std::span<const double> state, ValuesView inputs) const;
};

// Boxes evaluated in topological order of the inner-to-inner wiring.
// Throws CycleError if that wiring has a cycle.
CombinationalSystem compose_combinational(const WiringDiagram& d,
                                          const std::map<std::string, CombinationalSystem>& assign);

// Synchronous composite: state is the concatenation of inner states in box
// id order. Feedback of any shape is fine.
MooreSystem compose_moore(const WiringDiagram& d, const std::map<std::string, MooreSystem>& assign);

ContinuousSystem compose_continuous(const WiringDiagram& d,
                                    const std::map<std::string, ContinuousSystem>& assign);

// Composes a nested tree level by level, without flattening. `leaves` is
// keyed by leaf path ("a/b/c").
CombinationalSystem compose_nested(const NestedDiagram& tree,
                                   const std::map<std::string, CombinationalSystem>& leaves);
MooreSystem compose_nested(const NestedDiagram& tree,
                           const std::map<std::string, MooreSystem>& leaves);
ContinuousSystem compose_nested(const NestedDiagram& tree,
                                const std::map<std::string, ContinuousSystem>& leaves);

enum class Integrator { euler, rk4 };

struct SimConfig {
  std::size_t steps = 0;
  double dt = 1.0;
  Integrator integrator = Integrator::rk4;
  bool record_state = false;
};

// Number of fixed steps of size dt that reach t_end.
std::size_t steps_for(double t_end, double dt);

// One row of outer-input values per time stamp. Row k is applied over
// [t_k, t_k + dt) and is also what pass-through outputs show at t_k.
using InputTrace = std::vector<Values>;

struct SimTrace {
  std::vector<PortSpec> ports;  // outer outputs
  std::vector<double> times;
  std::vector<Values> rows;
  std::vector<Values> states;  // filled when SimConfig::record_state

  friend bool operator==(const SimTrace&, const SimTrace&) = default;
};

// Systems with inputs need at least steps + 1 input rows; input-free systems
// accept an empty trace. The trace has steps + 1 rows, starting at t = 0.
SimTrace simulate(const MooreSystem& system, const InputTrace& inputs, const SimConfig& cfg);
SimTrace simulate(const ContinuousSystem& system, const InputTrace& inputs, const SimConfig& cfg);
// One output row per input row, at t = k * dt.
SimTrace simulate(const CombinationalSystem& system, const InputTrace& inputs,
                  const SimConfig& cfg);

// Header `t,<ports>`; vector ports expand to `name[i]` columns; numbers use
// 17 significant digits and booleans print as 0/1.
void write_csv(std::ostream& out, const SimTrace& trace);

// Standard boolean gates: NAND, NOT, AND, OR, XOR. Inputs a (and b), output y.
CombinationalSystem gate(std::string_view name);

// The same gates built only from NAND boxes, by substitution where an
// intermediate abstraction exists. Every inner box has the NAND interface.
WiringDiagram nand_construction(std::string_view name);

// Interfaces used by the gate library.
BoxInterface gate_interface(std::string_view name);

}  // namespace dilskit
