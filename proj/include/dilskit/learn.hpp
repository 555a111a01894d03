#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dilskit/diagram.hpp"

namespace dilskit {

enum class Activation { identity, sigmoid, tanh, relu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);  // throws UnknownName

double activate(Activation act, double z);
// relu'(0) is 0.
double activate_derivative(Activation act, double z);

// An artificial neuron: y = act(sum_i w_i x_i + b). Input ports are x0..x{k-1},
// the single output port is y. Units with `trainable == false` keep their
// parameters under training (input-layer relays).
struct LearnerUnit {
  std::vector<double> w;
  double b = 0.0;
  Activation act = Activation::identity;
  bool trainable = true;

  BoxInterface interface() const;
  double pre_activation(std::span<const double> x) const;

  friend bool operator==(const LearnerUnit&, const LearnerUnit&) = default;
};

BoxInterface unit_interface(std::size_t inputs);
std::string unit_input_name(std::size_t i);
inline constexpr std::string_view kUnitOutput = "y";

struct UnitGradient {
  std::vector<double> dw;
  double db = 0.0;
};

struct Gradients {
  std::vector<double> dx;  // at the outer inputs
  std::map<std::string, UnitGradient> units;
};

// Topologically ordered evaluation plan of a flat, all-real unit diagram.
// Shared by DiagramNet and the soft-wired networks.
struct UnitPlan {
  struct Source {
    bool outer = false;
    std::size_t index = 0;  // outer input index or unit index
  };
  std::vector<std::string> ids;                 // unit ids, sorted
  std::vector<std::size_t> order;               // topological, lowest id first
  std::vector<std::vector<Source>> unit_inputs;  // per unit, per input port
  std::vector<Source> outer_outputs;
};

// A learner whose units sit in the boxes of a (possibly nested) wiring
// diagram. Value wires carry x forward; the matching error wires are the
// same wires read backwards, so they are not stored.
class DiagramNet {
 public:
  // `units` is keyed by flattened leaf path. Throws InvalidDiagram or
  // CycleError.
  DiagramNet(NestedDiagram tree, std::map<std::string, LearnerUnit> units);

  const NestedDiagram& tree() const { return tree_; }
  const WiringDiagram& flat() const { return flat_; }
  const std::map<std::string, LearnerUnit>& units() const { return units_; }
  LearnerUnit& unit(const std::string& id);
  const UnitPlan& plan() const { return plan_; }

  std::size_t input_count() const { return flat_.outer.inputs.size(); }
  std::size_t output_count() const { return flat_.outer.outputs.size(); }

  // Flattened evaluation; fills the caches used by backward().
  std::vector<double> forward(std::span<const double> x);
  // Interprets the nesting level by level instead of flattening. Composite
  // boxes are treated as opaque, so a level whose composite boxes form a
  // cycle is rejected even when the flat wiring is acyclic.
  std::vector<double> forward_nested(std::span<const double> x) const;

  // Throws StaleCache unless forward() ran since the last parameter change.
  Gradients backward(std::span<const double> dy) const;

  // Gradient step on trainable units; invalidates the cache.
  void apply(const Gradients& g, double eta);

 private:
  NestedDiagram tree_;
  WiringDiagram flat_;
  std::map<std::string, LearnerUnit> units_;
  UnitPlan plan_;

  struct Cache {
    std::vector<std::vector<double>> x;  // per unit, its inputs
    std::vector<double> z;
    std::vector<double> y;
  };
  std::optional<Cache> cache_;
};

// Builds and checks the plan for a flat diagram of units.
UnitPlan plan_units(const WiringDiagram& flat, const std::map<std::string, LearnerUnit>& units);

// Layer l of L sits at nesting depth L-1-l: each layer's units live inside a
// box "sub" of the diagram holding the next layer. The first layer is made
// of identity relays (one input, w = 1, not trainable). Weights are drawn
// uniformly from [-1/sqrt(fanin), 1/sqrt(fanin)], biases start at zero.
DiagramNet unfold_mlp(std::span<const std::size_t> layer_sizes, Activation act,
                      std::uint64_t seed);

// Unit id of layer `layer`, index `j` inside an unfold_mlp net (flattened).
std::string mlp_unit_id(std::size_t layers, std::size_t layer, std::size_t j);

// Nesting depth of a flattened box id (number of '/' separators).
std::size_t nesting_depth(std::string_view id);

struct Example {
  std::vector<double> x;
  std::vector<double> target;
};

double mse(std::span<const double> y, std::span<const double> target);
std::vector<double> mse_gradient(std::span<const double> y, std::span<const double> target);

struct TrainConfig {
  std::size_t epochs = 1;
  double eta = 0.1;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean over examples, losses taken before each update
  std::vector<double> step_loss;   // one per example presentation
};

// Per-example SGD in dataset order. Throws NonFiniteError naming the epoch
// and example when the loss stops being finite.
TrainResult train(DiagramNet& net, std::span<const Example> data, const TrainConfig& cfg);

}  // namespace dilskit
