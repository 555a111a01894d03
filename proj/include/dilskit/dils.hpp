#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dilskit/diagram.hpp"
#include "dilskit/learn.hpp"

namespace dilskit {

// One possible feed of a destination port. The effective value at the
// destination is sum_c softmax(logits)_c * gain_c * value(source_c).
struct Candidate {
  PortRef source;
  double logit = 0.0;
  double gain = 1.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct SoftDestination {
  PortRef dest;  // unit input or outer output
  std::vector<Candidate> candidates;

  friend bool operator==(const SoftDestination&, const SoftDestination&) = default;
};

// Destinations sorted by PortRef; candidate order is significant (ties in
// harden() go to the lowest index).
struct SoftWiring {
  std::vector<SoftDestination> destinations;

  friend bool operator==(const SoftWiring&, const SoftWiring&) = default;
};

// Probabilities of one destination's candidates, shift-stabilised.
std::vector<double> softmax(std::span<const double> logits);

// Checks candidate legality and kinds against the interfaces, and coverage:
// each unit input and outer output has exactly one destination entry with at
// least one candidate. Acyclicity is checked by the DilsNetwork constructor.
ValidationReport validate_soft(const BoxInterface& outer,
                               const std::map<std::string, BoxInterface>& boxes,
                               const SoftWiring& wiring);

struct RewiringSnapshot {
  std::uint64_t step = 0;
  WiringDiagram hard;

  friend bool operator==(const RewiringSnapshot&, const RewiringSnapshot&) = default;
};

struct DilsGradients {
  std::vector<double> dx;
  std::map<std::string, UnitGradient> units;
  std::vector<std::vector<double>> dlogits;  // per destination, per candidate
  std::vector<std::vector<double>> dgains;
};

// Learner units wired by a soft, trainable interaction pattern. Values move
// forward and errors backward over the same soft wires.
class DilsNetwork {
 public:
  // Throws InvalidDiagram (illegal wiring) or CycleError (candidate cycle).
  DilsNetwork(BoxInterface outer, std::map<std::string, LearnerUnit> units, SoftWiring wiring);

  const BoxInterface& outer() const { return outer_; }
  const std::map<std::string, LearnerUnit>& units() const { return units_; }
  const SoftWiring& wiring() const { return wiring_; }
  // Mutable access drops the forward cache.
  LearnerUnit& unit(const std::string& id);
  SoftWiring& mutable_wiring();

  std::uint64_t clock() const { return clock_; }
  void tick() { ++clock_; }

  std::vector<double> forward(std::span<const double> x);
  DilsGradients backward(std::span<const double> dy) const;
  // Units move with eta_param (trainable ones only); logits and gains with eta_wire.
  void apply(const DilsGradients& g, double eta_param, double eta_wire);

  // Argmax candidate per destination, lowest index on ties.
  RewiringSnapshot harden() const;

 private:
  BoxInterface outer_;
  std::map<std::string, LearnerUnit> units_;
  SoftWiring wiring_;
  std::uint64_t clock_ = 0;

  struct Plan {
    std::vector<std::string> ids;
    std::vector<std::size_t> order;
    // Destination index feeding unit u, input i.
    std::vector<std::vector<std::size_t>> unit_dest;
    std::vector<std::size_t> outer_dest;
    // Per destination, per candidate: outer input index or unit index.
    std::vector<std::vector<std::pair<bool, std::size_t>>> sources;
  } plan_;

  struct Cache {
    std::vector<std::vector<double>> prob;   // per destination
    std::vector<std::vector<double>> value;  // per destination, candidate values
    std::vector<double> eff;                 // per destination
    std::vector<double> z;                   // per unit
    std::vector<double> y;
  };
  std::optional<Cache> cache_;
};

// Candidate logit given to existing wires by from_dnn.
inline constexpr double kEmbeddedLogit = 30.0;

// Every value wire of `net` becomes the single candidate of its destination
// (gain 1, logit kEmbeddedLogit); unit parameters are copied unchanged.
DilsNetwork from_dnn(const DiagramNet& net);

struct OnlineConfig {
  double eta_param = 0.1;
  double eta_wire = 0.1;
  std::size_t snapshot_every = 100;  // 0 disables periodic snapshots
};

struct TraceRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::vector<double> prediction;
};

struct Halt {
  std::uint64_t step = 0;
  std::size_t position = 0;  // index into the stream
  std::string reason;
};

struct TraceLog {
  std::vector<std::string> outputs;  // outer output names
  std::vector<TraceRow> rows;
  std::vector<RewiringSnapshot> snapshots;  // initial one, then every snapshot_every steps
  std::optional<Halt> halt;
};

// Per arrival: predict, record the loss, backpropagate, update, tick.
// A non-finite loss stops the run and is recorded in TraceLog::halt.
TraceLog run_online(DilsNetwork& n, std::span<const Example> stream, const OnlineConfig& cfg);

// `step,loss,<outer outputs>` with 17 significant digits.
void write_trace_csv(std::ostream& out, const TraceLog& log);

// Two-line routing task: outer inputs x0, x1, output y0 fed by one identity
// unit "route" whose only input chooses between outer.x0 and outer.x1.
// The target line and the initial logits come from the seed.
struct RoutingTask {
  DilsNetwork network;
  std::size_t correct_line = 0;
  std::vector<Example> stream;
};
RoutingTask make_routing_task(std::uint64_t seed, std::size_t steps);

}  // namespace dilskit
