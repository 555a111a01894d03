#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dilskit/dynamics.hpp"
#include "dilskit/error.hpp"
#include "support.hpp"

using namespace dilskit;
using namespace testkit;

namespace {

Values bits(bool a, bool b) { return {a, b}; }

// Every inner box of a NAND construction gets the NAND gate.
CombinationalSystem from_nands(const WiringDiagram& d) {
  std::map<std::string, CombinationalSystem> assign;
  for (const auto& [id, _] : d.inner) assign.emplace(id, gate("NAND"));
  return compose_combinational(d, assign);
}

// Stateless box with one random truth table per output.
CombinationalSystem random_boolean_box(Rng& rng, const BoxInterface& iface) {
  std::vector<std::vector<bool>> tables;
  std::size_t rows = std::size_t{1} << iface.inputs.size();
  for (std::size_t j = 0; j < iface.outputs.size(); ++j) {
    std::vector<bool> t;
    for (std::size_t r = 0; r < rows; ++r) t.push_back(coin(rng));
    tables.push_back(t);
  }
  return {iface, [tables](ValuesView in) {
            std::size_t idx = 0;
            for (std::size_t i = 0; i < in.size(); ++i) idx |= std::size_t{std::get<bool>(in[i])} << i;
            Values out;
            for (const auto& t : tables) out.emplace_back(static_cast<bool>(t[idx]));
            return out;
          }};
}

// Oracle: evaluate every box repeatedly until nothing changes. On an
// acyclic diagram this settles after at most (boxes + 1) sweeps, without
// any notion of a topological order.
Values relax(const WiringDiagram& d, const std::map<std::string, CombinationalSystem>& assign,
             const Values& x) {
  std::map<PortRef, Value> value;
  for (std::size_t i = 0; i < x.size(); ++i) value[PortRef::outer_in(d.outer.inputs[i].name)] = x[i];
  std::map<PortRef, PortRef> feed;
  for (const auto& w : d.wires) feed.emplace(w.dest, w.source);
  for (std::size_t sweep = 0; sweep <= d.inner.size(); ++sweep) {
    for (const auto& [id, iface] : d.inner) {
      Values in;
      bool ready = true;
      for (const auto& p : iface.inputs) {
        auto it = value.find(feed.at(PortRef::in(id, p.name)));
        if (it == value.end()) {
          ready = false;
          break;
        }
        in.push_back(it->second);
      }
      if (!ready) continue;
      auto out = assign.at(id).fn(in);
      for (std::size_t j = 0; j < out.size(); ++j) value[PortRef::out(id, iface.outputs[j].name)] = out[j];
    }
  }
  Values y;
  for (const auto& p : d.outer.outputs) y.push_back(value.at(feed.at(PortRef::outer_out(p.name))));
  return y;
}

MooreSystem not_delay(bool init) {
  MooreSystem m;
  m.interface = {{{"a", PortKind::boolean()}}, {{"y", PortKind::boolean()}}};
  m.state = {init};
  m.readout = [](ValuesView s) { return Values{s[0]}; };
  m.update = [](ValuesView, ValuesView in) { return Values{!std::get<bool>(in[0])}; };
  m.passthrough = {std::nullopt};
  return m;
}

WiringDiagram ring(bool self_loops) {
  WiringDiagram d;
  BoxInterface inv{{{"a", PortKind::boolean()}}, {{"y", PortKind::boolean()}}};
  d.outer.outputs = {{"p", PortKind::boolean()}, {"q", PortKind::boolean()}};
  d.inner = {{"p", inv}, {"q", inv}};
  if (self_loops) {
    d.wires = {{PortRef::out("p", "y"), PortRef::in("p", "a")},
               {PortRef::out("q", "y"), PortRef::in("q", "a")}};
  } else {
    d.wires = {{PortRef::out("q", "y"), PortRef::in("p", "a")},
               {PortRef::out("p", "y"), PortRef::in("q", "a")}};
  }
  d.wires.push_back({PortRef::out("p", "y"), PortRef::outer_out("p")});
  d.wires.push_back({PortRef::out("q", "y"), PortRef::outer_out("q")});
  return d;
}

std::vector<std::pair<bool, bool>> ring_trace(const WiringDiagram& d, bool p0, bool q0, std::size_t steps) {
  auto m = compose_moore(d, {{"p", not_delay(p0)}, {"q", not_delay(q0)}});
  auto trace = simulate(m, {}, {steps, 1.0});
  std::vector<std::pair<bool, bool>> out;
  for (const auto& row : trace.rows) out.emplace_back(std::get<bool>(row[0]), std::get<bool>(row[1]));
  return out;
}

ContinuousSystem integrator_box(double x0) {
  ContinuousSystem c;
  c.interface = {{{"u", PortKind::real()}}, {{"x", PortKind::real()}}};
  c.state = {x0};
  c.readout = [](std::span<const double> s) { return Values{s[0]}; };
  c.field = [](std::span<const double>, ValuesView in) { return std::vector<double>{std::get<double>(in[0])}; };
  c.passthrough = {std::nullopt};
  return c;
}

ContinuousSystem leaky_box(double y0) {
  ContinuousSystem c;
  c.interface = {{{"v", PortKind::real()}}, {{"y", PortKind::real()}}};
  c.state = {y0};
  c.readout = [](std::span<const double> s) { return Values{s[0]}; };
  c.field = [](std::span<const double> s, ValuesView in) {
    return std::vector<double>{-s[0] + std::get<double>(in[0])};
  };
  c.passthrough = {std::nullopt};
  return c;
}

// Outer input u feeds A; A feeds B; both states are observed.
WiringDiagram ab_wiring() {
  WiringDiagram d;
  d.outer = {{{"u", PortKind::real()}}, {{"x", PortKind::real()}, {"y", PortKind::real()}}};
  d.inner = {{"a", integrator_box(0).interface}, {"b", leaky_box(0).interface}};
  d.wires = {{PortRef::outer_in("u"), PortRef::in("a", "u")},
             {PortRef::out("a", "x"), PortRef::in("b", "v")},
             {PortRef::out("a", "x"), PortRef::outer_out("x")},
             {PortRef::out("b", "y"), PortRef::outer_out("y")}};
  return d;
}

InputTrace held_sine(std::size_t steps, double dt) {
  InputTrace in;
  for (std::size_t k = 0; k <= steps; ++k) in.push_back({std::sin(static_cast<double>(k) * dt)});
  return in;
}

}  // namespace

TEST_CASE("gates follow their truth tables") {
  auto nand = gate("NAND");
  CHECK(nand(bits(true, true)) == Values{false});
  for (bool b : {false, true}) CHECK(nand(bits(false, b)) == Values{true});
  auto not_gate = gate("NOT");
  CHECK(not_gate(Values{true}) == Values{false});
  CHECK(not_gate(Values{false}) == Values{true});
  for (bool a : {false, true}) {
    for (bool b : {false, true}) {
      CHECK(gate("AND")(bits(a, b)) == Values{a && b});
      CHECK(gate("OR")(bits(a, b)) == Values{a || b});
      CHECK(gate("XOR")(bits(a, b)) == Values{a != b});
    }
  }
  CHECK_THROWS_AS(gate("NOR"), UnknownName);
}

TEST_CASE("NAND constructions agree with the direct gates") {
  auto or_gate = from_nands(nand_construction("OR"));
  CHECK(or_gate(bits(false, false)) == Values{false});
  CHECK(or_gate(bits(false, true)) == Values{true});
  CHECK(or_gate(bits(true, false)) == Values{true});
  CHECK(or_gate(bits(true, true)) == Values{true});

  auto xor_d = nand_construction("XOR");
  CHECK(xor_d.inner.size() == 4);
  for (const char* name : {"AND", "OR", "XOR"}) {
    auto built = from_nands(nand_construction(name));
    auto direct = gate(name);
    for (bool a : {false, true}) {
      for (bool b : {false, true}) CHECK(built(bits(a, b)) == direct(bits(a, b)));
    }
  }
  auto built_not = from_nands(nand_construction("NOT"));
  for (bool a : {false, true}) CHECK(built_not(Values{a}) == gate("NOT")(Values{a}));
}

TEST_CASE("combinational composition matches exhaustive relaxation") {
  Rng rng(21);
  GenOptions o;
  o.kinds = {PortKind::boolean()};
  o.acyclic = true;
  o.max_boxes = 4;
  for (int trial = 0; trial < 40; ++trial) {
    BoxInterface outer;
    int n_in = uniform_int(rng, 1, 8);
    for (int i = 0; i < n_in; ++i) outer.inputs.push_back({"x" + std::to_string(i), PortKind::boolean()});
    for (int i = 0; i < 3; ++i) outer.outputs.push_back({"y" + std::to_string(i), PortKind::boolean()});
    auto d = random_diagram(rng, outer, o, {"b0", "b1", "b2", "b3"});
    std::map<std::string, CombinationalSystem> assign;
    for (const auto& [id, iface] : d.inner) assign.emplace(id, random_boolean_box(rng, iface));
    auto composite = compose_combinational(d, assign);
    for (std::size_t bitsv = 0; bitsv < (std::size_t{1} << n_in); ++bitsv) {
      Values x;
      for (int i = 0; i < n_in; ++i) x.emplace_back(static_cast<bool>((bitsv >> i) & 1));
      REQUIRE(composite(x) == relax(d, assign, x));
    }
  }
}

TEST_CASE("combinational cycles are reported") {
  WiringDiagram d;
  d.outer = {{}, {{"y", PortKind::boolean()}}};
  BoxInterface inv{{{"a", PortKind::boolean()}}, {{"y", PortKind::boolean()}}};
  d.inner = {{"p", inv}, {"q", inv}};
  d.wires = {{PortRef::out("q", "y"), PortRef::in("p", "a")},
             {PortRef::out("p", "y"), PortRef::in("q", "a")},
             {PortRef::out("p", "y"), PortRef::outer_out("y")}};
  try {
    compose_combinational(d, {{"p", gate("NOT")}, {"q", gate("NOT")}});
    FAIL("expected a CycleError");
  } catch (const CycleError& e) {
    std::vector<std::string> cycle = e.cycle();
    std::sort(cycle.begin(), cycle.end());
    cycle.erase(std::unique(cycle.begin(), cycle.end()), cycle.end());
    CHECK(cycle == std::vector<std::string>{"p", "q"});
  }
}

TEST_CASE("identity wiring preserves behaviour") {
  Rng rng(22);
  SUBCASE("combinational") {
    auto g = gate("XOR");
    auto c = compose_combinational(identity_diagram(g.interface), {{std::string(kIdentitySlot), g}});
    for (bool a : {false, true}) {
      for (bool b : {false, true}) CHECK(c(bits(a, b)) == g(bits(a, b)));
    }
  }
  SUBCASE("moore") {
    BoxInterface io{{{"a", PortKind::real()}, {"b", PortKind::boolean()}},
                    {{"y", PortKind::real()}, {"z", PortKind::boolean()}}};
    auto m = random_moore(rng, io);
    auto c = compose_moore(identity_diagram(io), {{std::string(kIdentitySlot), m}});
    InputTrace in;
    for (int k = 0; k <= 30; ++k) in.push_back(random_values(rng, io.inputs));
    CHECK(simulate(c, in, {30, 1.0}).rows == simulate(m, in, {30, 1.0}).rows);
  }
  SUBCASE("continuous") {
    BoxInterface io{{{"a", PortKind::real()}, {"v", PortKind::vector(2)}}, {{"y", PortKind::vector(2)}}};
    auto s = random_continuous(rng, io);
    auto c = compose_continuous(identity_diagram(io), {{std::string(kIdentitySlot), s}});
    InputTrace in;
    for (int k = 0; k <= 200; ++k) in.push_back(random_values(rng, io.inputs));
    CHECK(simulate(c, in, {200, 0.01}).rows == simulate(s, in, {200, 0.01}).rows);
  }
}

TEST_CASE("unit-delay inverter rings") {
  // Hand simulation. Cross-wired from (0,1): p' = !q = 0, q' = !p = 1, so
  // the state never moves. From (0,0) both flip together every step.
  std::vector<std::pair<bool, bool>> still(9, {false, true});
  CHECK(ring_trace(ring(false), false, true, 8) == still);
  std::vector<std::pair<bool, bool>> blink;
  for (int k = 0; k <= 8; ++k) blink.emplace_back(k % 2 == 1, k % 2 == 1);
  CHECK(ring_trace(ring(false), false, false, 8) == blink);
  // Each inverter fed back onto itself: period 2 from (0,1).
  std::vector<std::pair<bool, bool>> alternate;
  for (int k = 0; k <= 8; ++k) alternate.emplace_back(k % 2 == 1, k % 2 == 0);
  CHECK(ring_trace(ring(true), false, true, 8) == alternate);
}

TEST_CASE("Moore composition is total on arbitrary wiring") {
  Rng rng(23);
  GenOptions o;
  o.passthrough = true;
  for (int trial = 0; trial < 100; ++trial) {
    auto d = random_diagram(rng, random_interface(rng, o), o);
    std::map<std::string, MooreSystem> assign;
    for (const auto& [id, iface] : d.inner) assign.emplace(id, random_moore(rng, iface));
    MooreSystem m;
    REQUIRE_NOTHROW(m = compose_moore(d, assign));
    InputTrace in;
    for (int k = 0; k <= 5; ++k) in.push_back(random_values(rng, d.outer.inputs));
    CHECK_NOTHROW(simulate(m, in, {5, 1.0}));
  }
}

TEST_CASE("nested and flattened Moore composites agree step for step") {
  Rng rng(24);
  GenOptions o;
  o.max_boxes = 3;
  int done = 0;
  for (int trial = 0; trial < 200 && done < 20; ++trial) {
    auto tree = random_tree(rng, random_interface(rng, o), o, 2, 0.6);
    std::map<std::string, MooreSystem> leaves;
    for (const auto& [path, iface] : leaf_interfaces(tree)) leaves.emplace(path, random_moore(rng, iface));
    MooreSystem nested, flat;
    try {
      nested = compose_nested(tree, leaves);
    } catch (const CompositionError&) {
      CHECK_THROWS_AS(flatten(tree), CompositionError);
      continue;
    }
    flat = compose_moore(flatten(tree), leaves);
    InputTrace in;
    for (int k = 0; k <= 100; ++k) in.push_back(random_values(rng, tree.diagram.outer.inputs));
    CHECK(simulate(nested, in, {100, 1.0}) == simulate(flat, in, {100, 1.0}));
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("nested and flattened continuous composites agree") {
  Rng rng(27);
  GenOptions o;
  o.max_boxes = 3;
  o.kinds = {PortKind::real(), PortKind::vector(2)};
  int done = 0;
  for (int trial = 0; trial < 200 && done < 10; ++trial) {
    auto tree = random_tree(rng, random_interface(rng, o), o, 2, 0.6);
    std::map<std::string, ContinuousSystem> leaves;
    for (const auto& [path, iface] : leaf_interfaces(tree)) leaves.emplace(path, random_continuous(rng, iface));
    ContinuousSystem nested;
    try {
      nested = compose_nested(tree, leaves);
    } catch (const CompositionError&) {
      CHECK_THROWS_AS(flatten(tree), CompositionError);
      continue;
    }
    auto flat = compose_continuous(flatten(tree), leaves);
    InputTrace in;
    for (int k = 0; k <= 1000; ++k) in.push_back(random_values(rng, tree.diagram.outer.inputs));
    SimConfig cfg{1000, 1e-3, Integrator::rk4};
    CHECK(max_abs_gap(simulate(nested, in, cfg), simulate(flat, in, cfg)) <= 1e-9);
    ++done;
  }
  CHECK(done == 10);
}

TEST_CASE("variable sharing: the A/B composite is the monolithic ODE") {
  const double dt = 1e-3;
  const std::size_t steps = 10000;
  auto composite = compose_continuous(ab_wiring(), {{"a", integrator_box(0.5)}, {"b", leaky_box(-0.3)}});
  CHECK(composite.state == std::vector<double>{0.5, -0.3});
  auto in = held_sine(steps, dt);
  auto trace = simulate(composite, in, {steps, dt, Integrator::rk4});

  // Hand-written (x' = u, y' = -y + x) with the same held input.
  double x = 0.5, y = -0.3, gap = 0.0;
  auto f = [](double u, double px, double py) { return std::pair{u, -py + px}; };
  for (std::size_t k = 0; k <= steps; ++k) {
    gap = std::max({gap, std::abs(std::get<double>(trace.rows[k][0]) - x),
                    std::abs(std::get<double>(trace.rows[k][1]) - y)});
    if (k == steps) break;
    double u = std::get<double>(in[k][0]);
    auto [k1x, k1y] = f(u, x, y);
    auto [k2x, k2y] = f(u, x + dt / 2 * k1x, y + dt / 2 * k1y);
    auto [k3x, k3y] = f(u, x + dt / 2 * k2x, y + dt / 2 * k2y);
    auto [k4x, k4y] = f(u, x + dt * k3x, y + dt * k3y);
    x += dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    y += dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
  }
  CHECK(gap < 1e-6);
  CHECK(trace.times.back() == doctest::Approx(10.0));
}

TEST_CASE("Euler and RK4 converge to a fine reference") {
  const double t_end = 2.0;
  auto make = [] {
    return compose_continuous(ab_wiring(), {{"a", integrator_box(0.5)}, {"b", leaky_box(-0.3)}});
  };
  // The input is a smooth function of time, so a finer grid refines it too.
  auto run = [&](double dt, Integrator integ) {
    std::size_t steps = steps_for(t_end, dt);
    return simulate(make(), held_sine(steps, dt), {steps, dt, integ});
  };
  auto ref = run(1e-5, Integrator::rk4);
  auto final_gap = [&](const SimTrace& t) {
    double gap = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      gap = std::max(gap, std::abs(std::get<double>(t.rows.back()[j]) - std::get<double>(ref.rows.back()[j])));
    }
    return gap;
  };
  double euler = final_gap(run(1e-3, Integrator::euler));
  double rk4 = final_gap(run(1e-3, Integrator::rk4));
  CHECK(euler < 1e-3);
  CHECK(rk4 < 1e-3);
}

TEST_CASE("decay reaches exp(-1) at t = 1") {
  ContinuousSystem c;
  c.interface = {{}, {{"y", PortKind::real()}}};
  c.state = {1.0};
  c.readout = [](std::span<const double> s) { return Values{s[0]}; };
  c.field = [](std::span<const double> s, ValuesView) { return std::vector<double>{-s[0]}; };
  c.passthrough = {std::nullopt};
  auto t = simulate(c, {}, {steps_for(1.0, 0.01), 0.01, Integrator::rk4});
  CHECK(t.rows.size() == 101);
  CHECK(std::abs(std::get<double>(t.rows.back()[0]) - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("zero fields keep every trajectory constant") {
  Rng rng(25);
  GenOptions o;
  o.kinds = {PortKind::real(), PortKind::vector(3)};
  auto d = random_diagram(rng, random_interface(rng, o), o);
  std::map<std::string, ContinuousSystem> assign;
  for (const auto& [id, iface] : d.inner) {
    auto c = random_continuous(rng, iface);
    c.field = [n = c.state.size()](std::span<const double>, ValuesView) { return std::vector<double>(n, 0.0); };
    assign.emplace(id, c);
  }
  auto comp = compose_continuous(d, assign);
  InputTrace in;
  for (int k = 0; k <= 50; ++k) in.push_back(random_values(rng, d.outer.inputs));
  SimConfig cfg{50, 0.1, Integrator::rk4, true};
  auto t = simulate(comp, in, cfg);
  for (const auto& s : t.states) CHECK(s == t.states.front());
}

TEST_CASE("simulate contracts") {
  auto ring_sys = compose_moore(ring(false), {{"p", not_delay(false)}, {"q", not_delay(false)}});
  SUBCASE("zero steps gives the initial row only") {
    auto t = simulate(ring_sys, {}, {0, 1.0});
    CHECK(t.rows.size() == 1);
    CHECK(t.times == std::vector<double>{0.0});
  }
  SUBCASE("deterministic") {
    Rng rng(26);
    GenOptions o;
    auto d = random_diagram(rng, random_interface(rng, o), o);
    std::map<std::string, MooreSystem> assign;
    for (const auto& [id, iface] : d.inner) assign.emplace(id, random_moore(rng, iface));
    InputTrace in;
    for (int k = 0; k <= 40; ++k) in.push_back(random_values(rng, d.outer.inputs));
    auto m = compose_moore(d, assign);
    std::ostringstream a, b;
    write_csv(a, simulate(m, in, {40, 0.5}));
    write_csv(b, simulate(m, in, {40, 0.5}));
    CHECK(a.str() == b.str());
  }
  SUBCASE("short input trace") {
    auto c = compose_continuous(ab_wiring(), {{"a", integrator_box(0)}, {"b", leaky_box(0)}});
    CHECK_THROWS_AS(simulate(c, held_sine(9, 0.1), {10, 0.1}), ShapeError);
    CHECK_NOTHROW(simulate(c, held_sine(10, 0.1), {10, 0.1}));
  }
  SUBCASE("non-finite values name the port and time") {
    ContinuousSystem c;
    c.interface = {{}, {{"boom", PortKind::real()}}};
    c.state = {1.0};
    c.readout = [](std::span<const double> s) { return Values{s[0]}; };
    c.field = [](std::span<const double> s, ValuesView) { return std::vector<double>{s[0] * s[0] * 1e100}; };
    c.passthrough = {std::nullopt};
    try {
      simulate(c, {}, {100, 0.1, Integrator::euler});
      FAIL("expected a NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.port() == "state[0]");
      CHECK(e.time() > 0.0);
    }
    MooreSystem m;
    m.interface = {{}, {{"boom", PortKind::real()}}};
    m.state = {0.0};
    m.readout = [](ValuesView s) {
      double k = std::get<double>(s[0]);
      return Values{k >= 3 ? std::nan("") : k};
    };
    m.update = [](ValuesView s, ValuesView) { return Values{std::get<double>(s[0]) + 1}; };
    m.passthrough = {std::nullopt};
    try {
      simulate(m, {}, {10, 0.5});
      FAIL("expected a NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(e.port() == "boom");
      CHECK(e.time() == 1.5);
    }
  }
  SUBCASE("csv layout") {
    SimTrace t;
    t.ports = {{"flag", PortKind::boolean()}, {"v", PortKind::vector(2)}, {"r", PortKind::real()}};
    t.times = {0.0, 0.5};
    t.rows = {{true, RealVector{1.0, 0.1}, 2.0}, {false, RealVector{-1.0, 0.0}, 1.0 / 3.0}};
    std::ostringstream out;
    write_csv(out, t);
    CHECK(out.str() ==
          "t,flag,v[0],v[1],r\n"
          "0,1,1,0.10000000000000001,2\n"
          "0.5,0,-1,0,0.33333333333333331\n");
  }
}
