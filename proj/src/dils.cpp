#include "dilskit/dils.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <set>

#include "dilskit/error.hpp"

namespace dilskit {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p;
  double total = 0.0;
  for (double l : logits) {
    p.push_back(std::exp(l - m));
    total += p.back();
  }
  for (auto& x : p) x /= total;
  return p;
}

ValidationReport validate_soft(const BoxInterface& outer,
                               const std::map<std::string, BoxInterface>& boxes,
                               const SoftWiring& wiring) {
  ValidationReport report;
  auto& out = report.violations;

  auto kind_at = [&](const PortRef& ref) -> std::optional<PortKind> {
    const std::vector<PortSpec>* side = nullptr;
    switch (ref.locus) {
      case Locus::outer_input:
        side = &outer.inputs;
        break;
      case Locus::outer_output:
        side = &outer.outputs;
        break;
      case Locus::inner_input:
      case Locus::inner_output: {
        auto it = boxes.find(ref.box);
        if (it == boxes.end()) {
          out.push_back({Rule::unknown_box, std::nullopt, "unknown box '" + ref.box + "'"});
          return std::nullopt;
        }
        side = ref.locus == Locus::inner_input ? &it->second.inputs : &it->second.outputs;
        break;
      }
    }
    for (const auto& p : *side) {
      if (p.name == ref.port) return p.kind;
    }
    out.push_back({Rule::unknown_port, std::nullopt, "unknown port " + to_string(ref)});
    return std::nullopt;
  };

  std::map<PortRef, int> seen;
  for (const auto& d : wiring.destinations) {
    if (d.dest.locus != Locus::inner_input && d.dest.locus != Locus::outer_output) {
      out.push_back({Rule::illegal_direction, std::nullopt,
                     to_string(d.dest) + " cannot be a destination"});
      continue;
    }
    auto dk = kind_at(d.dest);
    if (!dk) continue;
    ++seen[d.dest];
    if (d.candidates.empty()) {
      out.push_back({Rule::missing_feed, std::nullopt, to_string(d.dest) + ": no candidates"});
    }
    for (const auto& c : d.candidates) {
      auto label = to_string(c.source) + " -> " + to_string(d.dest);
      if (c.source.locus != Locus::outer_input && c.source.locus != Locus::inner_output) {
        out.push_back({Rule::illegal_direction, std::nullopt, label + ": source on the wrong side"});
        continue;
      }
      auto sk = kind_at(c.source);
      if (sk && *sk != *dk) {
        out.push_back({Rule::kind_mismatch, std::nullopt,
                       label + ": " + to_string(*sk) + " feeds " + to_string(*dk)});
      }
    }
  }
  auto check = [&](const PortRef& dest) {
    auto n = seen.count(dest) ? seen[dest] : 0;
    if (n == 0) {
      out.push_back({Rule::missing_feed, std::nullopt, to_string(dest) + ": not fed by any wire"});
    } else if (n > 1) {
      out.push_back({Rule::multiple_feeds, std::nullopt,
                     to_string(dest) + ": listed as a destination " + std::to_string(n) + " times"});
    }
  };
  for (const auto& [id, iface] : boxes) {
    for (const auto& p : iface.inputs) check(PortRef::in(id, p.name));
  }
  for (const auto& p : outer.outputs) check(PortRef::outer_out(p.name));
  return report;
}

DilsNetwork::DilsNetwork(BoxInterface outer, std::map<std::string, LearnerUnit> units,
                         SoftWiring wiring)
    : outer_(std::move(outer)), units_(std::move(units)), wiring_(std::move(wiring)) {
  for (const auto* side : {&outer_.inputs, &outer_.outputs}) {
    for (const auto& p : *side) {
      if (p.kind != PortKind::real()) {
        throw InvalidDiagram("soft-wired networks need real ports; '" + p.name + "' is " +
                                 to_string(p.kind),
                             {});
      }
    }
  }
  std::map<std::string, BoxInterface> boxes;
  for (const auto& [id, u] : units_) boxes.emplace(id, u.interface());
  auto report = validate_soft(outer_, boxes, wiring_);
  if (!report.ok()) {
    std::vector<std::string> details;
    for (const auto& v : report.violations) details.push_back(v.message);
    std::string message = "invalid soft wiring: " + details.front();
    throw InvalidDiagram(message, std::move(details));
  }
  std::sort(wiring_.destinations.begin(), wiring_.destinations.end(),
            [](const auto& a, const auto& b) { return a.dest < b.dest; });

  std::map<std::string, std::size_t> index;
  for (const auto& [id, u] : units_) {
    index.emplace(id, plan_.ids.size());
    plan_.ids.push_back(id);
  }
  const auto n = plan_.ids.size();
  plan_.unit_dest.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    plan_.unit_dest[u].resize(units_.at(plan_.ids[u]).w.size());
  }
  plan_.outer_dest.resize(outer_.outputs.size());
  std::vector<std::set<std::size_t>> preds(n);
  for (std::size_t k = 0; k < wiring_.destinations.size(); ++k) {
    const auto& d = wiring_.destinations[k];
    std::vector<std::pair<bool, std::size_t>> srcs;
    for (const auto& c : d.candidates) {
      if (c.source.locus == Locus::outer_input) {
        srcs.emplace_back(true, *outer_.input_index(c.source.port));
      } else {
        srcs.emplace_back(false, index.at(c.source.box));
      }
    }
    if (d.dest.locus == Locus::inner_input) {
      auto u = index.at(d.dest.box);
      plan_.unit_dest[u][*boxes.at(d.dest.box).input_index(d.dest.port)] = k;
      for (const auto& [outer_src, i] : srcs) {
        if (!outer_src) preds[u].insert(i);
      }
    } else {
      plan_.outer_dest[*outer_.output_index(d.dest.port)] = k;
    }
    plan_.sources.push_back(std::move(srcs));
  }

  std::vector<std::size_t> indegree(n);
  std::vector<std::set<std::size_t>> succ(n);
  for (std::size_t u = 0; u < n; ++u) {
    indegree[u] = preds[u].size();
    for (auto p : preds[u]) succ[p].insert(u);
  }
  std::set<std::size_t> ready;
  for (std::size_t u = 0; u < n; ++u) {
    if (indegree[u] == 0) ready.insert(u);
  }
  while (!ready.empty()) {
    auto u = *ready.begin();
    ready.erase(ready.begin());
    plan_.order.push_back(u);
    for (auto s : succ[u]) {
      if (--indegree[s] == 0) ready.insert(s);
    }
  }
  if (plan_.order.size() != n) {
    std::vector<std::string> stuck;
    std::string text;
    for (std::size_t u = 0; u < n; ++u) {
      if (indegree[u] > 0) {
        stuck.push_back(plan_.ids[u]);
        text += (text.empty() ? "" : ", ") + plan_.ids[u];
      }
    }
    throw CycleError("candidate wiring has a cycle through: " + text, stuck);
  }
}

LearnerUnit& DilsNetwork::unit(const std::string& id) {
  auto it = units_.find(id);
  if (it == units_.end()) throw UnknownName("no unit '" + id + "'");
  cache_.reset();
  return it->second;
}

SoftWiring& DilsNetwork::mutable_wiring() {
  cache_.reset();
  return wiring_;
}

std::vector<double> DilsNetwork::forward(std::span<const double> x) {
  if (x.size() != outer_.inputs.size()) {
    throw ShapeError("network input: expected " + std::to_string(outer_.inputs.size()) +
                     " values, got " + std::to_string(x.size()));
  }
  const auto n = plan_.ids.size();
  const auto nd = wiring_.destinations.size();
  Cache c;
  c.prob.resize(nd);
  c.value.resize(nd);
  c.eff.assign(nd, 0.0);
  c.z.assign(n, 0.0);
  c.y.assign(n, 0.0);

  auto mix = [&](std::size_t k) {
    const auto& d = wiring_.destinations[k];
    std::vector<double> logits;
    for (const auto& cand : d.candidates) logits.push_back(cand.logit);
    c.prob[k] = softmax(logits);
    double eff = 0.0;
    for (std::size_t i = 0; i < d.candidates.size(); ++i) {
      auto [outer_src, idx] = plan_.sources[k][i];
      double v = outer_src ? x[idx] : c.y[idx];
      c.value[k].push_back(v);
      eff += c.prob[k][i] * d.candidates[i].gain * v;
    }
    c.eff[k] = eff;
    return eff;
  };

  for (auto u : plan_.order) {
    const auto& unit = units_.at(plan_.ids[u]);
    std::vector<double> in;
    for (auto k : plan_.unit_dest[u]) in.push_back(mix(k));
    c.z[u] = unit.pre_activation(in);
    c.y[u] = activate(unit.act, c.z[u]);
    if (!std::isfinite(c.y[u])) {
      throw NonFiniteError("non-finite value at " + plan_.ids[u] + ".y", double(clock_),
                           plan_.ids[u] + ".y");
    }
  }
  std::vector<double> out;
  for (auto k : plan_.outer_dest) out.push_back(mix(k));
  cache_ = std::move(c);
  return out;
}

DilsGradients DilsNetwork::backward(std::span<const double> dy) const {
  if (!cache_) throw StaleCache("backward() needs a forward() with the current parameters");
  if (dy.size() != outer_.outputs.size()) throw ShapeError("output gradient has the wrong size");
  const auto& c = *cache_;
  const auto n = plan_.ids.size();
  DilsGradients g;
  g.dx.assign(outer_.inputs.size(), 0.0);
  g.dlogits.resize(wiring_.destinations.size());
  g.dgains.resize(wiring_.destinations.size());
  std::vector<double> dy_unit(n, 0.0);

  // Pushes the error at destination k back over its soft wires.
  auto unmix = [&](std::size_t k, double grad) {
    const auto& d = wiring_.destinations[k];
    for (std::size_t i = 0; i < d.candidates.size(); ++i) {
      double p = c.prob[k][i];
      double gain = d.candidates[i].gain;
      double v = c.value[k][i];
      g.dgains[k].push_back(grad * p * v);
      g.dlogits[k].push_back(grad * p * (gain * v - c.eff[k]));
      auto [outer_src, idx] = plan_.sources[k][i];
      (outer_src ? g.dx[idx] : dy_unit[idx]) += grad * p * gain;
    }
  };

  for (std::size_t j = 0; j < plan_.outer_dest.size(); ++j) unmix(plan_.outer_dest[j], dy[j]);
  for (auto it = plan_.order.rbegin(); it != plan_.order.rend(); ++it) {
    auto u = *it;
    const auto& unit = units_.at(plan_.ids[u]);
    double dz = dy_unit[u] * activate_derivative(unit.act, c.z[u]);
    UnitGradient ug;
    ug.db = dz;
    for (std::size_t i = 0; i < unit.w.size(); ++i) {
      auto k = plan_.unit_dest[u][i];
      ug.dw.push_back(dz * c.eff[k]);
      unmix(k, dz * unit.w[i]);
    }
    g.units.emplace(plan_.ids[u], std::move(ug));
  }
  return g;
}

void DilsNetwork::apply(const DilsGradients& g, double eta_param, double eta_wire) {
  for (auto& [id, unit] : units_) {
    if (!unit.trainable) continue;
    auto it = g.units.find(id);
    if (it == g.units.end()) continue;
    for (std::size_t i = 0; i < unit.w.size(); ++i) unit.w[i] -= eta_param * it->second.dw[i];
    unit.b -= eta_param * it->second.db;
  }
  for (std::size_t k = 0; k < wiring_.destinations.size() && k < g.dlogits.size(); ++k) {
    auto& cands = wiring_.destinations[k].candidates;
    for (std::size_t i = 0; i < cands.size() && i < g.dlogits[k].size(); ++i) {
      cands[i].logit -= eta_wire * g.dlogits[k][i];
      cands[i].gain -= eta_wire * g.dgains[k][i];
    }
  }
  cache_.reset();
}

RewiringSnapshot DilsNetwork::harden() const {
  RewiringSnapshot snap;
  snap.step = clock_;
  snap.hard.outer = outer_;
  for (const auto& [id, u] : units_) snap.hard.inner.emplace(id, u.interface());
  for (const auto& d : wiring_.destinations) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.candidates.size(); ++i) {
      if (d.candidates[i].logit > d.candidates[best].logit) best = i;
    }
    snap.hard.wires.push_back({d.candidates[best].source, d.dest});
  }
  normalize(snap.hard);
  return snap;
}

DilsNetwork from_dnn(const DiagramNet& net) {
  SoftWiring wiring;
  for (const auto& w : net.flat().wires) {
    wiring.destinations.push_back({w.dest, {Candidate{w.source, kEmbeddedLogit, 1.0}}});
  }
  return DilsNetwork(net.flat().outer, net.units(), std::move(wiring));
}

TraceLog run_online(DilsNetwork& n, std::span<const Example> stream, const OnlineConfig& cfg) {
  if (stream.empty()) throw ShapeError("the stream is empty");
  TraceLog log;
  for (const auto& p : n.outer().outputs) log.outputs.push_back(p.name);
  log.snapshots.push_back(n.harden());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    TraceRow row;
    row.step = n.clock();
    try {
      row.prediction = n.forward(stream[i].x);
    } catch (const NonFiniteError& e) {
      log.halt = Halt{n.clock(), i, e.what()};
      break;
    }
    row.loss = mse(row.prediction, stream[i].target);
    if (!std::isfinite(row.loss)) {
      log.halt = Halt{n.clock(), i, "non-finite loss"};
      break;
    }
    auto g = n.backward(mse_gradient(row.prediction, stream[i].target));
    log.rows.push_back(std::move(row));
    n.apply(g, cfg.eta_param, cfg.eta_wire);
    n.tick();
    if (cfg.snapshot_every > 0 && n.clock() % cfg.snapshot_every == 0) {
      log.snapshots.push_back(n.harden());
    }
  }
  return log;
}

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, const TraceLog& log) {
  out << "step,loss";
  for (const auto& name : log.outputs) out << ',' << name;
  out << '\n';
  for (const auto& r : log.rows) {
    out << r.step << ',' << fmt17(r.loss);
    for (double v : r.prediction) out << ',' << fmt17(v);
    out << '\n';
  }
}

RoutingTask make_routing_task(std::uint64_t seed, std::size_t steps) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> signal(-1.0, 1.0);
  std::uniform_real_distribution<double> head_start(0.1, 0.5);
  const std::size_t correct = rng() % 2;
  const std::size_t wrong = 1 - correct;

  BoxInterface outer{{{"x0", PortKind::real()}, {"x1", PortKind::real()}},
                     {{"y0", PortKind::real()}}};
  std::map<std::string, LearnerUnit> units;
  units.emplace("route", LearnerUnit{{1.0}, 0.0, Activation::identity, true});

  // The wrong line starts ahead so that a successful run has to reroute.
  std::vector<Candidate> cands(2);
  cands[0].source = PortRef::outer_in("x0");
  cands[1].source = PortRef::outer_in("x1");
  cands[wrong].logit = head_start(rng);
  cands[correct].logit = 0.0;

  SoftWiring wiring;
  wiring.destinations.push_back({PortRef::in("route", unit_input_name(0)), cands});
  wiring.destinations.push_back(
      {PortRef::outer_out("y0"), {Candidate{PortRef::out("route", std::string(kUnitOutput)), 0.0, 1.0}}});

  RoutingTask task{DilsNetwork(outer, std::move(units), std::move(wiring)), correct, {}};
  for (std::size_t k = 0; k < steps; ++k) {
    Example e;
    e.x = {signal(rng), signal(rng)};
    e.target = {e.x[correct]};
    task.stream.push_back(std::move(e));
  }
  return task;
}

}  // namespace dilskit
