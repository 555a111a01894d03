// dilskit: command-line front end for diagrams, simulation and training.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "dilskit/csv.hpp"
#include "dilskit/dils.hpp"
#include "dilskit/dsl.hpp"
#include "dilskit/dynamics.hpp"
#include "dilskit/learn.hpp"

namespace fs = std::filesystem;
using namespace dilskit;

namespace {

enum Exit { ok = 0, invalid = 1, io = 2, parse = 3, shape = 4, numeric = 5 };

// Thrown after diagnostics have been printed.
struct Rejected {
  int code;
};

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("dilskit");
  logger->set_pattern("%l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DILS_LOG")) {
    std::string level(env);
    if (level == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (level == "info") {
      spdlog::set_level(spdlog::level::info);
    } else if (level == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else {
      spdlog::warn("ignoring DILS_LOG={}, expected error, info or debug", level);
    }
  }
}

Document load_document(const std::string& file) {
  std::string text = read_file(file);
  spdlog::debug("read {} bytes from {}", text.size(), file);
  try {
    return fs::path(file).extension() == ".json" ? from_json(text) : parse_document(text);
  } catch (const ParseError& e) {
    std::cerr << file << ":" << e.what() << "\n";
    throw Rejected{Exit::parse};
  }
}

// Loads and checks a document; prints diagnostics and rejects invalid ones.
Document load_valid(const std::string& file) {
  Document doc = load_document(file);
  auto diags = check(doc);
  if (!diags.empty()) {
    for (const auto& d : diags) std::cout << format_diagnostic(d, file) << "\n";
    throw Rejected{Exit::invalid};
  }
  return doc;
}

Table load_table(const std::string& file) {
  std::string text = read_file(file);
  try {
    return parse_table(text);
  } catch (const ParseError& e) {
    std::cerr << file << ":" << e.what() << "\n";
    throw Rejected{Exit::parse};
  }
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty()) {
    std::cout << content;
  } else {
    write_file_atomic(out, content);
    spdlog::info("wrote {}", out);
  }
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& spec) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ShapeError("--mlp expects positive layer sizes like 2,2,1, got '" + spec + "'");
    }
  }
  if (out.size() < 2) throw ShapeError("--mlp needs at least two layers");
  return out;
}

std::string loss_csv(const std::vector<double>& losses, const char* header) {
  std::string s = std::string(header) + "\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    s += std::to_string(i + 1) + "," + format_real(losses[i]) + "\n";
  }
  return s;
}

std::string examples_csv(const std::vector<Example>& data) {
  std::string s;
  if (data.empty()) return s;
  for (std::size_t i = 0; i < data[0].x.size(); ++i) s += (i ? ",x" : "x") + std::to_string(i);
  for (std::size_t i = 0; i < data[0].target.size(); ++i) s += ",y" + std::to_string(i);
  s += "\n";
  for (const auto& e : data) {
    std::string row;
    for (double v : e.x) row += (row.empty() ? "" : ",") + format_real(v);
    for (double v : e.target) row += "," + format_real(v);
    s += row + "\n";
  }
  return s;
}

struct Options {
  std::string file, data, out, format = "dsl", mlp, act = "tanh";
  std::vector<std::string> positional;
  std::uint64_t seed = 0;
  double dt = -1.0, t_end = -1.0, eta = 0.1, eta_wire = 0.1;
  long steps = -1;
  std::size_t epochs = 100, snapshot_every = 100;
  std::string integrator = "rk4";
};

int cmd_validate(const Options& o) {
  Document doc = load_document(o.file);
  auto diags = check(doc);
  for (const auto& d : diags) std::cout << format_diagnostic(d, o.file) << "\n";
  if (!diags.empty()) return Exit::invalid;
  std::cout << o.file << ": ok\n";
  return Exit::ok;
}

int cmd_flatten(const Options& o) {
  emit(o.out, serialize(flatten(load_valid(o.file))));
  return Exit::ok;
}

int cmd_simulate(const Options& o) {
  Document doc = load_valid(o.file);
  const auto& outer = doc.tree.diagram.outer;
  InputTrace inputs;
  if (!o.data.empty()) {
    inputs = inputs_from(load_table(o.data), outer);
  } else if (!outer.inputs.empty()) {
    throw ShapeError("the diagram has inputs; an inputs CSV is required");
  }
  const SystemKind kind = system_kind(doc);
  SimConfig cfg;
  // Discrete systems count steps of one time unit unless told otherwise.
  cfg.dt = o.dt > 0 ? o.dt : kind == SystemKind::continuous ? 0.01 : 1.0;
  cfg.integrator = o.integrator == "euler" ? Integrator::euler : Integrator::rk4;
  if (o.steps >= 0 && o.t_end >= 0) throw ShapeError("give either --steps or --t-end, not both");
  if (o.steps >= 0) {
    cfg.steps = static_cast<std::size_t>(o.steps);
  } else if (o.t_end >= 0) {
    cfg.steps = steps_for(o.t_end, cfg.dt);
  } else if (!inputs.empty()) {
    cfg.steps = inputs.size() - 1;
  }
  SimTrace trace;
  switch (kind) {
    case SystemKind::combinational:
      trace = simulate(build_combinational(doc), inputs, cfg);
      break;
    case SystemKind::moore:
      trace = simulate(build_moore(doc), inputs, cfg);
      break;
    case SystemKind::continuous:
      trace = simulate(build_continuous(doc), inputs, cfg);
      break;
  }
  std::ostringstream csv;
  write_csv(csv, trace);
  emit(o.out, csv.str());
  return Exit::ok;
}

int cmd_train(const Options& o) {
  std::string data_file;
  std::optional<DiagramNet> net;
  if (!o.mlp.empty()) {
    if (o.positional.size() != 1) throw ShapeError("with --mlp, give only the data file");
    data_file = o.positional[0];
    auto sizes = parse_sizes(o.mlp);
    net.emplace(unfold_mlp(sizes, parse_activation(o.act), o.seed));
  } else {
    if (o.positional.size() != 2) throw ShapeError("expected a network file and a data file, or --mlp");
    net.emplace(to_diagram_net(load_valid(o.positional[0])));
    data_file = o.positional[1];
  }
  auto data = examples_from(load_table(data_file), net->input_count(), net->output_count());
  if (data.empty()) throw ShapeError("the data file has no rows");
  make_dir(o.out);
  fs::path dir(o.out);
  write_file_atomic(dir / "initial.dsl", serialize(from_diagram_net(*net)));
  spdlog::info("training {} units on {} examples for {} epochs", net->units().size(), data.size(),
               o.epochs);
  TrainResult r = train(*net, data, {o.epochs, o.eta});
  write_file_atomic(dir / "loss.csv", loss_csv(r.epoch_loss, "epoch,mean_loss"));
  write_file_atomic(dir / "steps.csv", loss_csv(r.step_loss, "step,loss"));
  write_file_atomic(dir / "params.dsl", serialize(from_diagram_net(*net)));
  if (!r.epoch_loss.empty()) spdlog::info("final mean loss {}", r.epoch_loss.back());
  return Exit::ok;
}

std::string snapshot_name(std::uint64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "snapshot_%08llu.json", static_cast<unsigned long long>(step));
  return buf;
}

int cmd_run_online(const Options& o) {
  DilsNetwork n = to_dils_network(load_valid(o.file));
  auto stream = examples_from(load_table(o.data), n.outer().inputs.size(), n.outer().outputs.size());
  if (stream.empty()) throw ShapeError("the stream has no rows");
  make_dir(o.out);
  fs::path dir(o.out);
  TraceLog log = run_online(n, stream, {o.eta, o.eta_wire, o.snapshot_every});
  std::ostringstream trace;
  write_trace_csv(trace, log);
  write_file_atomic(dir / "trace.csv", trace.str());
  for (const auto& s : log.snapshots) {
    write_file_atomic(dir / snapshot_name(s.step), to_json(s.hard));
  }
  write_file_atomic(dir / "network.dsl", serialize(from_dils_network(n)));
  spdlog::info("{} steps, {} snapshots", log.rows.size(), log.snapshots.size());
  if (log.halt) {
    std::cerr << "halted at step " << log.halt->step << " (stream row " << log.halt->position + 1
              << "): " << log.halt->reason << "\n";
    return Exit::numeric;
  }
  return Exit::ok;
}

int cmd_export(const Options& o) {
  Document doc = load_valid(o.file);
  if (o.format == "dot") {
    emit(o.out, export_dot(doc));
  } else if (o.format == "json") {
    emit(o.out, to_json(doc));
  } else {
    emit(o.out, serialize(doc));
  }
  return Exit::ok;
}

int cmd_gen_routing(const Options& o) {
  if (o.steps < 0) throw ShapeError("--steps is required");
  RoutingTask task = make_routing_task(o.seed, static_cast<std::size_t>(o.steps));
  make_dir(o.out);
  fs::path dir(o.out);
  write_file_atomic(dir / "network.dsl", serialize(from_dils_network(task.network)));
  write_file_atomic(dir / "stream.csv", examples_csv(task.stream));
  nlohmann::ordered_json info = {
      {"seed", o.seed}, {"steps", o.steps}, {"correct_line", task.correct_line}};
  write_file_atomic(dir / "task.json", info.dump(2) + "\n");
  std::cout << "correct line: x" << task.correct_line << "\n";
  return Exit::ok;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Wiring diagrams, compositional simulation and soft-wired learners."};
  app.require_subcommand(1);
  Options o;

  auto* validate = app.add_subcommand("validate", "Check a diagram document");
  validate->add_option("file", o.file, "Diagram (.dsl or .json)")->required();

  auto* flat = app.add_subcommand("flatten", "Substitute all nested bodies into one level");
  flat->add_option("file", o.file)->required();
  flat->add_option("--out", o.out, "Output file (default stdout)");

  auto* sim = app.add_subcommand("simulate", "Simulate the system described by the attachments");
  sim->add_option("file", o.file)->required();
  sim->add_option("inputs", o.data, "Inputs CSV (t,<input ports>)");
  sim->add_option("--steps", o.steps, "Number of steps (default: input rows - 1)")->check(CLI::NonNegativeNumber);
  sim->add_option("--t-end", o.t_end, "Simulate up to this time instead")->check(CLI::NonNegativeNumber);
  sim->add_option("--dt", o.dt, "Step size (default 0.01 for ode, 1 otherwise)")->check(CLI::PositiveNumber);
  sim->add_option("--integrator", o.integrator, "ode integrator")->capture_default_str()->check(CLI::IsMember({"euler", "rk4"}));
  sim->add_option("--out", o.out, "Trace CSV (default stdout)");

  auto* tr = app.add_subcommand("train", "Per-example SGD on a unit network");
  tr->add_option("files", o.positional, "[NETWORK] DATA.csv")->required()->expected(1, 2);
  tr->add_option("--mlp", o.mlp, "Layer sizes, e.g. 2,2,1");
  tr->add_option("--act", o.act, "Activation for --mlp")->capture_default_str()->check(CLI::IsMember({"identity", "sigmoid", "tanh", "relu"}));
  tr->add_option("--epochs", o.epochs, "Passes over the data")->capture_default_str();
  tr->add_option("--eta", o.eta, "Learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", o.seed, "Initialisation seed for --mlp")->capture_default_str();
  tr->add_option("--out", o.out, "Output directory")->required();

  auto* online = app.add_subcommand("run-online", "Stream examples through a soft-wired network");
  online->add_option("network", o.file)->required();
  online->add_option("stream", o.data)->required();
  online->add_option("--eta", o.eta, "Unit learning rate")->check(CLI::NonNegativeNumber);
  online->add_option("--eta-wire", o.eta_wire, "Wiring learning rate")->check(CLI::NonNegativeNumber);
  online->add_option("--snapshot-every", o.snapshot_every, "Steps between wiring snapshots (0: never)")->capture_default_str();
  online->add_option("--out", o.out, "Output directory")->required();

  auto* exp = app.add_subcommand("export", "Convert a document to dot, json or dsl");
  exp->add_option("file", o.file)->required();
  exp->add_option("--format", o.format, "Output format")->capture_default_str()->check(CLI::IsMember({"dot", "json", "dsl"}));
  exp->add_option("--out", o.out, "Output file (default stdout)");

  auto* gen = app.add_subcommand("gen-routing", "Write a two-line routing task");
  gen->add_option("--seed", o.seed, "Task seed")->capture_default_str();
  gen->add_option("--steps", o.steps, "Stream length")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? Exit::ok : Exit::io;
  }

  try {
    if (validate->parsed()) return cmd_validate(o);
    if (flat->parsed()) return cmd_flatten(o);
    if (sim->parsed()) return cmd_simulate(o);
    if (tr->parsed()) return cmd_train(o);
    if (online->parsed()) return cmd_run_online(o);
    if (exp->parsed()) return cmd_export(o);
    if (gen->parsed()) return cmd_gen_routing(o);
  } catch (const Rejected& r) {
    return r.code;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::io;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::parse;
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::numeric;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::shape;
  } catch (const UnknownName& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::shape;
  } catch (const InvalidDiagram& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return Exit::invalid;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::invalid;
  }
  return Exit::ok;
}
