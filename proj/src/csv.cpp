#include "dilskit/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dilskit/dsl.hpp"

namespace dilskit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::pair<std::string_view, int>> cells(std::string_view line) {
  std::vector<std::pair<std::string_view, int>> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    auto raw = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    std::size_t lead = 0;
    while (lead < raw.size() && (raw[lead] == ' ' || raw[lead] == '\t')) ++lead;
    out.emplace_back(trim(raw), static_cast<int>(start + lead) + 1);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::string::npos;
}

Table parse_table(std::string_view text) {
  Table t;
  int line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    auto row = cells(line);
    if (!have_header) {
      std::set<std::string> seen;
      for (auto [c, col] : row) {
        if (c.empty()) throw ParseError("empty column name", {line_no, col});
        if (!seen.insert(std::string(c)).second) {
          throw ParseError("duplicate column '" + std::string(c) + "'", {line_no, col});
        }
        t.header.emplace_back(c);
      }
      have_header = true;
      continue;
    }
    if (row.size() != t.header.size()) {
      throw ParseError("expected " + std::to_string(t.header.size()) + " cells, found " +
                           std::to_string(row.size()),
                       {line_no, 1});
    }
    std::vector<double> values;
    for (auto [c, col] : row) {
      double v = 0.0;
      auto [end, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || ec != std::errc() || end != c.data() + c.size()) {
        throw ParseError("not a number: '" + std::string(c) + "'", {line_no, col});
      }
      values.push_back(v);
    }
    t.rows.push_back(std::move(values));
  }
  if (!have_header) throw ParseError("missing header row", {1, 1});
  return t;
}

std::vector<Example> examples_from(const Table& t, std::size_t inputs, std::size_t outputs) {
  std::vector<std::size_t> xs, ys;
  for (std::size_t i = 0; i < inputs; ++i) {
    auto c = t.column("x" + std::to_string(i));
    if (c == std::string::npos) throw ShapeError("data has no column x" + std::to_string(i));
    xs.push_back(c);
  }
  for (std::size_t i = 0; i < outputs; ++i) {
    auto c = t.column("y" + std::to_string(i));
    if (c == std::string::npos) throw ShapeError("data has no column y" + std::to_string(i));
    ys.push_back(c);
  }
  if (t.header.size() != inputs + outputs) {
    throw ShapeError("data has " + std::to_string(t.header.size()) + " columns, expected " +
                     std::to_string(inputs) + " inputs and " + std::to_string(outputs) + " targets");
  }
  std::vector<Example> out;
  for (const auto& row : t.rows) {
    Example e;
    for (auto c : xs) e.x.push_back(row[c]);
    for (auto c : ys) e.target.push_back(row[c]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> examples_from(const Table& t) {
  std::size_t inputs = 0, outputs = 0;
  for (const auto& h : t.header) {
    if (!h.empty() && h[0] == 'x') ++inputs;
    if (!h.empty() && h[0] == 'y') ++outputs;
  }
  return examples_from(t, inputs, outputs);
}

InputTrace inputs_from(const Table& t, const BoxInterface& outer) {
  std::set<std::size_t> used;
  if (auto tc = t.column("t"); tc != std::string::npos) used.insert(tc);
  auto need = [&](const std::string& name) {
    auto c = t.column(name);
    if (c == std::string::npos) throw ShapeError("inputs have no column '" + name + "'");
    used.insert(c);
    return c;
  };
  struct Slot {
    PortKind kind;
    std::vector<std::size_t> cols;
  };
  std::vector<Slot> slots;
  for (const auto& p : outer.inputs) {
    Slot s{p.kind, {}};
    if (p.kind.kind == ValueKind::real_vector) {
      for (int i = 0; i < p.kind.dim; ++i) s.cols.push_back(need(p.name + "[" + std::to_string(i) + "]"));
    } else {
      s.cols.push_back(need(p.name));
    }
    slots.push_back(std::move(s));
  }
  if (used.size() != t.header.size()) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      if (!used.count(i)) throw ShapeError("inputs have unexpected column '" + t.header[i] + "'");
    }
  }
  InputTrace trace;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Values row;
    for (const auto& s : slots) {
      const auto& data = t.rows[r];
      switch (s.kind.kind) {
        case ValueKind::boolean: {
          double v = data[s.cols[0]];
          if (v != 0.0 && v != 1.0) {
            throw ShapeError("row " + std::to_string(r + 1) + ": boolean input '" +
                             t.header[s.cols[0]] + "' must be 0 or 1");
          }
          row.emplace_back(v == 1.0);
          break;
        }
        case ValueKind::real:
          row.emplace_back(data[s.cols[0]]);
          break;
        case ValueKind::real_vector: {
          RealVector v;
          for (auto c : s.cols) v.push_back(data[c]);
          row.emplace_back(std::move(v));
          break;
        }
      }
    }
    trace.push_back(std::move(row));
  }
  return trace;
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into '" + path.string() + "'");
  }
}

}  // namespace dilskit
