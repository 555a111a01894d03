#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dilskit/dynamics.hpp"
#include "dilskit/learn.hpp"

namespace dilskit {

// A numeric CSV file with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Column index by name, or npos.
  std::size_t column(std::string_view name) const;
};

// Throws ParseError with the line and column of the offending cell.
Table parse_table(std::string_view text);

// Columns x0..x{n-1} and y0..y{m-1}, any order. Throws ShapeError.
std::vector<Example> examples_from(const Table& t, std::size_t inputs, std::size_t outputs);
// Infers the sizes from the x*/y* column names.
std::vector<Example> examples_from(const Table& t);

// One column per scalar input port, `name[i]` per vector component, 0/1 for
// booleans. A `t` column is allowed and ignored.
InputTrace inputs_from(const Table& t, const BoxInterface& outer);

// 17 significant digits.
std::string format_real(double x);

std::string read_file(const std::filesystem::path& path);  // throws IoError
// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace dilskit
