#pragma once

#include <Eigen/Dense>
#include <string>

namespace knockoff {

/// Shortest decimal string that round-trips to exactly the same double
/// (std::to_chars general form). Infinities and NaN print as inf/-inf/nan.
std::string format_double(double value);

/// Read a dense matrix from a comma-delimited text file: one row per line,
/// blank lines and lines starting with '#' skipped. All rows must have the
/// same number of fields. Throws IoError on unreadable files or malformed
/// numeric fields.
Eigen::MatrixXd read_matrix(const std::string& path);

/// Write a dense matrix in the same comma-delimited format, one row per
/// line, entries in shortest round-trip form. Throws IoError when the file
/// cannot be opened or written.
void write_matrix(const Eigen::MatrixXd& m, const std::string& path);

}  // namespace knockoff
