#pragma once

// The experiment CSV: one tidy row per (sweep point, method, eval mode, seed).
//
//   sweep_var,value,method,eval_mode,seed,accuracy,d_tv_hat,kappa_hat,eps_ab,eps_b,wall_s,status
//
// Numbers are written in shortest round-trip form; a missing number is an
// empty field. eval_mode is LE, FT, or empty for rows without a step 3
// (pretrain, distill, diagnostics). status is "ok" or "diverged". Text fields may not contain
// commas, quotes or newlines.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cmcd {

struct CsvRow {
  std::string sweep_var;  // gap, paired, fewshot, alpha; empty for single runs
  double value = 0.0;     // sweep-point value; NaN for single runs
  std::string method;
  std::string eval_mode;  // LE, FT or empty
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // NaN when the row has no evaluation
  double d_tv_hat = 0.0;
  double kappa_hat = 0.0;
  double eps_ab = 0.0;
  double eps_b = 0.0;
  double wall_s = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

extern const char* const kCsvHeader;

std::string format_number(double v);  // NaN -> ""
std::string format_row(const CsvRow& row);

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);
/// Appends, writing the header first when the file is new or empty.
void append_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

/// Throws FormatError with the line number on any malformed line.
std::vector<CsvRow> read_csv(std::istream& in, const std::string& origin = "<csv>");
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

}  // namespace cmcd
