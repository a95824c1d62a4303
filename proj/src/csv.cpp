#include "cmcd/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cmcd/errors.hpp"

namespace cmcd {

const char* const kCsvHeader =
    "sweep_var,value,method,eval_mode,seed,accuracy,d_tv_hat,kappa_hat,eps_ab,eps_b,wall_s,"
    "status";

namespace {

constexpr std::size_t kColumns = 12;

void check_text(const std::string& s, const char* column) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw FormatError(std::string("csv column ") + column + ": '" + s +
                      "' contains a reserved character");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos
                                                              : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, const char* column) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(std::string("column ") + column + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_row(const CsvRow& r) {
  check_text(r.sweep_var, "sweep_var");
  check_text(r.method, "method");
  check_text(r.eval_mode, "eval_mode");
  check_text(r.status, "status");
  std::string s;
  s += r.sweep_var + ',' + format_number(r.value) + ',' + r.method + ',' + r.eval_mode +
       ',' + std::to_string(r.seed) + ',' + format_number(r.accuracy) + ',' +
       format_number(r.d_tv_hat) + ',' + format_number(r.kappa_hat) + ',' +
       format_number(r.eps_ab) + ',' +
       format_number(r.eps_b) + ',' + format_number(r.wall_s) + ',' + r.status;
  return s;
}

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  write_csv(out, rows);
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

void append_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) ||
                     std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  if (fresh) out << kCsvHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

std::vector<CsvRow> read_csv(std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t line_no = 1;
  auto fail = [&](const std::string& msg) {
    throw FormatError(origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  if (!std::getline(in, line)) fail("empty file, expected a header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) fail("unexpected header '" + line + "'");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != kColumns) {
      fail("expected " + std::to_string(kColumns) + " fields, got " +
           std::to_string(f.size()));
    }
    CsvRow r;
    try {
      r.sweep_var = f[0];
      r.value = parse_double(f[1], "value");
      r.method = f[2];
      r.eval_mode = f[3];
      const auto [ptr, ec] =
          std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.seed);
      if (f[4].empty() || ec != std::errc() || ptr != f[4].data() + f[4].size()) {
        throw FormatError("column seed: '" + f[4] + "' is not an unsigned integer");
      }
      r.accuracy = parse_double(f[5], "accuracy");
      r.d_tv_hat = parse_double(f[6], "d_tv_hat");
      r.kappa_hat = parse_double(f[7], "kappa_hat");
      r.eps_ab = parse_double(f[8], "eps_ab");
      r.eps_b = parse_double(f[9], "eps_b");
      r.wall_s = parse_double(f[10], "wall_s");
      r.status = f[11];
    } catch (const FormatError& e) {
      fail(e.what());
    }
    if (r.method.empty()) fail("empty method");
    if (!r.eval_mode.empty() && r.eval_mode != "LE" && r.eval_mode != "FT") {
      fail("eval_mode must be LE, FT or empty, got '" + r.eval_mode + "'");
    }
    if (r.status != "ok" && r.status != "diverged") {
      fail("status must be ok or diverged, got '" + r.status + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  return read_csv(in, path.string());
}

}  // namespace cmcd
