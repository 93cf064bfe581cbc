#include "drfos/errors.hpp"
#include "drfos/fda_core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace drfos::fda {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

[[noreturn]] void fail_at(std::size_t row, std::size_t line, std::string_view column, const std::string& what) {
  std::ostringstream msg;
  msg << "dataset row " << row << " (line " << line << "), column " << column << ": " << what;
  throw ValidationError(msg.str());
}

[[noreturn]] void fail_header(const std::string& what) { throw ValidationError("dataset header: " + what); }

void append_shortest(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void append_digits(std::string& out, double v, int digits) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  out.append(buf, ptr);
}

}  // namespace

ObservationalDataset parse_dataset(std::string_view text) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      lines.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }
  if (lines.empty() || trim(lines.front()).empty()) fail_header("missing header line");

  const auto header = split_fields(trim(lines.front()));
  std::vector<std::string> names;
  for (auto h : header) names.emplace_back(trim(h));
  if (names.front() != "A") fail_header("first column must be 'A', found '" + names.front() + "'");

  std::size_t p = 0;
  std::size_t col = 1;
  while (col < names.size() && names[col].rfind("Y@", 0) != 0) {
    const auto expected = "X" + std::to_string(p + 1);
    if (names[col] != expected)
      fail_header("column " + std::to_string(col + 1) + " is '" + names[col] + "', expected '" + expected +
                  "' or an outcome column 'Y@<t>'");
    ++p;
    ++col;
  }
  std::vector<double> grid_points;
  for (; col < names.size(); ++col) {
    if (names[col].rfind("Y@", 0) != 0)
      fail_header("column " + std::to_string(col + 1) + " ('" + names[col] + "') follows outcome columns but is not 'Y@<t>'");
    double t = 0;
    if (!parse_double(std::string_view(names[col]).substr(2), t))
      fail_header("cannot parse grid point in column '" + names[col] + "'");
    grid_points.push_back(t);
  }
  if (grid_points.size() < 2) fail_header("need at least 2 outcome columns 'Y@<t>'");
  GridPtr grid;
  try {
    grid = make_grid(grid_points);
  } catch (const std::invalid_argument& e) {
    fail_header(std::string("invalid outcome grid: ") + e.what());
  }

  const auto width = names.size();
  const auto m = grid_points.size();
  std::vector<std::uint8_t> treatment;
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t row = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto line = trim(lines[li]);
    if (line.empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() > width) {
      std::ostringstream what;
      what << "row has " << fields.size() << " fields but the header has " << width;
      fail_at(row, li + 1, names[width - 1], what.str());
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (c >= fields.size() || trim(fields[c]).empty()) fail_at(row, li + 1, names[c], "missing value");
      double v = 0;
      const auto f = trim(fields[c]);
      if (!parse_double(f, v)) fail_at(row, li + 1, names[c], "cannot parse '" + std::string(f) + "' as a number");
      if (!std::isfinite(v)) fail_at(row, li + 1, names[c], "non-finite value '" + std::string(f) + "'");
      if (c == 0) {
        if (v != 0.0 && v != 1.0) fail_at(row, li + 1, names[c], "treatment must be 0 or 1, found " + std::string(f));
        treatment.push_back(static_cast<std::uint8_t>(v));
      } else if (c <= p) {
        xs.push_back(v);
      } else {
        ys.push_back(v);
      }
    }
  }
  if (row == 0) throw ValidationError("dataset: no data rows");

  const auto n = static_cast<Eigen::Index>(row);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) x(i, static_cast<Eigen::Index>(k)) = xs[static_cast<std::size_t>(i) * p + k];
    for (std::size_t j = 0; j < m; ++j) y(i, static_cast<Eigen::Index>(j)) = ys[static_cast<std::size_t>(i) * m + j];
  }
  return ObservationalDataset(std::move(grid), std::move(treatment), std::move(x), std::move(y));
}

ObservationalDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dataset(buf.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_dataset(const ObservationalDataset& data) {
  std::string out = "A";
  const auto p = data.num_covariates();
  for (std::size_t k = 0; k < p; ++k) out += ",X" + std::to_string(k + 1);
  for (double t : data.grid()->points()) {
    out += ",Y@";
    append_digits(out, t, 10);
  }
  out += '\n';
  const auto& x = data.covariates();
  const auto& y = data.outcomes();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += data.treatment()[i] ? '1' : '0';
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      out += ',';
      append_shortest(out, x(r, k));
    }
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      out += ',';
      append_shortest(out, y(r, j));
    }
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const ObservationalDataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << format_dataset(data);
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace drfos::fda
