// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "immgp/error.hpp"

namespace immgp::io {

namespace {

std::string location(const std::string& name, std::size_t line, std::size_t col) {
  return name + ": line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, const std::string& where) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError(where + ": cannot parse '" + std::string(cell) + "' as a number");
  }
  if (!std::isfinite(v)) throw ParseError(where + ": non-finite value '" + std::string(cell) + "'");
  return v;
}

// Header columns named prefix0, prefix1, ... in order; returns the count.
std::size_t count_prefixed(const std::vector<std::string_view>& cols, std::size_t from,
                           const std::string& prefix, const std::string& name) {
  std::size_t k = 0;
  while (from + k < cols.size()) {
    const std::string_view c = trim(cols[from + k]);
    if (c.substr(0, prefix.size()) != prefix) break;
    if (c != prefix + std::to_string(k)) {
      throw ParseError(location(name, 1, from + k + 1) + ": expected header '" + prefix +
                       std::to_string(k) + "', got '" + std::string(c) + "'");
    }
    ++k;
  }
  return k;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

void write_row(std::ostream& out, const Eigen::Ref<const RowVector>& row, bool leading_comma) {
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    if (k > 0 || leading_comma) out << ',';
    out << format_double(row[k]);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

Dataset read_dataset_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": missing header");
  const auto header = split_commas(line);
  const std::size_t d = count_prefixed(header, 0, "x", name);
  const std::size_t m = count_prefixed(header, d, "y", name);
  if (d == 0) throw ParseError(location(name, 1, 1) + ": header must start with x0");
  if (d + m != header.size()) {
    throw ParseError(location(name, 1, d + m + 1) + ": unexpected header column '" +
                     std::string(trim(header[d + m])) + "'");
  }
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != d + m) {
      throw ParseError(location(name, line_no, std::min(cells.size(), d + m) + 1) + ": expected " +
                       std::to_string(d + m) + " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < cells.size(); ++k) {
      values.push_back(parse_cell(cells[k], location(name, line_no, k + 1)));
    }
    ++rows;
  }
  Dataset out;
  const auto n = static_cast<Eigen::Index>(rows);
  out.X.resize(n, static_cast<Eigen::Index>(d));
  out.Y.resize(n, static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * (d + m);
    for (std::size_t k = 0; k < d; ++k) out.X(i, static_cast<Eigen::Index>(k)) = values[base + k];
    for (std::size_t k = 0; k < m; ++k) out.Y(i, static_cast<Eigen::Index>(k)) = values[base + d + k];
  }
  return out;
}

Dataset read_dataset_csv(const fs::path& path) {
  auto in = open_in(path);
  return read_dataset_csv(in, path.string());
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (Eigen::Index k = 0; k < data.input_dim(); ++k) out << (k > 0 ? "," : "") << 'x' << k;
  for (Eigen::Index k = 0; k < data.output_dim(); ++k) out << ",y" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    write_row(out, data.X.row(i), false);
    write_row(out, data.Y.row(i), true);
    out << '\n';
  }
}

void write_dataset_csv(const fs::path& path, const Dataset& data) {
  auto out = open_out(path);
  write_dataset_csv(out, data);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Matrix read_matrix_csv(const fs::path& path, const std::string& prefix) {
  auto in = open_in(path);
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": missing header");
  const auto header = split_commas(line);
  const std::size_t k = count_prefixed(header, 0, prefix, name);
  if (k == 0 || k != header.size()) {
    throw ParseError(location(name, 1, k + 1) + ": expected header " + prefix + "0.." + prefix + "k");
  }
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != k) {
      throw ParseError(location(name, line_no, std::min(cells.size(), k) + 1) + ": expected " +
                       std::to_string(k) + " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < k; ++c) values.push_back(parse_cell(cells[c], location(name, line_no, c + 1)));
    ++rows;
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) = values[static_cast<std::size_t>(i * out.cols() + c)];
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const Matrix& values, const std::string& prefix) {
  auto out = open_out(path);
  for (Eigen::Index k = 0; k < values.cols(); ++k) out << (k > 0 ? "," : "") << prefix << k;
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    write_row(out, values.row(i), false);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

json to_json(const Component& c) {
  return json{{"mu", to_json(c.mu)},         {"R", to_json(c.R)}, {"sigma0", c.sigma0},
              {"K", to_json(c.K)},           {"w", to_json(c.w)}, {"noise", to_json(c.noise)}};
}

json to_json(const MixtureState& s) {
  json comps = json::array();
  for (const Component& c : s.components) comps.push_back(to_json(c));
  return json{{"alpha", s.alpha}, {"assignments", s.assignments}, {"components", std::move(comps)}};
}

json to_json(const Hyperparams& hp) {
  return json{{"a0", hp.a0},   {"b0", hp.b0},   {"mu0", to_json(hp.mu0)}, {"R0", to_json(hp.R0)},
              {"W0", to_json(hp.W0)}, {"nu0", hp.nu0}, {"a1", hp.a1},   {"b1", hp.b1},
              {"W1", to_json(hp.W1)}, {"nu1", hp.nu1}, {"mu1", hp.mu1}, {"r1", hp.r1},
              {"a2", hp.a2},   {"b2", hp.b2}};
}

json to_json(const SamplerConfig& cfg) {
  return json{{"n_sweeps", cfg.n_sweeps},
              {"burn_in", cfg.burn_in},
              {"hmc_step", cfg.hmc_step},
              {"hmc_leapfrog", cfg.hmc_leapfrog},
              {"mh_tries_per_param", cfg.mh_tries_per_param},
              {"alpha_proposal_scale", cfg.alpha_proposal_scale},
              {"seed", cfg.seed}};
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw SchemaMismatch("expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaMismatch("ragged matrix row " + std::to_string(i));
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw SchemaMismatch("expected a vector (array)");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = j.at(static_cast<std::size_t>(k)).get<double>();
  return v;
}

Component component_from_json(const json& j) {
  Component c;
  c.mu = vector_from_json(j.at("mu"));
  c.R = matrix_from_json(j.at("R"));
  c.sigma0 = j.at("sigma0").get<double>();
  c.K = matrix_from_json(j.at("K"));
  c.w = vector_from_json(j.at("w"));
  c.noise = vector_from_json(j.at("noise"));
  return c;
}

MixtureState state_from_json(const json& j) {
  MixtureState s;
  s.alpha = j.at("alpha").get<double>();
  s.assignments = j.at("assignments").get<std::vector<std::size_t>>();
  for (const json& c : j.at("components")) s.components.push_back(component_from_json(c));
  return s;
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams hp;
  hp.a0 = j.at("a0").get<double>();
  hp.b0 = j.at("b0").get<double>();
  hp.mu0 = vector_from_json(j.at("mu0"));
  hp.R0 = matrix_from_json(j.at("R0"));
  hp.W0 = matrix_from_json(j.at("W0"));
  hp.nu0 = j.at("nu0").get<double>();
  hp.a1 = j.at("a1").get<double>();
  hp.b1 = j.at("b1").get<double>();
  hp.W1 = matrix_from_json(j.at("W1"));
  hp.nu1 = j.at("nu1").get<double>();
  hp.mu1 = j.at("mu1").get<double>();
  hp.r1 = j.at("r1").get<double>();
  hp.a2 = j.at("a2").get<double>();
  hp.b2 = j.at("b2").get<double>();
  return hp;
}

ChainWriter::ChainWriter(const fs::path& path, const ChainHeader& header)
    : out_(std::make_unique<std::ofstream>(open_out(path))), path_(path) {
  const json h{{"schema", kChainSchema},
               {"version", kChainVersion},
               {"input_dim", header.input_dim},
               {"output_dim", header.output_dim},
               {"hyperparams", to_json(header.hp)},
               {"config", header.config}};
  *out_ << h.dump() << '\n';
  if (!*out_) throw IoError("write failed for '" + path_.string() + "'");
}

void ChainWriter::append(const MixtureState& s) {
  *out_ << to_json(s).dump() << '\n';
  out_->flush();
  if (!*out_) throw IoError("write failed for '" + path_.string() + "'");
}

ChainFile read_chain(const fs::path& path) {
  auto in = open_in(path);
  const std::string name = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": empty chain file");
  ChainFile out;
  std::size_t line_no = 1;
  try {
    const json h = json::parse(line);
    if (h.value("schema", std::string()) != kChainSchema) {
      throw SchemaMismatch(name + ": not a chain file (schema '" + h.value("schema", std::string()) + "')");
    }
    if (h.at("version").get<int>() != kChainVersion) {
      throw SchemaMismatch(name + ": unsupported chain version " + h.at("version").dump());
    }
    out.header.input_dim = h.at("input_dim").get<Eigen::Index>();
    out.header.output_dim = h.at("output_dim").get<Eigen::Index>();
    out.header.hp = hyperparams_from_json(h.at("hyperparams"));
    out.header.config = h.value("config", json::object());
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      MixtureState s = state_from_json(json::parse(line));
      for (const Component& c : s.components) {
        if (c.input_dim() != out.header.input_dim || c.output_dim() != out.header.output_dim) {
          throw SchemaMismatch(name + ": line " + std::to_string(line_no) +
                               ": component dimensions differ from header");
        }
      }
      out.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError(name + ": line " + std::to_string(line_no) + ": " + e.what());
  }
  return out;
}

DiagnosticsWriter::DiagnosticsWriter(const fs::path& path)
    : out_(std::make_unique<std::ofstream>(open_out(path))), path_(path) {
  *out_ << "sweep,num_components,alpha,log_joint,sigma0_accept,K_accept,w_accept,noise_accept,"
           "alpha_accept,hmc_divergent\n";
}

void DiagnosticsWriter::append(const SweepDiagnostics& d) {
  *out_ << d.sweep << ',' << d.num_components << ',' << format_double(d.alpha) << ','
        << format_double(d.log_joint) << ',' << format_double(d.sigma0.rate()) << ','
        << format_double(d.K.rate()) << ',' << format_double(d.w.rate()) << ','
        << format_double(d.noise.rate()) << ',' << format_double(d.alpha_moves.rate()) << ','
        << d.hmc_divergent << '\n';
  if (!*out_) throw IoError("write failed for '" + path_.string() + "'");
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  auto in = open_in(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint64_t file_digest(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : read_file(path)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace immgp::io
