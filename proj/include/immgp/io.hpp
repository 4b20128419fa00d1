// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "immgp/gibbs.hpp"
#include "immgp/model.hpp"

namespace immgp::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kChainSchema = "immgp-chain";
inline constexpr int kChainVersion = 1;

// Dataset CSV: header x0..x{D-1},y0..y{M-1}; values as %.17g. Y may have
// zero columns on read. NaN/Inf and malformed cells raise ParseError naming
// the 1-based line and column.
Dataset read_dataset_csv(std::istream& in, const std::string& name = "<stream>");
Dataset read_dataset_csv(const fs::path& path);
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const fs::path& path, const Dataset& data);

// Plain numeric table with header prefix0..prefix{k-1}.
Matrix read_matrix_csv(const fs::path& path, const std::string& prefix);
void write_matrix_csv(const fs::path& path, const Matrix& values, const std::string& prefix);

std::string format_double(double v);

json to_json(const Matrix& m);
json to_json(const Vector& v);
json to_json(const Component& c);
json to_json(const MixtureState& s);
json to_json(const Hyperparams& hp);
json to_json(const SamplerConfig& cfg);

Matrix matrix_from_json(const json& j);
Vector vector_from_json(const json& j);
Component component_from_json(const json& j);
MixtureState state_from_json(const json& j);
Hyperparams hyperparams_from_json(const json& j);

/// Line-delimited chain file. The first line is a header
/// {"schema", "version", "input_dim", "output_dim", "hyperparams", "config"};
/// each further line is one retained MixtureState.
struct ChainHeader {
  Eigen::Index input_dim = 0;
  Eigen::Index output_dim = 0;
  Hyperparams hp;
  json config;
};

class ChainWriter {
 public:
  ChainWriter(const fs::path& path, const ChainHeader& header);
  void append(const MixtureState& s);

 private:
  std::unique_ptr<std::ofstream> out_;
  fs::path path_;
};

struct ChainFile {
  ChainHeader header;
  std::vector<MixtureState> samples;
};

ChainFile read_chain(const fs::path& path);

class DiagnosticsWriter {
 public:
  explicit DiagnosticsWriter(const fs::path& path);
  void append(const SweepDiagnostics& d);

 private:
  std::unique_ptr<std::ofstream> out_;
  fs::path path_;
};

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

std::string read_file(const fs::path& path);
// FNV-1a over the file bytes.
std::uint64_t file_digest(const fs::path& path);

}  // namespace immgp::io
