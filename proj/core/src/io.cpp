#include "nmq/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <system_error>

#include "nmq/errors.hpp"

namespace nmq {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_long(long v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open '" + tmp.string() + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("rename '" + tmp.string() + "' -> '" + path.string() +
                  "' failed: " + ec.message());
  }
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("csv row width does not match header");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw IoError("sha256 digest computation failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

void write_manifest(const fs::path& dir,
                    const std::vector<std::string>& relative_files) {
  std::map<std::string, std::string> hashes;
  for (const std::string& rel : relative_files) {
    std::ifstream in(dir / rel, std::ios::binary);
    if (!in) {
      throw IoError("manifest: cannot read '" + (dir / rel).string() + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    hashes[rel] = sha256_hex(bytes);
  }
  Json j;
  j["algorithm"] = "sha256";
  j["files"] = hashes;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

Json load_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open '" + path.string() + "'");
  }
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("'" + path.string() + "' is not valid JSON");
  }
  return j;
}

void check_keys(const Json& obj, const std::vector<std::string>& allowed,
                const std::string& context) {
  if (!obj.is_object()) {
    throw ConfigError(context + ": expected a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const std::string& a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      std::string known;
      for (const std::string& a : allowed) {
        if (!known.empty()) known += ", ";
        known += a;
      }
      throw ConfigError(context + ": unknown key '" + key +
                        "' (allowed: " + known + ")");
    }
  }
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(context + ": expected a nonempty array of rows");
  }
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) {
    throw ConfigError(context + ": rows must be nonempty arrays");
  }
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ConfigError(context + ": row " + std::to_string(r) +
                        " has inconsistent width");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        throw ConfigError(context + ": entry (" + std::to_string(r) + "," +
                          std::to_string(c) + ") is not a number");
      }
      m(static_cast<long>(r), static_cast<long>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Json json_from_matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (long r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from_json(const Json& j, const std::string& context) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(context + ": expected a nonempty array");
  }
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ConfigError(context + ": entry " + std::to_string(i) +
                        " is not a number");
    }
    v(static_cast<long>(i)) = j[i].get<double>();
  }
  return v;
}

Json json_from_vector(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (long i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

namespace {

int int_field(const Json& j, const std::string& key,
              const std::string& context) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw ConfigError(context + ": missing or non-integer '" + key + "'");
  }
  return j[key].get<int>();
}

double num_field(const Json& j, const std::string& key,
                 const std::string& context) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw ConfigError(context + ": missing or non-numeric '" + key + "'");
  }
  return j[key].get<double>();
}

}  // namespace

HmmEnvironment env_from_json(const Json& j, int n_agent,
                             const std::string& context) {
  check_keys(j, {"n_hidden", "n_obs", "n_act", "transition", "emission",
                 "reward"},
             context);
  FiniteSpaces spaces;
  spaces.n_hidden = int_field(j, "n_hidden", context);
  spaces.n_obs = int_field(j, "n_obs", context);
  spaces.n_act = int_field(j, "n_act", context);
  spaces.n_agent = n_agent;

  if (!j.contains("transition") || !j["transition"].is_array() ||
      j["transition"].size() != static_cast<std::size_t>(spaces.n_act)) {
    throw ConfigError(context + ": 'transition' must list one matrix per "
                                "action");
  }
  std::vector<Eigen::MatrixXd> t;
  for (std::size_t u = 0; u < j["transition"].size(); ++u) {
    t.push_back(matrix_from_json(
        j["transition"][u], context + ".transition[" + std::to_string(u) +
                                "]"));
  }
  Eigen::MatrixXd e;
  if (!j.contains("emission")) {
    throw ConfigError(context + ": missing 'emission'");
  }
  e = matrix_from_json(j["emission"], context + ".emission");

  if (!j.contains("reward") || !j["reward"].is_array() ||
      j["reward"].size() != static_cast<std::size_t>(spaces.n_act)) {
    throw ConfigError(context + ": 'reward' must list one matrix per action");
  }
  std::vector<Eigen::MatrixXd> r;
  for (std::size_t u = 0; u < j["reward"].size(); ++u) {
    r.push_back(matrix_from_json(
        j["reward"][u], context + ".reward[" + std::to_string(u) + "]"));
  }
  return HmmEnvironment(spaces, std::move(t), std::move(e), std::move(r));
}

AgentStateRecursion recursion_from_json(const Json& j, int n_hidden,
                                        int n_obs, int n_act,
                                        const std::string& context) {
  if (j.contains("window")) {
    check_keys(j, {"window", "cap"}, context);
    const int window = int_field(j, "window", context);
    long cap = 100000;
    if (j.contains("cap")) {
      cap = j["cap"].get<long>();
    }
    FiniteSpaces spaces{n_hidden, n_obs, n_act, 1};
    return make_window_recursion(spaces, window, cap);
  }
  check_keys(j, {"n_gamma", "update", "readout"}, context);
  AgentStateRecursion rec;
  rec.n_gamma = int_field(j, "n_gamma", context);
  if (!j.contains("update") || !j["update"].is_array()) {
    throw ConfigError(context + ": missing 'update' array");
  }
  for (const auto& v : j["update"]) {
    if (!v.is_number_integer()) {
      throw ConfigError(context + ": 'update' entries must be integers");
    }
    rec.update.push_back(v.get<int>());
  }
  if (!j.contains("readout") || !j["readout"].is_array()) {
    throw ConfigError(context + ": missing 'readout' array");
  }
  int n_agent = 0;
  for (const auto& v : j["readout"]) {
    if (!v.is_number_integer()) {
      throw ConfigError(context + ": 'readout' entries must be integers");
    }
    rec.readout.push_back(v.get<int>());
    n_agent = std::max(n_agent, v.get<int>() + 1);
  }
  rec.spaces = FiniteSpaces{n_hidden, n_obs, n_act, n_agent};
  rec.validate();
  return rec;
}

Policy policy_from_json(const Json& j, const FiniteSpaces& spaces,
                        const std::string& context) {
  if (j.contains("uniform")) {
    check_keys(j, {"uniform"}, context);
    if (!j["uniform"].is_boolean() || !j["uniform"].get<bool>()) {
      throw ConfigError(context + ": 'uniform' must be true when present");
    }
    return make_uniform_policy(spaces);
  }
  check_keys(j, {"phi"}, context);
  if (!j.contains("phi")) {
    throw ConfigError(context + ": expected 'uniform' or 'phi'");
  }
  Policy pol{matrix_from_json(j["phi"], context + ".phi")};
  // Validate and renormalize rows once, like every other probability table.
  constexpr double kRowTol = 1e-12;
  if (pol.phi.rows() != spaces.n_agent || pol.phi.cols() != spaces.n_act) {
    throw ConfigError(context + ": 'phi' must be " +
                      std::to_string(spaces.n_agent) + "x" +
                      std::to_string(spaces.n_act));
  }
  for (long r = 0; r < pol.phi.rows(); ++r) {
    const double sum = pol.phi.row(r).sum();
    if (pol.phi.row(r).minCoeff() < 0.0 || std::abs(sum - 1.0) > kRowTol) {
      throw ConfigError(context + ": 'phi' row " + std::to_string(r) +
                        " is not a probability vector");
    }
    pol.phi.row(r) /= sum;
  }
  pol.validate(spaces);
  return pol;
}

StepSchedule schedule_from_json(const Json& j, const std::string& context) {
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw ConfigError(context + ": missing 'kind' (power or harmonic)");
  }
  const std::string kind = j["kind"].get<std::string>();
  long certified_from = 1;
  if (j.contains("certified_from")) {
    if (!j["certified_from"].is_number_integer()) {
      throw ConfigError(context + ": 'certified_from' must be an integer");
    }
    certified_from = j["certified_from"].get<long>();
  }
  if (kind == "power") {
    check_keys(j, {"kind", "a0", "n0", "d2", "d1", "d3", "certified_from"},
               context);
    return StepSchedule::power(num_field(j, "a0", context),
                               num_field(j, "n0", context),
                               num_field(j, "d2", context),
                               num_field(j, "d1", context),
                               num_field(j, "d3", context), certified_from);
  }
  if (kind == "harmonic") {
    check_keys(j, {"kind", "a0", "d1", "d3", "certified_from"}, context);
    return StepSchedule::harmonic(num_field(j, "a0", context),
                                  num_field(j, "d1", context),
                                  num_field(j, "d3", context),
                                  certified_from);
  }
  throw ConfigError(context + ": unknown schedule kind '" + kind + "'");
}

Json json_from_schedule(const StepSchedule& s) {
  Json j;
  j["kind"] = s.kind() == StepSchedule::Kind::kPower ? "power" : "harmonic";
  j["a0"] = s.a0();
  if (s.kind() == StepSchedule::Kind::kPower) {
    j["n0"] = s.n0();
    j["d2"] = s.d2();
  }
  j["d1"] = s.d1();
  j["d3"] = s.d3();
  j["certified_from"] = s.certified_from();
  return j;
}

}  // namespace nmq
