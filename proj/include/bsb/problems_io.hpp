#pragma once

// Problem definitions (JSON), built-in examples, result bundles and CSV
// trajectory export.
//
// Problem file layout:
//   {
//     "schema_version": 1,
//     "name": "dubins",
//     "n": 3, "m": 2,
//     "f0": ["cos(x3)+r1", "sin(x3)+r2", "0"],
//     "f1": ["0", "0", "1"],
//     "a": ["0", "0", "pi/2"],
//     "b": ["10", "0", "-pi/2"],
//     "u1": -1, "u2": -1,
//     "z0": {"omega": [1, 0, -1], "tau1": 1.5707963267948966, "tau2": 9.5707963267948966, "T": 11.141592653589793},
//     "options": {"newton_tol": 1e-10, "ode_abs_tol": 1e-10, "ode_rel_tol": 1e-10, "tol_sglc": 1e-9, "max_iter": 25}
//   }
// "z0", "options", "stub" and "note" are optional. Variables are x1..xn and
// r1..rm (1-based); endpoint expressions may only use r.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsb/certification.hpp"
#include "bsb/errors.hpp"
#include "bsb/extremal.hpp"
#include "bsb/shooting.hpp"
#include "bsb/symexpr.hpp"

namespace bsb {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "1.0.0";

struct SolverSettings {
  double newton_tol = 1e-10;
  double ode_abs_tol = 1e-10;
  double ode_rel_tol = 1e-10;
  double tol_sglc = kDefaultTolSglc;
  int max_iter = 25;

  bool operator==(const SolverSettings&) const = default;
};

struct ProblemDefinition {
  std::string name;
  int n = 0;
  int m = 0;
  std::vector<std::string> f0;
  std::vector<std::string> f1;
  std::vector<std::string> a;
  std::vector<std::string> b;
  int u1 = -1;
  int u2 = -1;
  std::optional<ExtremalStructure> z0;
  SolverSettings options;
  bool stub = false;
  std::string note;
};

namespace io_detail {

using json = nlohmann::json;

/// Doubles as JSON numbers; non-finite values as the strings "inf", "-inf", "nan".
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double to_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a number, got " + j.dump());
}

inline json vec(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

inline Vec to_vec(const json& j) {
  if (!j.is_array()) throw ValidationError("expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = to_double(j[i]);
  return v;
}

/// Row-major nested arrays.
inline json mat(const Mat& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) out.push_back(vec(a.row(i).transpose()));
  return out;
}

inline Mat to_mat(const json& j) {
  if (!j.is_array()) throw ValidationError("expected an array of rows");
  if (j.empty()) return Mat(0, 0);
  const auto cols = j[0].size();
  Mat a(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols) throw ValidationError("ragged matrix rows");
    a.row(static_cast<Eigen::Index>(i)) = to_vec(j[i]).transpose();
  }
  return a;
}

inline json structure(const ExtremalStructure& z) {
  return {{"omega", vec(z.omega)}, {"tau1", number(z.tau1)}, {"tau2", number(z.tau2)}, {"T", number(z.T)}};
}

inline ExtremalStructure to_structure(const json& j) {
  return {to_vec(j.at("omega")), to_double(j.at("tau1")), to_double(j.at("tau2")), to_double(j.at("T"))};
}

inline std::vector<std::string> strings(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
  const json& a = j.at(key);
  if (!a.is_array()) throw ValidationError(std::string("field '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : a) {
    if (e.is_string()) {
      out.push_back(e.get<std::string>());
    } else if (e.is_number()) {
      out.push_back(e.dump());
    } else {
      throw ValidationError(std::string("field '") + key + "' must be an array of strings");
    }
  }
  return out;
}

}  // namespace io_detail

inline nlohmann::json to_json(const ProblemDefinition& def) {
  using namespace io_detail;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = def.name;
  j["n"] = def.n;
  j["m"] = def.m;
  j["f0"] = def.f0;
  j["f1"] = def.f1;
  j["a"] = def.a;
  j["b"] = def.b;
  j["u1"] = def.u1;
  j["u2"] = def.u2;
  if (def.z0) j["z0"] = structure(*def.z0);
  j["options"] = {{"newton_tol", def.options.newton_tol},
                  {"ode_abs_tol", def.options.ode_abs_tol},
                  {"ode_rel_tol", def.options.ode_rel_tol},
                  {"tol_sglc", def.options.tol_sglc},
                  {"max_iter", def.options.max_iter}};
  if (def.stub) j["stub"] = true;
  if (!def.note.empty()) j["note"] = def.note;
  return j;
}

/// Parses every expression with the declared dimensions. Errors carry the
/// field name and the byte offset inside the expression.
inline void validate(const ProblemDefinition& def) {
  if (def.n < 1) throw ValidationError("n must be positive");
  if (def.m < 0) throw ValidationError("m must be non-negative");
  auto check_list = [&](const std::vector<std::string>& list, const char* key) {
    if (static_cast<int>(list.size()) != def.n) {
      throw ValidationError(std::string("field '") + key + "' has " + std::to_string(list.size()) +
                            " components, expected n = " + std::to_string(def.n));
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      try {
        const sym::Expr e = sym::parse(list[i], def.n, def.m);
        if ((key[0] == 'a' || key[0] == 'b') && sym::max_index(e, sym::Variable::Kind::state) >= 0) {
          throw ValidationError(std::string("endpoint ") + key + "[" + std::to_string(i) + "] depends on the state");
        }
      } catch (const ParseError& e) {
        throw ParseError(std::string(key) + "[" + std::to_string(i) + "]: " + e.what(), e.offset());
      }
    }
  };
  check_list(def.f0, "f0");
  check_list(def.f1, "f1");
  check_list(def.a, "a");
  check_list(def.b, "b");
  if ((def.u1 != -1 && def.u1 != 1) || (def.u2 != -1 && def.u2 != 1)) {
    throw ValidationError("bang values u1, u2 must be -1 or +1");
  }
  if (def.z0 && def.z0->omega.size() != def.n) throw ValidationError("z0.omega must have n components");
}

inline ProblemDefinition problem_from_json(const nlohmann::json& j) {
  using namespace io_detail;
  if (!j.is_object()) throw ValidationError("problem definition must be an object");
  ProblemDefinition def;
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() > kSchemaVersion) {
      throw ValidationError("unsupported schema_version " + j.at("schema_version").dump());
    }
    def.name = j.value("name", std::string("unnamed"));
    if (!j.contains("n")) throw ValidationError("missing field 'n'");
    def.n = j.at("n").get<int>();
    def.m = j.value("m", 0);
    def.f0 = strings(j, "f0");
    def.f1 = strings(j, "f1");
    def.a = strings(j, "a");
    def.b = strings(j, "b");
    def.u1 = j.value("u1", -1);
    def.u2 = j.value("u2", -1);
    if (j.contains("z0")) def.z0 = to_structure(j.at("z0"));
    if (j.contains("options")) {
      const json& o = j.at("options");
      def.options.newton_tol = o.value("newton_tol", def.options.newton_tol);
      def.options.ode_abs_tol = o.value("ode_abs_tol", def.options.ode_abs_tol);
      def.options.ode_rel_tol = o.value("ode_rel_tol", def.options.ode_rel_tol);
      def.options.tol_sglc = o.value("tol_sglc", def.options.tol_sglc);
      def.options.max_iter = o.value("max_iter", def.options.max_iter);
    }
    def.stub = j.value("stub", false);
    def.note = j.value("note", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed problem definition: ") + e.what());
  }
  validate(def);
  return def;
}

/// Same name, dimensions, bang values, options and structurally equal
/// expressions.
inline bool structurally_equal(const ProblemDefinition& x, const ProblemDefinition& y) {
  if (x.name != y.name || x.n != y.n || x.m != y.m || x.u1 != y.u1 || x.u2 != y.u2 || x.stub != y.stub ||
      !(x.options == y.options) || x.z0.has_value() != y.z0.has_value()) {
    return false;
  }
  if (x.z0 && max_abs(x.z0->stacked() - y.z0->stacked()) != 0.0) return false;
  auto same = [&](const std::vector<std::string>& p, const std::vector<std::string>& q) {
    if (p.size() != q.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!sym::structurally_equal(sym::parse(p[i], x.n, x.m), sym::parse(q[i], y.n, y.m))) return false;
    }
    return true;
  };
  return same(x.f0, y.f0) && same(x.f1, y.f1) && same(x.a, y.a) && same(x.b, y.b);
}

inline std::vector<std::string> builtin_names() { return {"dubins", "dubins-drift", "dodgem-stub"}; }

/// Built-in examples: the Dubins car with a constant drift (r1, r2), the
/// Dubins car in a shear flow (r1 x2, 0) with a shifted target, and a
/// free-heading variant that is loadable but not solvable.
inline std::optional<ProblemDefinition> builtin_problem(const std::string& name) {
  const double pi = std::acos(-1.0);
  ProblemDefinition def;
  def.name = name;
  def.n = 3;
  def.m = 2;
  def.f1 = {"0", "0", "1"};
  def.a = {"0", "0", "pi/2"};
  def.b = {"10", "0", "-pi/2"};
  def.u1 = -1;
  def.u2 = -1;
  def.z0 = ExtremalStructure{Vec::Zero(3), pi / 2, pi / 2 + 8, 8 + pi};
  def.z0->omega << 1, 0, -1;
  if (name == "dubins") {
    def.f0 = {"cos(x3)+r1", "sin(x3)+r2", "0"};
  } else if (name == "dubins-drift") {
    def.f0 = {"cos(x3)+r1*x2", "sin(x3)", "0"};
    def.b = {"10", "r2", "-pi/2"};
  } else if (name == "dodgem-stub") {
    def.f0 = {"cos(x3)+r1", "sin(x3)+r2", "0"};
    def.stub = true;
    def.note = "final heading free (bang-singular structure); the fixed-endpoint solver does not handle it";
  } else {
    return std::nullopt;
  }
  validate(def);
  return def;
}

inline ProblemDefinition parse_problem_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("problem file: ") + e.what(), e.byte);
  }
  return problem_from_json(j);
}

/// A built-in name or a path to a JSON problem file.
inline ProblemDefinition load_problem(const std::string& path_or_name) {
  if (auto b = builtin_problem(path_or_name)) return *b;
  std::ifstream in(path_or_name, std::ios::binary);
  if (!in) throw IOError("cannot open problem file '" + path_or_name + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem_text(ss.str());
}

/// Compiles the expressions. Stub problems are refused here.
inline ParametricProblem compile(const ProblemDefinition& def) {
  validate(def);
  if (def.stub) throw ValidationError("problem '" + def.name + "' is a stub: " + def.note);
  auto fields = [&](const std::vector<std::string>& list) {
    std::vector<sym::Expr> e;
    for (const auto& s : list) e.push_back(sym::parse(s, def.n, def.m));
    return e;
  };
  ParametricProblem p;
  p.name = def.name;
  p.sys = AffineSystem(VectorField(fields(def.f0), def.m), VectorField(fields(def.f1), def.m));
  p.a = EndpointMap(fields(def.a), def.m);
  p.b = EndpointMap(fields(def.b), def.m);
  p.u1 = def.u1;
  p.u2 = def.u2;
  p.validate();
  return p;
}

inline NewtonOptions newton_options(const SolverSettings& s) {
  NewtonOptions o;
  o.tol = s.newton_tol;
  o.max_iter = s.max_iter;
  o.assemble.flow.abs_tol = s.ode_abs_tol;
  o.assemble.flow.rel_tol = s.ode_rel_tol;
  o.assemble.tol_sglc = s.tol_sglc;
  o.certification.second_variation.flow = o.assemble.flow;
  o.certification.second_variation.tol_sglc = s.tol_sglc;
  return o;
}

struct TrajectorySample {
  double t = 0.0;
  Vec q;
  Vec p;
  double u = 0.0;
};

/// `samples_per_arc` equally spaced points on each arc, both ends included.
inline std::vector<TrajectorySample> sample_trajectory(const BsBExtremal& ext, int samples_per_arc) {
  if (samples_per_arc < 2) throw ValidationError("need at least two samples per arc");
  std::vector<TrajectorySample> out;
  for (int k = 0; k < 3; ++k) {
    const double a = ext.arc_begin(k);
    const double b = ext.arc_end(k);
    const FlowSegment& seg = ext.arc(k);
    for (int i = 0; i < samples_per_arc; ++i) {
      const double t = i + 1 == samples_per_arc ? b : a + (b - a) * i / (samples_per_arc - 1);
      const CotangentPoint l = seg.at(t);
      out.push_back({t, l.q, l.p, ext.hamiltonian(k).control_at(l)});
    }
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_string(const std::vector<TrajectorySample>& samples) {
  if (samples.empty()) return "t,u\n";
  const auto n = samples.front().q.size();
  std::string out = "t";
  for (Eigen::Index i = 1; i <= n; ++i) out += ",q" + std::to_string(i);
  for (Eigen::Index i = 1; i <= n; ++i) out += ",p" + std::to_string(i);
  out += ",u\n";
  for (const auto& s : samples) {
    out += format_double(s.t);
    for (Eigen::Index i = 0; i < n; ++i) out += "," + format_double(s.q[i]);
    for (Eigen::Index i = 0; i < n; ++i) out += "," + format_double(s.p[i]);
    out += "," + format_double(s.u) + "\n";
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IOError("write failed for '" + path + "'");
}

inline void export_csv(const std::vector<TrajectorySample>& samples, const std::string& path) {
  write_text(path, csv_string(samples));
}

inline nlohmann::json to_json(const CertificationReport& rep) {
  using namespace io_detail;
  json j;
  j["pass"] = rep.pass();
  j["failures"] = rep.failures;
  j["margin_bang1"] = number(rep.margin_bang1);
  j["margin_bang2"] = number(rep.margin_bang2);
  j["margin_sglc"] = number(rep.margin_sglc);
  j["junction1"] = number(rep.junction1);
  j["junction2"] = number(rep.junction2);
  j["sup_v"] = number(rep.sup_v);
  j["normality_drift"] = number(rep.normality_drift);
  j["switching_residuals"] = vec(rep.switching_residuals);
  j["singular_f1_max"] = number(rep.singular_f1_max);
  j["singular_f01_max"] = number(rep.singular_f01_max);
  j["controllability_rank"] = rep.controllability_rank;
  j["controllability_smallest_sv"] = number(rep.controllability_smallest_sv);
  j["injectivity_margin"] = number(rep.injectivity_margin);
  j["coercive"] = rep.coercive;
  j["state_dim"] = rep.n;
  const auto& h = rep.hamiltonian_test;
  j["coercivity_hamiltonian"] = {{"verdict", to_string(h.verdict)},
                                 {"min_ratio", number(h.min_ratio)},
                                 {"t_min_ratio", number(h.t_min_ratio)},
                                 {"sign_changes", h.sign_changes}};
  if (h.critical_time) j["coercivity_hamiltonian"]["critical_time"] = number(*h.critical_time);
  const auto& q = rep.qp_test;
  j["coercivity_qp"] = {{"verdict", to_string(q.verdict)},
                        {"min_eig", number(q.min_eig)},
                        {"min_eig_refined", number(q.min_eig_refined)},
                        {"tolerance", number(q.tolerance)},
                        {"richardson_stable", q.richardson_stable}};
  if (!rep.second_variation_error.empty()) j["second_variation_error"] = rep.second_variation_error;
  return j;
}

inline CoercivityVerdict verdict_from_string(const std::string& s) {
  if (s == "coercive") return CoercivityVerdict::coercive;
  if (s == "not_coercive") return CoercivityVerdict::not_coercive;
  if (s == "marginal") return CoercivityVerdict::marginal;
  throw ValidationError("unknown coercivity verdict '" + s + "'");
}

inline CertificationReport report_from_json(const nlohmann::json& j) {
  using namespace io_detail;
  CertificationReport rep;
  rep.failures = j.at("failures").get<std::vector<std::string>>();
  rep.margin_bang1 = to_double(j.at("margin_bang1"));
  rep.margin_bang2 = to_double(j.at("margin_bang2"));
  rep.margin_sglc = to_double(j.at("margin_sglc"));
  rep.junction1 = to_double(j.at("junction1"));
  rep.junction2 = to_double(j.at("junction2"));
  rep.sup_v = to_double(j.at("sup_v"));
  rep.normality_drift = to_double(j.at("normality_drift"));
  rep.switching_residuals = to_vec(j.at("switching_residuals"));
  rep.singular_f1_max = to_double(j.at("singular_f1_max"));
  rep.singular_f01_max = to_double(j.at("singular_f01_max"));
  rep.controllability_rank = j.at("controllability_rank").get<int>();
  rep.controllability_smallest_sv = to_double(j.at("controllability_smallest_sv"));
  rep.injectivity_margin = to_double(j.at("injectivity_margin"));
  rep.coercive = j.at("coercive").get<bool>();
  rep.n = j.at("state_dim").get<int>();
  const json& h = j.at("coercivity_hamiltonian");
  rep.hamiltonian_test.verdict = verdict_from_string(h.at("verdict").get<std::string>());
  rep.hamiltonian_test.min_ratio = to_double(h.at("min_ratio"));
  rep.hamiltonian_test.t_min_ratio = to_double(h.at("t_min_ratio"));
  rep.hamiltonian_test.sign_changes = h.at("sign_changes").get<int>();
  if (h.contains("critical_time")) rep.hamiltonian_test.critical_time = to_double(h.at("critical_time"));
  const json& q = j.at("coercivity_qp");
  rep.qp_test.verdict = verdict_from_string(q.at("verdict").get<std::string>());
  rep.qp_test.min_eig = to_double(q.at("min_eig"));
  rep.qp_test.min_eig_refined = to_double(q.at("min_eig_refined"));
  rep.qp_test.tolerance = to_double(q.at("tolerance"));
  rep.qp_test.richardson_stable = q.at("richardson_stable").get<bool>();
  rep.second_variation_error = j.value("second_variation_error", std::string());
  return rep;
}

inline nlohmann::json to_json(const ContinuationRecord& rec) {
  using namespace io_detail;
  json j;
  j["r"] = vec(rec.r);
  j["z"] = structure(rec.z);
  j["jacobian"] = mat(rec.jacobian);
  j["jacobian_r"] = mat(rec.jacobian_r);
  j["sensitivity"] = mat(rec.sensitivity);
  j["condition"] = number(rec.condition);
  j["iterations"] = rec.iterations;
  j["residual_norm"] = number(rec.residual_norm);
  j["certification"] = rec.certification ? to_json(*rec.certification) : json(nullptr);
  return j;
}

inline ContinuationRecord record_from_json(const nlohmann::json& j) {
  using namespace io_detail;
  ContinuationRecord rec;
  rec.r = to_vec(j.at("r"));
  rec.z = to_structure(j.at("z"));
  rec.jacobian = to_mat(j.at("jacobian"));
  rec.jacobian_r = to_mat(j.at("jacobian_r"));
  rec.sensitivity = to_mat(j.at("sensitivity"));
  rec.condition = to_double(j.at("condition"));
  rec.iterations = j.at("iterations").get<int>();
  rec.residual_norm = to_double(j.at("residual_norm"));
  if (!j.at("certification").is_null()) rec.certification = report_from_json(j.at("certification"));
  return rec;
}

struct ResultBundle {
  ProblemDefinition problem;
  std::vector<ContinuationRecord> records;
  std::vector<std::vector<TrajectorySample>> trajectories;  // one per record, may be empty
  nlohmann::json metadata = nlohmann::json::object();
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Metadata block: library/schema versions, tolerances, units, and the
/// creation time (the only field that varies between identical runs).
inline nlohmann::json bundle_metadata(const SolverSettings& s) {
  return {{"library_version", kLibraryVersion},
          {"schema_version", kSchemaVersion},
          {"created_utc", utc_timestamp()},
          {"units", {{"time", "problem time units"}, {"angle", "radians"}}},
          {"tolerances",
           {{"newton_tol", s.newton_tol},
            {"ode_abs_tol", s.ode_abs_tol},
            {"ode_rel_tol", s.ode_rel_tol},
            {"tol_sglc", s.tol_sglc}}}};
}

inline nlohmann::json to_json(const ResultBundle& b) {
  using namespace io_detail;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["problem"] = to_json(b.problem);
  j["metadata"] = b.metadata;
  j["records"] = json::array();
  for (const auto& r : b.records) j["records"].push_back(to_json(r));
  j["trajectories"] = json::array();
  for (const auto& traj : b.trajectories) {
    json arr = json::array();
    for (const auto& s : traj) arr.push_back({{"t", number(s.t)}, {"q", vec(s.q)}, {"p", vec(s.p)}, {"u", number(s.u)}});
    j["trajectories"].push_back(arr);
  }
  return j;
}

inline ResultBundle bundle_from_json(const nlohmann::json& j) {
  using namespace io_detail;
  try {
    ResultBundle b;
    b.problem = problem_from_json(j.at("problem"));
    b.metadata = j.value("metadata", json::object());
    for (const auto& r : j.at("records")) b.records.push_back(record_from_json(r));
    for (const auto& traj : j.at("trajectories")) {
      std::vector<TrajectorySample> v;
      for (const auto& s : traj) v.push_back({to_double(s.at("t")), to_vec(s.at("q")), to_vec(s.at("p")), to_double(s.at("u"))});
      b.trajectories.push_back(std::move(v));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed result bundle: ") + e.what());
  }
}

/// Keys sorted, two-space indent, trailing newline.
inline std::string bundle_text(const ResultBundle& b) { return to_json(b).dump(2) + "\n"; }

inline void save_bundle(const ResultBundle& b, const std::string& path) { write_text(path, bundle_text(b)); }

inline ResultBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open bundle '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return bundle_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bundle: ") + e.what(), e.byte);
  }
}

}  // namespace bsb
