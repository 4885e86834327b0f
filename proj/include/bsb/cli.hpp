#pragma once

// Command-line front end. Every subcommand composes library calls; `run`
// returns the process exit code: 0 success, 2 computed but not certified,
// 1 on any error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsb/certification.hpp"
#include "bsb/errors.hpp"
#include "bsb/problems_io.hpp"
#include "bsb/shooting.hpp"

namespace bsb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUncertified = 2;
inline constexpr const char* kOutDirEnv = "BSB_OUT_DIR";

inline std::vector<double> parse_numbers(const std::string& text, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("not a number: '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw ValidationError("not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty number list");
  return out;
}

inline Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Ray {
  Vec direction;
  double t_max = 0.0;
  int steps = 0;
};

/// "d1,d2,...;t_max;steps"
inline Ray parse_ray(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) parts.push_back(item);
  if (parts.size() != 3) throw ValidationError("--r-ray expects \"dir;t_max;steps\"");
  Ray ray;
  ray.direction = to_vec(parse_numbers(parts[0]));
  ray.t_max = parse_numbers(parts[1]).at(0);
  const double steps = parse_numbers(parts[2]).at(0);
  if (steps < 1 || steps != std::floor(steps)) throw ValidationError("--r-ray steps must be a positive integer");
  ray.steps = static_cast<int>(steps);
  return ray;
}

inline std::string fmt(double v, int digits = 10) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string fmt(const Vec& v, int digits = 10) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], digits);
  return s;
}

struct Settings {
  std::string problem = "dubins";
  std::string out_dir;
  std::string r_text;
  std::string z0_text;
  std::string ray_text;
  double newton_tol = 0.0;
  double ode_tol = 0.0;
  std::uint64_t seed = 0;
  int probes = 200;
  double box_frac = 0.1;
  double time_radius = 0.1;
  int samples = 200;
};

class Session {
 public:
  Session(const Settings& s, std::ostream& out) : s_(s), out_(out) {
    def_ = load_problem(s.problem);
    if (s.newton_tol > 0) def_.options.newton_tol = s.newton_tol;
    if (s.ode_tol > 0) {
      def_.options.ode_abs_tol = s.ode_tol;
      def_.options.ode_rel_tol = s.ode_tol;
    }
    prob_ = compile(def_);
    r_ = Vec::Zero(prob_.m());
    if (!s.r_text.empty()) {
      r_ = to_vec(parse_numbers(s.r_text));
      if (r_.size() != prob_.m()) {
        throw ValidationError("--r has " + std::to_string(r_.size()) + " entries, problem has m = " +
                              std::to_string(prob_.m()));
      }
    }
    if (!s.z0_text.empty()) {
      const Vec z = to_vec(parse_numbers(s.z0_text));
      if (z.size() != prob_.n() + 3) throw ValidationError("--z0 needs n + 3 numbers (omega, tau1, tau2, T)");
      z0_ = ExtremalStructure::from_stacked(z);
    } else if (def_.z0) {
      z0_ = *def_.z0;
    } else {
      throw ValidationError("problem has no initial guess; pass --z0");
    }
    opts_ = newton_options(def_.options);
  }

  const ParametricProblem& problem() const { return prob_; }
  const Vec& r() const { return r_; }

  ContinuationRecord solve() const { return newton_solve(prob_, r_, z0_, opts_); }

  std::vector<ContinuationRecord> continue_ray(const Ray& ray) const {
    if (ray.direction.size() != prob_.m()) throw ValidationError("--r-ray direction must have m entries");
    ContinuationOptions copts;
    copts.newton = opts_;
    return continue_path(prob_, parameter_ray(r_, ray.direction, ray.t_max, ray.steps), z0_, copts);
  }

  void print_solution(const ContinuationRecord& rec) const {
    out_ << "problem    " << def_.name << "\n";
    out_ << "r          " << fmt(rec.r) << "\n";
    out_ << "omega      " << fmt(rec.z.omega) << "\n";
    out_ << "tau1       " << fmt(rec.z.tau1) << "\n";
    out_ << "tau2       " << fmt(rec.z.tau2) << "\n";
    out_ << "T          " << fmt(rec.z.T) << "\n";
    out_ << "residual   " << fmt(rec.residual_norm, 3) << "  (" << rec.iterations << " Newton iterations, cond "
         << fmt(rec.condition, 4) << ")\n";
    if (rec.certification) out_ << "certificate " << (rec.certified() ? "PASS" : "FAIL") << "\n";
  }

  void print_report(const CertificationReport& rep) const {
    auto row = [&](const char* name, const std::string& v) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "  %-28s ", name);
      out_ << buf << v << "\n";
    };
    out_ << "margins\n";
    row("bang arc 1 (u1 F1)", fmt(rep.margin_bang1));
    row("bang arc 2 (u2 F1)", fmt(rep.margin_bang2));
    row("SGLC (min F101)", fmt(rep.margin_sglc));
    row("junction 1", fmt(rep.junction1));
    row("junction 2", fmt(rep.junction2));
    row("sup |v|", fmt(rep.sup_v));
    row("normality drift", fmt(rep.normality_drift, 3));
    row("switching residuals", fmt(rep.switching_residuals, 3));
    row("controllability rank", std::to_string(rep.controllability_rank) + " of " + std::to_string(rep.n));
    row("coercivity (Hamiltonian)", to_string(rep.hamiltonian_test.verdict));
    row("coercivity (QP min eig)", fmt(rep.qp_test.min_eig) + " / " + fmt(rep.qp_test.min_eig_refined) + " (" +
                                       to_string(rep.qp_test.verdict) + ")");
    row("injectivity", fmt(rep.injectivity_margin));
    if (!rep.second_variation_error.empty()) row("second variation error", rep.second_variation_error);
    out_ << "verdict " << (rep.pass() ? "PASS" : "FAIL") << "\n";
    for (const auto& f : rep.failures) out_ << "  failed: " << f << "\n";
  }

  /// Writes <stem>.json and, when trajectories are given, <stem>.csv for the
  /// last record.
  void write(const std::string& stem, const std::vector<ContinuationRecord>& records, bool with_csv) const {
    const std::string dir = out_dir();
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    ResultBundle b;
    b.problem = def_;
    b.records = records;
    b.metadata = bundle_metadata(def_.options);
    for (const auto& rec : records) {
      const BsBExtremal ext = assemble(prob_, rec.r, rec.z, opts_.assemble);
      b.trajectories.push_back(sample_trajectory(ext, s_.samples));
    }
    const auto base = std::filesystem::path(dir) / stem;
    save_bundle(b, base.string() + ".json");
    out_ << "wrote " << base.string() << ".json\n";
    if (with_csv && !b.trajectories.empty()) {
      export_csv(b.trajectories.back(), base.string() + ".csv");
      out_ << "wrote " << base.string() << ".csv\n";
    }
  }

  std::string out_dir() const {
    if (!s_.out_dir.empty()) return s_.out_dir;
    if (const char* env = std::getenv(kOutDirEnv)) return env;
    return {};
  }

  const NewtonOptions& newton() const { return opts_; }

 private:
  Settings s_;
  std::ostream& out_;
  ProblemDefinition def_;
  ParametricProblem prob_;
  Vec r_;
  ExtremalStructure z0_;
  NewtonOptions opts_;
};

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bang-singular-bang minimum-time extremals: solve, certify, continue"};
  app.require_subcommand(1, 1);
  Settings s;

  auto common = [&s](CLI::App* c) {
    c->add_option("--problem", s.problem, "built-in name (dubins, dubins-drift, dodgem-stub) or JSON file")
        ->capture_default_str();
    c->add_option("--out", s.out_dir, "output directory (default: $BSB_OUT_DIR)");
    c->add_option("--r", s.r_text, "parameter vector \"v1,v2,...\"");
    c->add_option("--z0", s.z0_text, "initial guess \"omega..., tau1, tau2, T\"");
    c->add_option("--newton-tol", s.newton_tol, "Newton residual tolerance");
    c->add_option("--ode-tol", s.ode_tol, "integrator absolute and relative tolerance");
  };

  CLI::App* solve = app.add_subcommand("solve", "solve the shooting equations at r");
  CLI::App* certify_cmd = app.add_subcommand("certify", "solve and print the certificate");
  CLI::App* cont = app.add_subcommand("continue", "continue the solution along a parameter ray");
  CLI::App* sens = app.add_subcommand("sensitivity", "print dz/dr at the solution");
  CLI::App* scan = app.add_subcommand("scan-uniqueness", "count distinct zeros near the solution");
  CLI::App* exp = app.add_subcommand("export", "write the JSON bundle and CSV trajectory");
  for (CLI::App* c : {solve, certify_cmd, cont, sens, scan, exp}) common(c);
  cont->add_option("--r-ray", s.ray_text, "\"d1,d2,...;t_max;steps\"")->required();
  scan->add_option("--seed", s.seed, "random seed")->capture_default_str();
  scan->add_option("--probes", s.probes, "number of random starts")->capture_default_str();
  scan->add_option("--box", s.box_frac, "covector box radius relative to |omega|")->capture_default_str();
  scan->add_option("--time-radius", s.time_radius, "radius for the switching times")->capture_default_str();
  exp->add_option("--samples", s.samples, "samples per arc")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    Session session(s, out);
    if (solve->parsed() || certify_cmd->parsed() || exp->parsed()) {
      const ContinuationRecord rec = session.solve();
      session.print_solution(rec);
      if (certify_cmd->parsed()) session.print_report(*rec.certification);
      session.write(solve->parsed() ? "solve" : certify_cmd->parsed() ? "certify" : "export", {rec}, true);
      if (exp->parsed() && session.out_dir().empty()) {
        err << "export: no output directory (--out or " << kOutDirEnv << ")\n";
        return kExitError;
      }
      return rec.certified() ? kExitOk : kExitUncertified;
    }
    if (sens->parsed()) {
      const ContinuationRecord rec = session.solve();
      session.print_solution(rec);
      out << "dz/dr (rows omega..., tau1, tau2, T; columns r1..rm)\n";
      for (Eigen::Index i = 0; i < rec.sensitivity.rows(); ++i) {
        out << "  " << fmt(Vec(rec.sensitivity.row(i).transpose())) << "\n";
      }
      session.write("sensitivity", {rec}, false);
      return rec.certified() ? kExitOk : kExitUncertified;
    }
    if (cont->parsed()) {
      const Ray ray = parse_ray(s.ray_text);
      const auto records = session.continue_ray(ray);
      out << "step  r                     tau1           tau2           T              residual   cert\n";
      bool all = true;
      for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& rec = records[k];
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-5zu %-21s %-14.10g %-14.10g %-14.10g %-10.2e %s\n", k,
                      fmt(rec.r, 6).c_str(), rec.z.tau1, rec.z.tau2, rec.z.T, rec.residual_norm,
                      rec.certified() ? "PASS" : "FAIL");
        out << buf;
        all = all && rec.certified();
      }
      const bool complete = static_cast<int>(records.size()) == ray.steps + 1;
      if (!complete) out << "stopped after " << records.size() << " of " << ray.steps + 1 << " records\n";
      session.write("continue", records, true);
      return all && complete ? kExitOk : kExitUncertified;
    }
    if (scan->parsed()) {
      const ContinuationRecord rec = session.solve();
      session.print_solution(rec);
      UniquenessOptions uo;
      uo.n_probe = s.probes;
      uo.box_frac = s.box_frac;
      uo.time_radius = s.time_radius;
      uo.seed = s.seed;
      uo.newton = session.newton();
      const UniquenessResult res = uniqueness_scan(session.problem(), rec, uo);
      out << "probes     " << s.probes << " (seed " << s.seed << ", " << res.n_converged << " converged)\n";
      out << "zeros      " << res.n_zeros_found << "\n";
      return res.n_zeros_found == 1 ? kExitOk : kExitUncertified;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace bsb::cli
