#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kamtori/cli_io.hpp"
#include "kamtori/errors.hpp"

namespace kam {

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// "--section.key value" or "--section.key=value" pairs left over by the option parser.
Overrides collect_overrides(const std::vector<std::string>& rest) {
  Overrides out;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& a = rest[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3)
      throw Error(ErrorKind::ParseError, "unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= rest.size()) throw Error(ErrorKind::ParseError, "override " + a + " has no value");
      out.emplace_back(a.substr(2), rest[++i]);
    }
  }
  return out;
}

std::string format_k(const std::vector<int>& k) {
  std::ostringstream s;
  s << "(";
  for (std::size_t i = 0; i < k.size(); ++i) s << (i ? "," : "") << k[i];
  s << ")";
  return s.str();
}

/// Observed contraction constant of a probe solve, doubled; 1 when the probe needs no step.
double calibrated_c(const HamiltonianFamily& H, const RunConfig& cfg, const FrequencyVector& omega,
                    const TorusEmbedding& K0) {
  if (cfg.c) return *cfg.c;
  SolveOptions probe;
  probe.tol = cfg.tol;
  probe.max_iterations = cfg.max_iterations;
  probe.enforce_drift = false;
  const TorusSolution sol =
      solve_analytic(H, cfg.lambda0, K0, omega, make_budget(cfg.rho, cfg.r, omega.gamma, omega.sigma, 1.0), probe);
  const double c_obs = calibrate_c(sol.history);
  return c_obs > 0.0 ? 2.0 * c_obs : 1.0;
}

int cmd_check_diophantine(const RunConfig& cfg, std::ostream& out) {
  const double gamma = cfg.gamma.value_or(0.0);
  const DiophantineVerdict v = verify_diophantine(cfg.omega, gamma, cfg.sigma, cfg.diophantine_kmax);
  FrequencyVector fv{cfg.omega, cfg.gamma ? gamma : v.min_product, cfg.sigma, cfg.diophantine_kmax};
  const bool pass = v.pass && fv.gamma > 0.0;
  Json body = to_json(v, fv);
  body["pass"] = pass;
  write_report(cfg.output_path("_diophantine.json"), make_report("check-diophantine", cfg, body));
  if (!pass) {
    out << "not Diophantine up to |k|_1 <= " << cfg.diophantine_kmax << ": offender k = " << format_k(v.worst_k)
        << ", |k.omega| |k|^sigma = " << v.min_product << "\n";
    return 2;
  }
  out << "Diophantine up to |k|_1 <= " << cfg.diophantine_kmax << " with gamma = " << fv.gamma
      << " (worst k = " << format_k(v.worst_k) << ")\n";
  return 0;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  const HamiltonianFamily H = make_family(cfg);
  const FrequencyVector omega = make_frequency(cfg);
  const TorusEmbedding K0 = initial_torus(cfg);
  const KamBudget budget = make_budget(cfg.rho, cfg.r, omega.gamma, omega.sigma, calibrated_c(H, cfg, omega, K0));
  SolveOptions so;
  so.tol = cfg.tol;
  so.max_iterations = cfg.max_iterations;
  const TorusSolution sol = solve_analytic(H, cfg.lambda0, K0, omega, budget, so);
  write_torus_file(cfg.output_path("_torus.txt"), sol.K.periodic);
  write_report(cfg.output_path("_solve.json"), make_report("solve", cfg, to_json(sol, budget)));
  out << "solved in " << sol.iterations() << " steps, residual " << sol.residual.value << " on rho = "
      << sol.residual.rho << ", ||K - K0||_{rho/2} = " << sol.audit.K_drift << "\n";
  return 0;
}

int cmd_smooth(const RunConfig& cfg, std::ostream& out) {
  const HamiltonianFamily H = make_family(cfg);
  const FrequencyVector omega = make_frequency(cfg);
  const TorusEmbedding K0 = initial_torus(cfg);
  const RectangleDomain rect =
      build_rectangle(K0, cfg.rho, cfg.r, ParameterDomain::unbounded(H.param_dim()), cfg.lambda0);
  const CutoffFunction psi(K0, cfg.r);
  const HamiltonianFamily local = localize(H, psi, rect);
  const double e0 = strip_norm(error_function(H, cfg.lambda0, K0, omega.omega), cfg.rho).value;
  SelectionOptions sel;
  sel.backend = parse_backend(cfg.backend);
  sel.levels = cfg.levels;
  const ApproximantSequence seq =
      select_subsequence(local, rect, H.smoothness_class().value_or(cfg.l), omega.sigma, e0, sel);
  Json body = to_json(seq);
  body["e0_norm"] = e0;
  write_report(cfg.output_path("_smooth.json"), make_report("smooth", cfg, body));
  std::ofstream csv(cfg.output_path("_smooth.csv"));
  csv << "k,degree,distance,threshold,consecutive,repeated\n";
  csv << std::setprecision(17);
  for (const auto& a : seq.items)
    csv << a.k << "," << a.degree << "," << a.distance << "," << a.threshold << "," << a.consecutive << ","
        << (a.repeated ? 1 : 0) << "\n";
  out << "selected " << seq.size() << " approximants, " << seq.achieved_levels << " distinct, A = " << seq.A
      << ", k0 = " << seq.k0 << "\n";
  return 0;
}

int cmd_drive(const RunConfig& cfg, std::ostream& out) {
  const HamiltonianFamily H = make_family(cfg);
  const FrequencyVector omega = make_frequency(cfg);
  const TorusEmbedding K0 = initial_torus(cfg);
  DriverOptions o;
  o.c = cfg.c.value_or(0.0);
  o.l = cfg.l;
  o.k_stop = cfg.k_stop;
  o.stop_tolerance = cfg.stop_tolerance;
  o.tol = cfg.tol;
  o.residual_points = cfg.residual_points;
  o.selection.backend = parse_backend(cfg.backend);
  o.selection.levels = cfg.levels;
  o.solve.max_iterations = cfg.max_iterations;
  const DriveResult res = drive(H, K0, cfg.lambda0, omega, cfg.rho, cfg.r, o);
  write_torus_file(cfg.output_path("_torus.txt"), res.K.periodic);
  {
    std::ofstream csv(cfg.output_path("_ledger.csv"));
    write_ledger_csv(csv, res);
  }
  const Json body = to_json(res);
  write_report(cfg.output_path("_certificate.json"), make_report("drive", cfg, body));
  const Json& cert = body["certificate"];
  const bool ok = cert["all_steps_passed"].get<bool>() && cert["true_residual"]["passed"].get<bool>() &&
                  cert["c1_certified"].get<bool>();
  out << res.states.size() << " steps from k0 = " << res.k0 << ", true residual " << res.true_residual
      << " (bound " << res.residual_bound << "), tail " << res.tail << (ok ? ", certified" : ", NOT certified")
      << "\n";
  return ok ? 0 : 2;
}

int cmd_orbit_check(const RunConfig& cfg, std::ostream& out) {
  const HamiltonianFamily H = make_family(cfg);
  const std::string torus = cfg.orbit_torus.empty() ? cfg.output_path("_torus.txt") : cfg.orbit_torus;
  const TorusEmbedding K{read_torus_file(torus)};
  Eigen::VectorXd lambda = cfg.lambda0;
  if (!cfg.orbit_certificate.empty()) {
    const Json report = read_report(cfg.orbit_certificate);
    const auto& l = report.at("result").at("lambda");
    lambda.resize(static_cast<Eigen::Index>(l.size()));
    for (std::size_t i = 0; i < l.size(); ++i) lambda(static_cast<Eigen::Index>(i)) = l[i].get<double>();
  }
  OrbitOptions o;
  o.T = cfg.orbit_T;
  o.dt = cfg.orbit_dt;
  o.samples = cfg.orbit_samples;
  o.seed = cfg.orbit_seed;
  o.integrator = parse_integrator(cfg.orbit_integrator);
  const OrbitReport rep = orbit_check(H, lambda, K, cfg.omega, o);
  Json body = to_json(rep);
  body["torus"] = torus;
  body["lambda"] = to_json(lambda);
  body["tolerance"] = cfg.orbit_tolerance;
  body["passed"] = rep.max_deviation < cfg.orbit_tolerance;
  write_report(cfg.output_path("_orbit.json"), make_report("orbit-check", cfg, body));
  out << "max deviation " << rep.max_deviation << " over T = " << o.T << " (tolerance " << cfg.orbit_tolerance
      << "), energy drift " << rep.max_energy_drift << "\n";
  return rep.max_deviation < cfg.orbit_tolerance ? 0 : 2;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invariant tori of Hamiltonian families by a parameterization KAM scheme"};
  app.require_subcommand(1);
  std::string config_path;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"check-diophantine", "Verify the Diophantine inequality for omega", cmd_check_diophantine},
      {"solve", "Analytic Newton solve; writes the torus and a report", cmd_solve},
      {"smooth", "Select analytic approximants of a finitely smooth family", cmd_smooth},
      {"drive", "Full iteration for finitely smooth families; writes torus, ledger and certificate", cmd_drive},
      {"orbit-check", "Integrate orbits from a torus and compare with the rigid rotation", cmd_orbit_check},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", config_path, "Config file (key = value with [sections])");
    sub->allow_extras();
    sub->footer("Any config field can be overridden as --section.key value.");
    subs.push_back(sub);
  }
  std::string report_in, report_out;
  CLI::App* report = app.add_subcommand("report", "Re-emit a JSON report in canonical form");
  report->add_option("input", report_in, "Report file")->required();
  report->add_option("-o,--output", report_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) {
      const std::string text = dump_report(read_report(report_in));
      if (report_out.empty()) {
        out << text;
      } else {
        std::ofstream f(report_out, std::ios::binary);
        if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write '" + report_out + "'");
        f << text;
      }
      return 0;
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const RunConfig cfg = load_run_config(config_path, collect_overrides(subs[i]->remaining()));
      return commands[i].run(cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_hypothesis_failure() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace kam
