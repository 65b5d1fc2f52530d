#include "kamtori/cli_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "kamtori/errors.hpp"
#include "kamtori/expression.hpp"

namespace kam {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void field_error(const std::string& key, const ConfigText::Entry& entry, const std::string& what) {
  std::ostringstream msg;
  if (entry.line > 0)
    msg << "line " << entry.line << ", field " << key << ": " << what;
  else
    msg << "override --" << key << ": " << what;
  throw Error(ErrorKind::ParseError, msg.str());
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
    throw std::invalid_argument("expected a finite number, got '" + text + "'");
  return v;
}

long parse_long(const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) throw std::invalid_argument("expected an integer, got '" + text + "'");
  return v;
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<double> values;
  for (std::string tok; in >> tok;) values.push_back(parse_double(tok));
  if (values.empty()) throw std::invalid_argument("expected a list of numbers");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double positive(double v) {
  if (!(v > 0.0)) throw std::invalid_argument("must be positive");
  return v;
}

int positive_int(long v) {
  if (v < 1 || v > 1'000'000'000) throw std::invalid_argument("must be a positive integer");
  return static_cast<int>(v);
}

/// Spiral-mean analogue of the golden mean for n > 1: (tau^{-1}, .., tau^{-n}), tau^3 = tau + 1.
Eigen::VectorXd default_omega(int n) {
  if (n == 1) return Eigen::VectorXd::Constant(1, (std::sqrt(5.0) - 1.0) / 2.0);
  double tau = 1.3;
  for (int i = 0; i < 60; ++i) tau -= (tau * tau * tau - tau - 1.0) / (3.0 * tau * tau - 1.0);
  Eigen::VectorXd w(n);
  for (int j = 0; j < n; ++j) w(j) = std::pow(tau, -(j + 1));
  return w;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"family.name", [](RunConfig& c, const std::string& v) { c.family.name = trim(v); }},
      {"family.expression", [](RunConfig& c, const std::string& v) { c.family.expression = trim(v); }},
      {"family.n", [](RunConfig& c, const std::string& v) { c.family.n = positive_int(parse_long(v)); }},
      {"family.param_dim", [](RunConfig& c, const std::string& v) { c.family.param_dim = positive_int(parse_long(v)); }},
      {"family.epsilon", [](RunConfig& c, const std::string& v) { c.family.epsilon = parse_double(v); }},
      {"family.smoothness", [](RunConfig& c, const std::string& v) { c.family.smoothness = positive_int(parse_long(v)); }},
      {"family.harmonics", [](RunConfig& c, const std::string& v) { c.family.harmonics = positive_int(parse_long(v)); }},
      {"family.coupling",
       [](RunConfig& c, const std::string& v) {
         parse_coupling(lower(trim(v)));
         c.family.coupling = lower(trim(v));
       }},
      {"frequency.omega",
       [](RunConfig& c, const std::string& v) {
         c.omega = lower(trim(v)) == "golden" ? Eigen::VectorXd() : parse_vector(v);
       }},
      {"frequency.sigma", [](RunConfig& c, const std::string& v) { c.sigma = positive(parse_double(v)); }},
      {"frequency.gamma",
       [](RunConfig& c, const std::string& v) {
         if (lower(trim(v)) == "estimate")
           c.gamma.reset();
         else
           c.gamma = positive(parse_double(v));
       }},
      {"frequency.kmax", [](RunConfig& c, const std::string& v) { c.diophantine_kmax = positive_int(parse_long(v)); }},
      {"torus.kmax", [](RunConfig& c, const std::string& v) { c.K_max = positive_int(parse_long(v)); }},
      {"torus.p0", [](RunConfig& c, const std::string& v) { c.p0 = parse_vector(v); }},
      {"torus.input", [](RunConfig& c, const std::string& v) { c.torus_input = trim(v); }},
      {"solver.rho", [](RunConfig& c, const std::string& v) { c.rho = positive(parse_double(v)); }},
      {"solver.r", [](RunConfig& c, const std::string& v) { c.r = positive(parse_double(v)); }},
      {"solver.c",
       [](RunConfig& c, const std::string& v) {
         if (lower(trim(v)) == "calibrate")
           c.c.reset();
         else
           c.c = positive(parse_double(v));
       }},
      {"solver.lambda0", [](RunConfig& c, const std::string& v) { c.lambda0 = parse_vector(v); }},
      {"solver.tol", [](RunConfig& c, const std::string& v) { c.tol = positive(parse_double(v)); }},
      {"solver.max_iterations", [](RunConfig& c, const std::string& v) { c.max_iterations = positive_int(parse_long(v)); }},
      {"driver.l", [](RunConfig& c, const std::string& v) { c.l = positive_int(parse_long(v)); }},
      {"driver.k_stop", [](RunConfig& c, const std::string& v) { c.k_stop = positive_int(parse_long(v)); }},
      {"driver.stop_tolerance", [](RunConfig& c, const std::string& v) { c.stop_tolerance = positive(parse_double(v)); }},
      {"driver.residual_points", [](RunConfig& c, const std::string& v) { c.residual_points = positive_int(parse_long(v)); }},
      {"driver.backend",
       [](RunConfig& c, const std::string& v) {
         parse_backend(lower(trim(v)));
         c.backend = lower(trim(v));
       }},
      {"driver.levels", [](RunConfig& c, const std::string& v) { c.levels = positive_int(parse_long(v)); }},
      {"orbit.T", [](RunConfig& c, const std::string& v) { c.orbit_T = positive(parse_double(v)); }},
      {"orbit.dt", [](RunConfig& c, const std::string& v) { c.orbit_dt = positive(parse_double(v)); }},
      {"orbit.samples", [](RunConfig& c, const std::string& v) { c.orbit_samples = positive_int(parse_long(v)); }},
      {"orbit.seed",
       [](RunConfig& c, const std::string& v) {
         const long s = parse_long(v);
         if (s < 0) throw std::invalid_argument("must be non-negative");
         c.orbit_seed = static_cast<unsigned>(s);
       }},
      {"orbit.integrator",
       [](RunConfig& c, const std::string& v) {
         parse_integrator(lower(trim(v)));
         c.orbit_integrator = lower(trim(v));
       }},
      {"orbit.tolerance", [](RunConfig& c, const std::string& v) { c.orbit_tolerance = positive(parse_double(v)); }},
      {"orbit.torus", [](RunConfig& c, const std::string& v) { c.orbit_torus = trim(v); }},
      {"orbit.certificate", [](RunConfig& c, const std::string& v) { c.orbit_certificate = trim(v); }},
      {"output.dir", [](RunConfig& c, const std::string& v) { c.output_dir = trim(v); }},
      {"output.prefix", [](RunConfig& c, const std::string& v) { c.output_prefix = trim(v); }},
  };
  return table;
}

}  // namespace

// ------------------------------------------------------------------ config text

ConfigText ConfigText::parse(std::istream& in) {
  ConfigText text;
  std::string section;
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    const auto comment = raw.find_first_of("#;");
    const std::string s = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        std::ostringstream msg;
        msg << "line " << line << ": malformed section header '" << s << "'";
        throw Error(ErrorKind::ParseError, msg.str());
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << "line " << line << ": expected 'key = value', got '" << s << "'";
      throw Error(ErrorKind::ParseError, msg.str());
    }
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) {
      std::ostringstream msg;
      msg << "line " << line << ": empty key";
      throw Error(ErrorKind::ParseError, msg.str());
    }
    text.set(section.empty() ? key : section + "." + key, trim(s.substr(eq + 1)), line);
  }
  return text;
}

ConfigText ConfigText::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open config file '" + path + "'");
  return parse(in);
}

void ConfigText::set(const std::string& key, const std::string& value, int line) { entries_[key] = {value, line}; }

// ------------------------------------------------------------------ run config

std::string RunConfig::output_path(const std::string& suffix) const {
  return output_dir + "/" + output_prefix + suffix;
}

RunConfig parse_run_config(const ConfigText& text) {
  RunConfig config;
  const auto& table = setters();
  for (const auto& [key, entry] : text.entries()) {
    const auto it = table.find(key);
    if (it == table.end()) field_error(key, entry, "unknown field");
    try {
      it->second(config, entry.value);
    } catch (const Error& e) {
      field_error(key, entry, e.what());
    } catch (const std::invalid_argument& e) {
      field_error(key, entry, e.what());
    }
  }

  const int n = config.family.n;
  const auto entry_of = [&](const std::string& key) {
    const auto it = text.entries().find(key);
    return it == text.entries().end() ? ConfigText::Entry{"", 0} : it->second;
  };
  const auto require_size = [&](const std::string& key, const Eigen::VectorXd& v, int size) {
    if (v.size() != 0 && v.size() != size) {
      std::ostringstream msg;
      msg << "expected " << size << " entries, got " << v.size();
      field_error(key, entry_of(key), msg.str());
    }
  };
  if (config.family.expression.empty()) config.family.param_dim = 2 * n;
  require_size("frequency.omega", config.omega, n);
  require_size("torus.p0", config.p0, n);
  require_size("solver.lambda0", config.lambda0, config.family.param_dim);
  if (!(config.sigma > n - 1)) {
    std::ostringstream msg;
    const ConfigText::Entry e = entry_of("frequency.sigma");
    if (e.line > 0) msg << "line " << e.line << ", ";
    msg << "field frequency.sigma: sigma = " << config.sigma << " must exceed n - 1 = " << n - 1;
    throw Error(ErrorKind::InvalidSigma, msg.str());
  }
  if (config.omega.size() == 0) config.omega = default_omega(n);
  // Rotator-type families have frequency p on the flat torus at height p.
  if (config.p0.size() == 0) config.p0 = config.omega;
  if (config.lambda0.size() == 0) config.lambda0 = Eigen::VectorXd::Zero(config.family.param_dim);
  return config;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  ConfigText text = path.empty() ? ConfigText{} : ConfigText::parse_file(path);
  for (const auto& [key, value] : overrides) text.set(key, value);
  return parse_run_config(text);
}

HamiltonianFamily make_family(const RunConfig& config) {
  const FamilyConfig& f = config.family;
  if (!f.expression.empty()) return expression_family(f.expression, f.n, f.param_dim, f.name);
  FamilyOptions o;
  o.epsilon = f.epsilon;
  o.smoothness = f.smoothness;
  o.harmonics = f.harmonics;
  o.coupling = parse_coupling(f.coupling);
  return builtin_family(f.name, f.n, o);
}

FrequencyVector make_frequency(const RunConfig& config) {
  return make_frequency(config.omega, config.gamma.value_or(0.0), config.sigma, config.diophantine_kmax);
}

TorusEmbedding initial_torus(const RunConfig& config) {
  if (!config.torus_input.empty()) {
    TorusEmbedding K{read_torus_file(config.torus_input)};
    if (K.n() != config.family.n || K.periodic.m() != 2 * config.family.n)
      throw Error(ErrorKind::InvalidArgument, "torus file '" + config.torus_input + "' does not match n");
    return K;
  }
  return TorusEmbedding::flat(config.family.n, config.K_max, config.p0);
}

Eigen::VectorXd initial_lambda(const RunConfig& config) { return config.lambda0; }

// ------------------------------------------------------------------ orbit check

Integrator parse_integrator(const std::string& name) {
  if (name == "rk4") return Integrator::RK4;
  if (name == "leapfrog") return Integrator::Leapfrog;
  throw Error(ErrorKind::InvalidArgument, "unknown integrator '" + name + "' (rk4 | leapfrog)");
}

Eigen::VectorXd integrator_step(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const Eigen::VectorXd& x,
                                double dt, Integrator scheme) {
  if (scheme == Integrator::RK4) {
    const Eigen::VectorXd k1 = vector_field(H, x, lambda);
    const Eigen::VectorXd k2 = vector_field(H, x + 0.5 * dt * k1, lambda);
    const Eigen::VectorXd k3 = vector_field(H, x + 0.5 * dt * k2, lambda);
    const Eigen::VectorXd k4 = vector_field(H, x + dt * k3, lambda);
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  // Stormer-Verlet for a general H: implicit half kick and drift by fixed point, explicit last kick.
  const int n = H.n();
  const auto grad = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
    Eigen::VectorXd y(2 * n);
    y << q, p;
    return H.grad_x(y, lambda);
  };
  const Eigen::VectorXd q0 = x.head(n), p0 = x.tail(n);
  Eigen::VectorXd ph = p0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd next = p0 - 0.5 * dt * grad(q0, ph).head(n);
    const double change = (next - ph).cwiseAbs().maxCoeff();
    ph = next;
    if (change <= 1e-16 * (1.0 + ph.cwiseAbs().maxCoeff())) break;
  }
  const Eigen::VectorXd v0 = grad(q0, ph).tail(n);
  Eigen::VectorXd q1 = q0 + dt * v0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd next = q0 + 0.5 * dt * (v0 + grad(q1, ph).tail(n));
    const double change = (next - q1).cwiseAbs().maxCoeff();
    q1 = next;
    if (change <= 1e-16 * (1.0 + q1.cwiseAbs().maxCoeff())) break;
  }
  Eigen::VectorXd out(2 * n);
  out << q1, ph - 0.5 * dt * grad(q1, ph).head(n);
  return out;
}

OrbitReport orbit_check(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                        const Eigen::VectorXd& omega, const OrbitOptions& options) {
  if (!(options.T > 0.0) || !(options.dt > 0.0) || options.samples < 1 || options.checkpoints < 1)
    throw Error(ErrorKind::InvalidArgument, "orbit check needs T > 0, dt > 0, samples >= 1, checkpoints >= 1");
  const long steps = std::lround(options.T / options.dt);
  const long per_checkpoint = std::max(1L, steps / options.checkpoints);
  const int checkpoints = static_cast<int>((steps + per_checkpoint - 1) / per_checkpoint);
  const double dt = options.T / static_cast<double>(steps);

  OrbitReport report;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  report.samples.resize(static_cast<std::size_t>(options.samples));
  for (auto& s : report.samples) {
    s.theta.resize(K.n());
    for (int j = 0; j < K.n(); ++j) s.theta(j) = unit(rng);
  }
  for (int c = 1; c <= checkpoints; ++c)
    report.checkpoint_times.push_back(dt * static_cast<double>(std::min(steps, c * per_checkpoint)));
  std::vector<std::vector<double>> per_sample(report.samples.size(), std::vector<double>(report.checkpoint_times.size()));
  std::vector<std::string> failures(report.samples.size());

  const auto integrate = [&](std::size_t i) {
    OrbitSample& s = report.samples[i];
    Eigen::VectorXd x = K.eval_real(s.theta);
    const double e0 = H.value(x, lambda);
    long done = 0;
    for (std::size_t c = 0; c < report.checkpoint_times.size(); ++c) {
      const long target = std::min(steps, static_cast<long>(c + 1) * per_checkpoint);
      for (; done < target; ++done) {
        x = integrator_step(H, lambda, x, dt, options.integrator);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > options.blowup) {
          std::ostringstream msg;
          msg << "orbit from theta = " << s.theta.transpose() << " left |x| <= " << options.blowup << " at t = "
              << dt * static_cast<double>(done + 1);
          failures[i] = msg.str();
          return;
        }
      }
      const double t = report.checkpoint_times[c];
      const double dev = (x - K.eval_real(s.theta + omega * t)).cwiseAbs().maxCoeff();
      per_sample[i][c] = dev;
      s.deviation = std::max(s.deviation, dev);
      s.energy_drift = std::max(s.energy_drift, std::abs(H.value(x, lambda) - e0));
    }
  };

  // Samples are independent; each thread takes a strided share.
  const std::size_t workers =
      std::min<std::size_t>(report.samples.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < report.samples.size(); i += workers) integrate(i);
    });
  for (std::size_t i = 0; i < report.samples.size(); i += workers) integrate(i);
  for (auto& t : pool) t.join();

  for (const auto& f : failures)
    if (!f.empty()) throw Error(ErrorKind::IntegrationBlowup, f);
  report.checkpoint_deviation.assign(report.checkpoint_times.size(), 0.0);
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    report.max_deviation = std::max(report.max_deviation, report.samples[i].deviation);
    report.max_energy_drift = std::max(report.max_energy_drift, report.samples[i].energy_drift);
    for (std::size_t c = 0; c < per_sample[i].size(); ++c)
      report.checkpoint_deviation[c] = std::max(report.checkpoint_deviation[c], per_sample[i][c]);
  }
  return report;
}

// ------------------------------------------------------------------ reports

Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json to_json(const DiophantineVerdict& verdict, const FrequencyVector& omega) {
  return Json{{"omega", to_json(omega.omega)},
              {"gamma", omega.gamma},
              {"sigma", omega.sigma},
              {"pass", verdict.pass},
              {"worst_k", verdict.worst_k},
              {"min_product", verdict.min_product},
              {"margin", verdict.margin},
              {"verified_up_to", verdict.verified_up_to}};
}

Json to_json(const SmallnessLedger& ledger) {
  return Json{{"e_norm", ledger.e_norm},
              {"newton", {{"measured", ledger.lhs_newton}, {"bound", 1.0}, {"passed", ledger.newton_ok}}},
              {"drift", {{"measured", ledger.lhs_drift}, {"bound", ledger.lhs_drift + ledger.margin_drift},
                         {"passed", ledger.drift_ok}}}};
}

Json to_json(const DriftAudit& a) {
  const auto pair = [](double measured, double bound, bool ok) {
    return Json{{"measured", measured}, {"bound", bound}, {"passed", ok}};
  };
  return Json{{"beta", a.beta},
              {"K_drift", pair(a.K_drift, 0.0, a.K_ok)},
              {"lambda_drift", pair(a.lambda_drift, 0.0, a.lambda_ok)},
              {"d", pair(std::abs(a.d - a.d0), a.beta, a.d_ok)},
              {"v", pair(std::abs(a.v - a.v0), a.beta, a.v_ok)},
              {"tau", pair(std::abs(a.tau - a.tau0), a.beta, a.tau_ok)}};
}

Json to_json(const TorusSolution& sol, const KamBudget& budget) {
  Json history = Json::array();
  for (const auto& s : sol.history)
    history.push_back({{"rho_in", s.rho_in},
                       {"rho_out", s.rho_out},
                       {"e_in", s.e_in},
                       {"e_out", s.e_out},
                       {"delta_K", s.delta_K},
                       {"delta_lambda", to_json(s.delta_lambda)},
                       {"c_obs", s.c_obs}});
  Json audit = to_json(sol.audit);
  audit["K_drift"]["bound"] = budget.r;
  audit["lambda_drift"]["bound"] = budget.r;
  const auto nd = [](const NondegeneracyData& d) {
    return Json{{"d", d.d}, {"v", d.v}, {"tau", d.tau}, {"lambda_condition", d.lambda_cond}, {"residual_N", d.residual_N}};
  };
  return Json{{"budget",
               {{"rho", budget.rho},
                {"delta0", budget.delta0},
                {"r", budget.r},
                {"gamma", budget.gamma},
                {"sigma", budget.sigma},
                {"c", budget.c},
                {"beta_step", budget.beta_step},
                {"beta_total", budget.beta_total}}},
              {"initial_ledger", to_json(sol.initial_ledger)},
              {"iterations", sol.iterations()},
              {"residual", {{"rho", sol.residual.rho}, {"value", sol.residual.value}}},
              {"lambda", to_json(sol.lambda)},
              {"initial_nondegeneracy", nd(sol.initial_nondegeneracy)},
              {"final_nondegeneracy", nd(sol.nondegeneracy)},
              {"audit", audit},
              {"history", history}};
}

Json to_json(const ApproximantSequence& seq) {
  Json items = Json::array();
  for (const auto& a : seq.items)
    items.push_back({{"k", a.k},
                     {"degree", a.degree},
                     {"distance", a.distance},
                     {"threshold", a.threshold},
                     {"consecutive", a.consecutive},
                     {"envelope", a.threshold + (a.k < seq.size() ? seq.A * std::pow(4.0, -(a.k + 1) * seq.exponent) : 0.0)},
                     {"accepted", a.accepted},
                     {"repeated", a.repeated}});
  Json candidates = Json::array();
  for (const auto& c : seq.candidates) candidates.push_back({{"degree", c.degree}, {"distance", c.distance}});
  return Json{{"A", seq.A},
              {"exponent", seq.exponent},
              {"k0", seq.k0},
              {"achieved_levels", seq.achieved_levels},
              {"plateau", seq.plateau},
              {"envelope_holds", seq.envelope_holds()},
              {"items", items},
              {"candidates", candidates}};
}

namespace {

Json ledger_json(const std::vector<LedgerEntry>& ledger) {
  Json a = Json::array();
  for (const auto& e : ledger)
    a.push_back({{"name", e.name}, {"measured", e.measured}, {"bound", e.bound}, {"strict", e.strict},
                 {"passed", e.passed()}});
  return a;
}

}  // namespace

Json to_json(const DriveResult& res) {
  Json states = Json::array();
  for (const auto& s : res.states)
    states.push_back({{"k", s.k},
                      {"approximant", s.approximant},
                      {"rho_k", res.schedule.rho_k(s.k)},
                      {"r_k", res.schedule.r_k(s.k)},
                      {"e_norm", s.e_norm},
                      {"residual", s.residual},
                      {"iterations", s.iterations},
                      {"mu", s.mu},
                      {"d", s.d},
                      {"v", s.v},
                      {"tau", s.tau},
                      {"c", s.c},
                      {"psi_norm", s.psi_norm},
                      {"neumann_product", s.neumann_product},
                      {"hamiltonian_increment", s.hamiltonian_increment},
                      {"increment", s.increment},
                      {"increment_envelope", res.schedule.increment_envelope(s.k)},
                      {"lambda_increment", s.lambda_increment},
                      {"dk_increment", s.dk_increment},
                      {"lambda", to_json(s.lambda)},
                      {"passed", s.passed()},
                      {"ledger", ledger_json(s.ledger)}});
  bool all = true;
  for (const auto& s : res.states) all = all && s.passed();
  return Json{{"schedule", {{"rho", res.schedule.rho}, {"r", res.schedule.r}, {"l", res.schedule.l},
                            {"sigma", res.schedule.sigma}, {"ratio", res.schedule.ratio()}}},
              {"constants", {{"c_poly", res.c_poly}, {"c", res.c}, {"c_obs", res.c_obs}}},
              {"approximants", {{"A", res.A}, {"achieved_levels", res.achieved_levels}, {"k0", res.k0}}},
              {"first_step", {{"k0", res.first.k0}, {"skipped", res.first.skipped},
                              {"conditions", ledger_json(res.first.conditions)}}},
              {"states", states},
              {"lambda", to_json(res.lambda)},
              {"certificate",
               {{"all_steps_passed", all},
                {"terminated_at_fixed_point", res.terminated_at_fixed_point},
                {"tail", res.tail},
                {"c3_tail", res.c3_tail},
                {"true_residual", {{"measured", res.true_residual}, {"bound", res.residual_bound},
                                   {"passed", res.true_residual < res.residual_bound}}},
                {"c1_certified", res.c1_certified}}}};
}

Json to_json(const OrbitReport& report) {
  Json samples = Json::array();
  for (const auto& s : report.samples)
    samples.push_back({{"theta", to_json(s.theta)}, {"deviation", s.deviation}, {"energy_drift", s.energy_drift}});
  return Json{{"max_deviation", report.max_deviation},
              {"max_energy_drift", report.max_energy_drift},
              {"checkpoint_times", report.checkpoint_times},
              {"checkpoint_deviation", report.checkpoint_deviation},
              {"samples", samples}};
}

Json config_json(const RunConfig& c) {
  Json family = {{"name", c.family.name}, {"n", c.family.n}, {"param_dim", c.family.param_dim}};
  if (!c.family.expression.empty())
    family["expression"] = c.family.expression;
  else
    family.update({{"epsilon", c.family.epsilon}, {"smoothness", c.family.smoothness},
                   {"harmonics", c.family.harmonics}, {"coupling", c.family.coupling}});
  return Json{{"family", family},
              {"frequency", {{"omega", to_json(c.omega)}, {"sigma", c.sigma},
                             {"gamma", c.gamma ? Json(*c.gamma) : Json("estimate")}, {"kmax", c.diophantine_kmax}}},
              {"torus", {{"kmax", c.K_max}, {"p0", to_json(c.p0)}, {"input", c.torus_input}}},
              {"solver", {{"rho", c.rho}, {"r", c.r}, {"c", c.c ? Json(*c.c) : Json("calibrate")},
                          {"lambda0", to_json(c.lambda0)}, {"tol", c.tol}, {"max_iterations", c.max_iterations}}},
              {"driver", {{"l", c.l}, {"k_stop", c.k_stop}, {"stop_tolerance", c.stop_tolerance},
                          {"residual_points", c.residual_points}, {"backend", c.backend}, {"levels", c.levels}}},
              {"orbit", {{"T", c.orbit_T}, {"dt", c.orbit_dt}, {"samples", c.orbit_samples}, {"seed", c.orbit_seed},
                         {"integrator", c.orbit_integrator}, {"tolerance", c.orbit_tolerance}}}};
}

Json make_report(const std::string& kind, const RunConfig& config, Json body) {
  return Json{{"version", kReportVersion}, {"kind", kind}, {"config", config_json(config)}, {"result", std::move(body)}};
}

std::string dump_report(const Json& report) { return report.dump(2) + "\n"; }

void write_report(const std::string& path, const Json& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
  out << dump_report(report);
}

Json read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

}  // namespace kam
