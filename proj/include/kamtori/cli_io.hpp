#pragma once

// Run configuration, report serialization and the orbit-integration check
// used to validate computed tori independently of the solver.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "kamtori/diophantine.hpp"
#include "kamtori/driver.hpp"
#include "kamtori/fourier_torus.hpp"
#include "kamtori/hamiltonian.hpp"
#include "kamtori/kam_newton.hpp"
#include "kamtori/smoothing.hpp"

namespace kam {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportVersion = "kamtori-report/1";

// ------------------------------------------------------------------ config text

/// Flat "key = value" text with [section] headers; keys are stored as "section.key".
/// '#' and ';' start comments. Later assignments override earlier ones.
class ConfigText {
 public:
  struct Entry {
    std::string value;
    int line = 0;  ///< 0 for command-line overrides
  };

  static ConfigText parse(std::istream& in);
  static ConfigText parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value, int line = 0);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

struct FamilyConfig {
  std::string name = "forced_rotator";
  std::string expression;  ///< non-empty selects the expression interpreter
  int n = 1;
  int param_dim = 2;
  double epsilon = 1e-3;
  int smoothness = 4;
  int harmonics = 4096;
  std::string coupling = "translation";
};

struct RunConfig {
  FamilyConfig family;

  Eigen::VectorXd omega;        ///< empty selects the golden mean (n = 1) or its spiral analogue
  double sigma = 0.75;
  std::optional<double> gamma;  ///< nullopt: estimate
  int diophantine_kmax = 1000;

  int K_max = 16;
  Eigen::VectorXd p0;           ///< empty: omega
  std::string torus_input;

  double rho = 0.1;
  double r = 0.05;
  std::optional<double> c;  ///< nullopt: calibrate
  Eigen::VectorXd lambda0;
  double tol = 1e-10;
  int max_iterations = 25;

  int l = 4;
  int k_stop = 12;
  double stop_tolerance = 1e-12;
  int residual_points = 512;
  std::string backend = "trigonometric";
  int levels = 8;

  double orbit_T = 100.0;
  double orbit_dt = 1e-3;
  int orbit_samples = 8;
  unsigned orbit_seed = 2024;
  std::string orbit_integrator = "rk4";
  double orbit_tolerance = 1e-6;
  std::string orbit_torus;
  std::string orbit_certificate;

  std::string output_dir = ".";
  std::string output_prefix = "run";

  std::string output_path(const std::string& suffix) const;
};

/// Throws ParseError naming the line (or override) and field of the first bad entry.
RunConfig parse_run_config(const ConfigText& text);
RunConfig load_run_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides);

HamiltonianFamily make_family(const RunConfig& config);
FrequencyVector make_frequency(const RunConfig& config);
TorusEmbedding initial_torus(const RunConfig& config);
Eigen::VectorXd initial_lambda(const RunConfig& config);

// ------------------------------------------------------------------ orbit check

enum class Integrator { RK4, Leapfrog };

Integrator parse_integrator(const std::string& name);

struct OrbitOptions {
  double T = 100.0;
  double dt = 1e-3;
  int samples = 8;
  int checkpoints = 10;
  unsigned seed = 2024;
  Integrator integrator = Integrator::RK4;
  double blowup = 1e6;  ///< |x| beyond this aborts with IntegrationBlowup
};

struct OrbitSample {
  Eigen::VectorXd theta;
  double deviation = 0.0;      ///< max over checkpoints of |Phi_t(K(theta)) - K(theta + omega t)|
  double energy_drift = 0.0;   ///< max over checkpoints of |H(Phi_t) - H(K(theta))|
};

struct OrbitReport {
  double max_deviation = 0.0;
  double max_energy_drift = 0.0;
  std::vector<double> checkpoint_times;
  std::vector<double> checkpoint_deviation;  ///< max over samples at each checkpoint
  std::vector<OrbitSample> samples;
};

/// One fixed step of the chosen scheme for x' = J grad H_lambda(x).
Eigen::VectorXd integrator_step(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const Eigen::VectorXd& x,
                                double dt, Integrator scheme);

/// Integrates from K(theta_j) for random theta_j and compares with K(theta_j + omega t).
OrbitReport orbit_check(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                        const Eigen::VectorXd& omega, const OrbitOptions& options = {});

// ------------------------------------------------------------------ reports

Json to_json(const Eigen::VectorXd& v);
Json to_json(const DiophantineVerdict& verdict, const FrequencyVector& omega);
Json to_json(const SmallnessLedger& ledger);
Json to_json(const DriftAudit& audit);
Json to_json(const TorusSolution& sol, const KamBudget& budget);
Json to_json(const ApproximantSequence& seq);
Json to_json(const DriveResult& result);
Json to_json(const OrbitReport& report);
Json config_json(const RunConfig& config);

/// Wraps a body with the version and tool fields.
Json make_report(const std::string& kind, const RunConfig& config, Json body);

/// Two-space indented, key order preserved, doubles in shortest round-trip form.
std::string dump_report(const Json& report);
void write_report(const std::string& path, const Json& report);
Json read_report(const std::string& path);

// ------------------------------------------------------------------ command line

/// Runs the command-line tool; returns 0 on success, 2 on a hypothesis failure, 1 on any other error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace kam
