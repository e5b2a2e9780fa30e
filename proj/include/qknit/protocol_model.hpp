#pragma once

// Modelled conditional density matrices: ideal gates plus the two noise
// mechanisms the model keeps (precession during the radiative lifetime and
// quasi-static spin dephasing), and the determinism-factor mixture and fit.

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>
#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include "qknit/quantum_core.hpp"
#include "qknit/table_states.hpp"

namespace qknit {

struct ProtocolConfig {
  double pulse_period = 1.0 / 456e6;          // s
  double precession_per_period = kPi / 2;     // rad
  double radiative_lifetime = 0.4e-9;         // s
  double integration_window = 0.4e-9;         // s
  double dephasing_time = std::numeric_limits<double>::infinity();  // s
  double trion_precession_ratio = 1.0;
  double determinism = 1.0;
  int quadrature_nodes = 16;

  // Values solved by calibrate() at the default lifetime; pinned so runs
  // don't depend on the optimizer.
  static constexpr double kCalibratedDephasingTime = 5.85708512e-9;
  static constexpr double kCalibratedPrecessionRatio = 2.87247646;

  static ProtocolConfig ideal() {
    ProtocolConfig c;
    c.radiative_lifetime = 1e-15;
    return c;
  }

  static ProtocolConfig calibrated() {
    ProtocolConfig c;
    c.dephasing_time = kCalibratedDephasingTime;
    c.trion_precession_ratio = kCalibratedPrecessionRatio;
    return c;
  }

  double precession_rate() const { return precession_per_period / pulse_period; }
  double pulse_rate() const { return 1.0 / pulse_period; }

  // Probability that an emitted photon lands inside the integration window.
  double window_acceptance() const { return -std::expm1(-integration_window / radiative_lifetime); }

  void validate() const {
    require(pulse_period > 0 && std::isfinite(pulse_period), "pulse_period must be positive");
    require(precession_per_period > 0 && precession_per_period < 2 * kPi, "precession_per_period must be in (0, 2pi)");
    require(radiative_lifetime > 0 && std::isfinite(radiative_lifetime), "radiative_lifetime must be positive");
    require(integration_window > 0 && std::isfinite(integration_window), "integration_window must be positive");
    require(dephasing_time > 0, "dephasing_time must be positive");
    require(trion_precession_ratio >= 0 && std::isfinite(trion_precession_ratio),
            "trion_precession_ratio must be non-negative");
    require(determinism >= 0 && determinism <= 1, "determinism must be in [0, 1]");
    require(quadrature_nodes >= 8, "quadrature_nodes must be at least 8");
  }
};

// ---------------------------------------------------------------------------
// Measurement specs

enum class Directive : std::uint8_t { project, trace, tomograph };
enum class Excitation : std::uint8_t { fire, skip };

struct PhotonDirective {
  Directive kind = Directive::tomograph;
  BasisVector onto{};  // used by project only

  static PhotonDirective project(BasisVector b) { return {Directive::project, b}; }
  static PhotonDirective trace() { return {Directive::trace, {}}; }
  static PhotonDirective tomograph() { return {Directive::tomograph, {}}; }
};

struct MeasurementSpec {
  std::vector<PhotonDirective> directives;
  std::vector<Excitation> mask;  // empty means all fire

  std::size_t n_pulses() const { return directives.size(); }

  Excitation excitation(std::size_t k) const { return mask.empty() ? Excitation::fire : mask[k]; }

  void validate() const {
    require(!directives.empty(), "measurement spec has no pulses");
    require(mask.empty() || mask.size() == directives.size(), "excitation mask length must match pulse count");
    bool any_tomo = false;
    for (std::size_t k = 0; k < directives.size(); ++k) {
      if (directives[k].kind == Directive::tomograph) any_tomo = true;
      if (excitation(k) == Excitation::skip)
        require(directives[k].kind == Directive::trace, "a skipped pulse emits no photon and must be traced");
    }
    require(any_tomo, "measurement spec needs at least one tomograph photon");
  }

  // Labels of the photons kept for tomography (label = pulse number).
  Register tomograph_labels() const {
    Register out;
    for (std::size_t k = 0; k < directives.size(); ++k)
      if (directives[k].kind == Directive::tomograph) out.push_back(QubitLabel::photon(static_cast<int>(k + 1)));
    return out;
  }
};

struct NamedSpec {
  MeasurementSpec spec;
  int ideal_row;  // reference row under the ideal configuration
  std::string description;
};

inline const std::map<std::string, NamedSpec>& named_specs() {
  static const std::map<std::string, NamedSpec> specs = [] {
    const auto T = PhotonDirective::tomograph();
    const auto tr = PhotonDirective::trace();
    const auto pZ = PhotonDirective::project({Axis::Z, Sign::plus});
    const auto mZ = PhotonDirective::project({Axis::Z, Sign::minus});
    const auto F = Excitation::fire, S = Excitation::skip;
    std::map<std::string, NamedSpec> m;
    m["fig2a"] = {{{T, T}, {}}, 2, "two photons, no conditioning"};
    m["fig2c"] = {{{mZ, T, T}, {}}, 4, "two photons after a -Z herald"};
    m["fig2e"] = {{{T, T, pZ}, {}}, 5, "two photons before a +Z detection"};
    m["fig3a"] = {{{mZ, T, pZ}, {}}, 6, "one photon between -Z and +Z flanks"};
    m["fig3c"] = {{{mZ, T, T, pZ}, {}}, 8, "two photons between -Z and +Z flanks"};
    m["fig4a"] = {{{mZ, tr, T}, {F, S, F}}, 9, "three pulses, middle not excited"};
    m["fig4b"] = {{{mZ, T, tr, T, pZ}, {F, F, S, F, F}}, 12, "five pulses, middle not excited"};
    m["fig4c"] = {{{mZ, tr, T}, {}}, 10, "three pulses, middle photon lost"};
    m["fig4d"] = {{{mZ, T, tr, T, pZ}, {}}, 14, "five pulses, middle photon lost"};
    return m;
  }();
  return specs;
}

inline const NamedSpec& named_spec(const std::string& name) {
  const auto& m = named_specs();
  auto it = m.find(name);
  if (it == m.end()) fail(errc::invalid_argument, "unknown spec '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Channels

struct ChannelBranch {
  double weight;
  EmissionMap map;
};

struct QuantumChannel {
  std::vector<ChannelBranch> branches;

  double total_weight() const {
    double w = 0;
    for (const auto& b : branches) w += b.weight;
    return w;
  }
};

// Gauss-Legendre nodes and weights on [0, 1], weights summing to 1.
inline std::vector<std::pair<double, double>> gauss_legendre_unit(int n) {
  require(n >= 1, "quadrature needs at least one node");
  std::vector<double> pos = boost::math::legendre_p_zeros<double>(n);
  std::vector<double> xs;
  for (double x : pos) {
    xs.push_back(x);
    if (x != 0.0) xs.push_back(-x);
  }
  std::sort(xs.begin(), xs.end());
  std::vector<std::pair<double, double>> out;
  for (double x : xs) {
    const double dp = boost::math::legendre_p_prime(n, x);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    out.emplace_back((x + 1.0) / 2.0, w / 2.0);
  }
  return out;
}

// Emission at time t after the pulse: the trion precesses for t at the scaled
// rate, the photon is emitted, and the ground-state spin precesses for the
// remainder of the period.
inline EmissionMap emission_map_at(double t, const ProtocolConfig& cfg) {
  const double w = cfg.precession_rate();
  Eigen::Matrix4cd post = Eigen::Matrix4cd::Zero();
  const Gate u_post = precession_gate(w * std::max(cfg.pulse_period - t, 0.0));
  post.block<2, 2>(0, 0) = u_post;
  post.block<2, 2>(2, 2) = u_post;
  return post * cnot_emission_map() * precession_gate(cfg.trion_precession_ratio * w * t);
}

// Emission-time mixture over [0, T_int] with exponential weights. Nodes sit in
// the exponential CDF variable so the sub-femtosecond ideal limit stays exact.
inline QuantumChannel noisy_emission_channel(const ProtocolConfig& cfg) {
  cfg.validate();
  const double acceptance = cfg.window_acceptance();
  QuantumChannel ch;
  for (const auto& [u, w] : gauss_legendre_unit(cfg.quadrature_nodes)) {
    const double t = -cfg.radiative_lifetime * std::log1p(-u * acceptance);
    ch.branches.push_back({w, emission_map_at(t, cfg)});
  }
  return ch;
}

// Emission-time mixture over [t_lo, t_hi), t_hi may be infinite, with
// exponential weights normalized to one. Panels one lifetime wide, each with
// `nodes` points in the CDF variable; the tail past 40 lifetimes is dropped.
inline QuantumChannel emission_channel_over(const ProtocolConfig& cfg, double t_lo, double t_hi) {
  cfg.validate();
  require(t_lo >= 0 && t_hi > t_lo, "emission interval must be non-empty");
  const double tau = cfg.radiative_lifetime;
  const double end = std::min(t_hi, t_lo + 40 * tau);
  const auto nodes = gauss_legendre_unit(cfg.quadrature_nodes);
  QuantumChannel ch;
  double total = 0;
  for (double a = t_lo; a < end; a += tau) {
    const double b = std::min(a + tau, end);
    // Mass of the panel relative to e^{-a/tau}.
    const double mass = -std::expm1(-(b - a) / tau);
    const double scale = std::exp(-(a - t_lo) / tau);
    for (const auto& [u, w] : nodes) {
      const double t = a - tau * std::log1p(-u * mass);
      ch.branches.push_back({w * mass * scale, emission_map_at(t, cfg)});
      total += w * mass * scale;
    }
  }
  for (auto& br : ch.branches) br.weight /= total;
  return ch;
}

// Channel for a photon that was emitted but never tagged: lost before the
// detectors (1 - efficiency) or detected after the integration window.
inline QuantumChannel untagged_photon_channel(const ProtocolConfig& cfg, double efficiency) {
  require(efficiency >= 0 && efficiency <= 1, "efficiency must be in [0, 1]");
  const double A = cfg.window_acceptance();
  const double early = (1 - efficiency) * A, late = 1 - A;
  QuantumChannel ch;
  for (auto [part, weight] : {std::pair{emission_channel_over(cfg, 0, cfg.integration_window), early},
                              std::pair{emission_channel_over(cfg, cfg.integration_window,
                                                              std::numeric_limits<double>::infinity()),
                                        late}}) {
    if (weight <= 0) continue;
    for (auto& br : part.branches) ch.branches.push_back({br.weight * weight / (early + late), br.map});
  }
  return ch;
}

inline DensityMatrix apply_channel(const DensityMatrix& rho, const QuantumChannel& ch, int new_photon_index) {
  require(!ch.branches.empty(), "channel has no branches");
  const auto spin = QubitLabel::spin();
  Register labels;
  Matrix acc;
  for (const auto& b : ch.branches) {
    DensityMatrix out = apply_emission(rho, spin, new_photon_index, b.map);
    if (labels.empty()) {
      labels = out.labels();
      acc = b.weight * out.matrix();
    } else {
      acc += b.weight * out.matrix();
    }
  }
  return DensityMatrix(std::move(labels), std::move(acc));
}

inline double dephasing_factor(double dt, const ProtocolConfig& cfg) {
  if (std::isinf(cfg.dephasing_time)) return 1.0;
  const double x = dt / cfg.dephasing_time;
  return std::exp(-x * x);
}

inline DensityMatrix dephase_spin(const DensityMatrix& rho, double dt, const ProtocolConfig& cfg) {
  require(dt >= 0, "dephasing interval must be non-negative");
  const auto pos = position_of(rho.labels(), QubitLabel::spin());
  const double f = dephasing_factor(dt, cfg);
  if (f == 1.0) return rho;
  const std::size_t n = rho.num_qubits();
  Matrix m = rho.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (detail::bit_at(static_cast<std::size_t>(i), pos, n) != detail::bit_at(static_cast<std::size_t>(j), pos, n))
        m(i, j) *= f;
  return DensityMatrix(rho.labels(), std::move(m));
}

struct ConditionalState {
  DensityMatrix rho;   // normalized tomograph-photon matrix
  double probability;  // joint probability of the projected outcomes
};

// Runs the pulse sequence from a fully mixed spin. Photon labels equal pulse
// numbers. Traced photons go through the same in-window channel as the others
// unless `untagged_efficiency` is given, in which case they are modelled as
// photons a detector bank of that efficiency failed to tag.
inline ConditionalState simulate_conditional(const ProtocolConfig& cfg, const MeasurementSpec& spec,
                                             std::optional<double> untagged_efficiency = std::nullopt) {
  cfg.validate();
  spec.validate();
  const QuantumChannel ch = noisy_emission_channel(cfg);
  const QuantumChannel traced = untagged_efficiency ? untagged_photon_channel(cfg, *untagged_efficiency) : ch;
  const auto spin = QubitLabel::spin();
  DensityMatrix rho = DensityMatrix::maximally_mixed({spin});
  double prob = 1.0;
  for (std::size_t k = 0; k < spec.n_pulses(); ++k) {
    rho = dephase_spin(rho, cfg.pulse_period, cfg);
    if (spec.excitation(k) == Excitation::skip) {
      rho = apply_gate(rho, spin, precession_gate(cfg.precession_per_period));
      continue;
    }
    const int label = static_cast<int>(k + 1);
    const auto& d = spec.directives[k];
    rho = apply_channel(rho, d.kind == Directive::trace ? traced : ch, label);
    if (d.kind == Directive::project) {
      auto pr = project(rho, QubitLabel::photon(label), d.onto);
      prob *= pr.probability;
      rho = std::move(pr.state);
    } else if (d.kind == Directive::trace) {
      rho = trace_out(rho, QubitLabel::photon(label));
    }
  }
  return {trace_out(rho, spin).normalized(), prob};
}

inline DensityMatrix simulate_conditional_dm(const ProtocolConfig& cfg, const MeasurementSpec& spec) {
  return simulate_conditional(cfg, spec).rho;
}

inline DensityMatrix simulate_conditional_dm(const ProtocolConfig& cfg, const std::string& spec_name) {
  return simulate_conditional_dm(cfg, named_spec(spec_name).spec);
}

// ---------------------------------------------------------------------------
// Determinism factor

// (1 - D) rho_i + D rho_ii
inline DensityMatrix determinism_mix(const DensityMatrix& rho_i, const DensityMatrix& rho_ii, double D) {
  require(rho_i.labels() == rho_ii.labels(), "determinism_mix: register mismatch");
  require(D >= 0 && D <= 1, "determinism must be in [0, 1]");
  return DensityMatrix(rho_i.labels(), (1.0 - D) * rho_i.matrix() + D * rho_ii.matrix());
}

struct DeterminismFit {
  double D_hat = 0;
  double fidelity = 0;
  bool identifiable = true;  // false when the two option models coincide
};

inline DeterminismFit fit_determinism(const DensityMatrix& rho_meas, const DensityMatrix& rho_i,
                                      const DensityMatrix& rho_ii) {
  require(rho_meas.dim() == rho_i.dim() && rho_i.labels() == rho_ii.labels(),
          "fit_determinism: register mismatch");
  auto objective = [&](double D) { return -fidelity(rho_meas, determinism_mix(rho_i, rho_ii, D)); };

  DeterminismFit out;
  if (trace_distance(rho_i, rho_ii) < 1e-9) {
    out.identifiable = false;
    out.D_hat = 1.0;
    out.fidelity = -objective(1.0);
    return out;
  }

  // Coarse scan first: fidelity is not guaranteed unimodal in D.
  constexpr int kGrid = 100;
  int best = 0;
  double best_val = objective(0.0);
  for (int g = 1; g <= kGrid; ++g) {
    const double v = objective(static_cast<double>(g) / kGrid);
    if (v < best_val) {
      best_val = v;
      best = g;
    }
  }
  const double lo = std::max(0.0, (best - 1.0) / kGrid);
  const double hi = std::min(1.0, (best + 1.0) / kGrid);
  const auto [d, v] = boost::math::tools::brent_find_minima(objective, lo, hi, 40);
  if (v <= best_val) {
    out.D_hat = d;
    out.fidelity = -v;
  } else {
    out.D_hat = static_cast<double>(best) / kGrid;
    out.fidelity = -best_val;
  }
  return out;
}

// Idealized rate of k photons detected on k consecutive pulses:
// pulse rate x (efficiency x D)^k. Ignores window truncation and deadtime.
inline double predicted_event_rate(int k, const ProtocolConfig& cfg, double efficiency) {
  require(k >= 1, "multiplicity must be positive");
  require(efficiency >= 0 && efficiency <= 1, "efficiency must be in [0, 1]");
  return cfg.pulse_rate() * std::pow(efficiency * cfg.determinism, k);
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationTargets {
  double dop = 0.79;         // single-photon rectilinear DOP, one photon between -Z and +Z
  double negativity = 0.32;  // two photons between -Z and +Z
};

struct ModelMetrics {
  double dop_single;  // fig3a
  double negativity;  // fig3c
  double dop_pair;    // fig4d, five pulses with the middle photon lost
};

inline ModelMetrics model_metrics(const ProtocolConfig& cfg) {
  return {rectilinear_dop(simulate_conditional_dm(cfg, "fig3a")), negativity(simulate_conditional_dm(cfg, "fig3c")),
          rectilinear_pair_dop(simulate_conditional_dm(cfg, "fig4d"))};
}

struct CalibrationResult {
  ProtocolConfig config;
  ModelMetrics metrics;
  double residual_norm;
};

// Solves for (dephasing time, trion precession ratio) at fixed lifetime.
// Works in (ln T2[ns], ratio) so the dephasing time stays positive.
inline CalibrationResult calibrate(ProtocolConfig base = {}, CalibrationTargets targets = {}) {
  struct Residual : Eigen::DenseFunctor<double> {
    ProtocolConfig base;
    CalibrationTargets targets;
    Residual(ProtocolConfig b, CalibrationTargets t) : DenseFunctor(2, 2), base(b), targets(t) {}
    ProtocolConfig at(const InputType& x) const {
      ProtocolConfig c = base;
      c.dephasing_time = std::exp(x(0)) * 1e-9;
      c.trion_precession_ratio = std::max(x(1), 0.0);
      return c;
    }
    int operator()(const InputType& x, ValueType& f) const {
      const ProtocolConfig c = at(x);
      f(0) = rectilinear_dop(simulate_conditional_dm(c, "fig3a")) - targets.dop;
      f(1) = negativity(simulate_conditional_dm(c, "fig3c")) - targets.negativity;
      return 0;
    }
  };
  Eigen::NumericalDiff<Residual> functor(Residual(base, targets));
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residual>> lm(functor);
  Eigen::VectorXd x(2);
  x << std::log(5.0), 1.0;
  lm.minimize(x);
  CalibrationResult out;
  out.config = functor.at(x);
  out.metrics = model_metrics(out.config);
  Eigen::VectorXd f(2);
  functor(x, f);
  out.residual_norm = f.norm();
  return out;
}

}  // namespace qknit
