#pragma once

// Polarization tomography of conditioned photons from a CountsTable, and the
// determinism-factor analysis built on it.

#include <algorithm>
#include <cstdlib>
#include <map>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "qknit/correlator.hpp"
#include "qknit/protocol_model.hpp"

namespace qknit {

enum class Estimator : std::uint8_t { linear, linear_psd };

struct Condition {
  std::size_t position;  // photon position within the correlated window
  BasisVector outcome;
};

// Which windows to use and which of their photons to reconstruct. Positions
// that are neither conditioned nor targeted are summed over.
struct TomographyRequest {
  std::vector<int> gaps;
  std::vector<Condition> conditioning;
  std::vector<std::size_t> targets;
  Estimator estimator = Estimator::linear_psd;

  std::size_t photons() const { return gaps.size() + 1; }

  void validate() const {
    for (int g : gaps) require(g == 1 || g == 2, "tomography gaps must be 1 or 2");
    require(targets.size() == 1 || targets.size() == 2, "tomography needs one or two target photons");
    require(targets.size() < 2 || targets[0] < targets[1], "target positions must be increasing");
    for (auto t : targets) {
      require(t < photons(), "target position outside the window");
      for (const auto& c : conditioning) require(c.position != t, "a target cannot also be a conditioning photon");
    }
    for (const auto& c : conditioning) require(c.position < photons(), "conditioning position outside the window");
  }

  // Photon labels numbered by pulse, first window photon = 1.
  Register target_labels() const {
    std::vector<int> offset{0};
    for (int g : gaps) offset.push_back(offset.back() + g);
    Register out;
    for (auto t : targets) out.push_back(QubitLabel::photon(offset[t] + 1));
    return out;
  }

  // The window a measurement spec corresponds to: photons present at every
  // fired, untraced pulse.
  static TomographyRequest from_spec(const MeasurementSpec& spec, Estimator est = Estimator::linear_psd) {
    spec.validate();
    TomographyRequest r;
    r.estimator = est;
    std::optional<std::size_t> last;
    for (std::size_t k = 0; k < spec.n_pulses(); ++k) {
      const auto& d = spec.directives[k];
      if (d.kind == Directive::trace || spec.excitation(k) == Excitation::skip) continue;
      if (last) r.gaps.push_back(static_cast<int>(k - *last));
      const std::size_t pos = last ? r.gaps.size() : 0;
      last = k;
      if (d.kind == Directive::project) r.conditioning.push_back({pos, d.onto});
      else r.targets.push_back(pos);
    }
    r.validate();
    return r;
  }
};

// Conditioned counts per target basis setting. Outcome index bit i (MSB first)
// is set when target i read the minus eigenstate.
struct TomographyData {
  Register labels;
  std::map<std::vector<Axis>, std::vector<double>> settings;

  std::size_t num_qubits() const { return labels.size(); }

  double total() const {
    double s = 0;
    for (const auto& [k, v] : settings)
      for (double n : v) s += n;
    return s;
  }
};

inline TomographyData collect(const CountsTable& counts, const TomographyRequest& req) {
  req.validate();
  TomographyData d;
  d.labels = req.target_labels();
  const std::size_t n = req.targets.size();
  for (const auto& [key, count] : counts.cells) {
    if (key.gaps != req.gaps) continue;
    bool ok = true;
    for (const auto& c : req.conditioning)
      ok = ok && key.bases[c.position] == c.outcome.axis && key.outcomes[c.position] == c.outcome.sign;
    if (!ok) continue;
    std::vector<Axis> setting;
    std::size_t idx = 0;
    for (auto t : req.targets) {
      setting.push_back(key.bases[t]);
      idx = (idx << 1) | (key.outcomes[t] == Sign::minus ? 1u : 0u);
    }
    auto& cell = d.settings[setting];
    cell.resize(std::size_t{1} << n, 0.0);
    cell[idx] += static_cast<double>(count);
  }
  return d;
}

struct ReconstructionResult {
  DensityMatrix dm;
  DensityMatrix linear;     // before any physicality projection
  double counts_used = 0;
  Eigen::MatrixXd stderr_re;  // one-sigma Poisson error of Re(rho_jk)
  Eigen::MatrixXd stderr_im;
  double clipped_mass = 0;  // sum of |negative eigenvalues| removed by the projection
  TomographyData data;
  Estimator estimator = Estimator::linear_psd;
};

namespace detail {

inline std::vector<std::vector<Pauli>> pauli_strings(std::size_t n) {
  std::vector<std::vector<Pauli>> out;
  const std::size_t total = std::size_t{1} << (2 * n);
  for (std::size_t m = 1; m < total; ++m) {
    std::vector<Pauli> s(n);
    for (std::size_t q = 0; q < n; ++q) s[q] = static_cast<Pauli>((m >> (2 * (n - 1 - q))) & 3);
    out.push_back(s);
  }
  return out;
}

inline Axis axis_of(Pauli p) { return p == Pauli::X ? Axis::X : p == Pauli::Y ? Axis::Y : Axis::Z; }

// Eigenvalue clipping onto the unit-trace PSD cone.
inline std::pair<Matrix, double> clip_to_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
  Eigen::VectorXd ev = es.eigenvalues();
  double clipped = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) < 0) {
      clipped -= ev(i);
      ev(i) = 0;
    }
  Matrix out = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  return {out / ev.sum(), clipped};
}

}  // namespace detail

// Linear inversion rho = 2^-n sum_P <P> P, each <P> estimated from every
// setting that measures P's non-identity factors. Errors are propagated
// linearly from independent Poisson cells.
inline ReconstructionResult reconstruct(const TomographyData& data, Estimator est = Estimator::linear_psd) {
  const std::size_t n = data.num_qubits();
  require(n == 1 || n == 2, "tomography supports one or two qubits");
  const std::size_t n_settings = n == 1 ? 3 : 9;
  std::vector<std::pair<std::vector<Axis>, const std::vector<double>*>> cells;
  for (const auto& [setting, v] : data.settings) {
    double s = 0;
    for (double c : v) s += c;
    if (s > 0) cells.emplace_back(setting, &v);
  }
  if (cells.size() < n_settings)
    fail(errc::insufficient_data, "tomography needs all " + std::to_string(n_settings) + " basis settings, got " +
                                      std::to_string(cells.size()));

  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  const std::size_t outcomes = std::size_t{1} << n;
  const double norm = 1.0 / static_cast<double>(d);
  Matrix rho = Matrix::Identity(d, d) * norm;
  // Jacobian of every matrix element with respect to every count cell.
  const std::size_t n_cells = cells.size() * outcomes;
  std::vector<Matrix> jac(n_cells, Matrix::Zero(d, d));

  for (const auto& P : detail::pauli_strings(n)) {
    Matrix op = Matrix::Ones(1, 1);
    for (auto p : P) op = kron(op, pauli_matrix(p));
    double num = 0, den = 0;
    std::vector<std::pair<std::size_t, double>> used;  // (cell index, eigenvalue)
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& setting = cells[c].first;
      bool match = true;
      for (std::size_t q = 0; q < n; ++q)
        match = match && (P[q] == Pauli::I || setting[q] == detail::axis_of(P[q]));
      if (!match) continue;
      for (std::size_t o = 0; o < outcomes; ++o) {
        double sgn = 1;
        for (std::size_t q = 0; q < n; ++q)
          if (P[q] != Pauli::I && ((o >> (n - 1 - q)) & 1)) sgn = -sgn;
        const double cnt = (*cells[c].second)[o];
        num += sgn * cnt;
        den += cnt;
        used.emplace_back(c * outcomes + o, sgn);
      }
    }
    const double e = num / den;
    rho += norm * e * op;
    for (const auto& [idx, sgn] : used) jac[idx] += norm * ((sgn - e) / den) * op;
  }

  ReconstructionResult r{DensityMatrix(data.labels, rho), DensityMatrix(data.labels, rho), 0, {}, {}, 0, {}, est};
  r.counts_used = data.total();
  r.stderr_re = Eigen::MatrixXd::Zero(d, d);
  r.stderr_im = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t o = 0; o < outcomes; ++o) {
      const double cnt = (*cells[c].second)[o];
      const Matrix& J = jac[c * outcomes + o];
      r.stderr_re += (J.real().array().square() * cnt).matrix();
      r.stderr_im += (J.imag().array().square() * cnt).matrix();
    }
  r.stderr_re = r.stderr_re.cwiseSqrt();
  r.stderr_im = r.stderr_im.cwiseSqrt();
  r.data = data;
  if (est == Estimator::linear_psd) {
    auto [m, clipped] = detail::clip_to_psd(rho);
    r.dm = DensityMatrix(data.labels, std::move(m));
    r.clipped_mass = clipped;
  }
  return r;
}

inline ReconstructionResult reconstruct_dm(const CountsTable& counts, const TomographyRequest& req) {
  const TomographyData data = collect(counts, req);
  if (!(data.total() > 0)) fail(errc::insufficient_data, "no conditioned counts match the request");
  return reconstruct(data, req.estimator);
}

// Expected counts for `rho` measured N times in every setting.
inline TomographyData exact_data(const DensityMatrix& rho, double per_setting) {
  const std::size_t n = rho.num_qubits();
  TomographyData d;
  d.labels = rho.labels();
  const std::vector<Axis> axes{Axis::X, Axis::Y, Axis::Z};
  const std::size_t n_settings = n == 1 ? 3 : 9;
  for (std::size_t s = 0; s < n_settings; ++s) {
    std::vector<Axis> setting;
    for (std::size_t q = 0; q < n; ++q) setting.push_back(axes[(s / (q == 0 && n == 2 ? 3 : 1)) % 3]);
    std::vector<double> v(std::size_t{1} << n);
    for (std::size_t o = 0; o < v.size(); ++o) {
      std::vector<BasisVector> out;
      for (std::size_t q = 0; q < n; ++q)
        out.push_back({setting[q], ((o >> (n - 1 - q)) & 1) ? Sign::minus : Sign::plus});
      v[o] = per_setting * std::max(0.0, population(rho, out));
    }
    d.settings[setting] = v;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  int resamples = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: QKNIT_THREADS, else hardware concurrency
};

inline int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QKNIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Every cell replaced by a Poisson draw around its count.
inline TomographyData poisson_resample(const TomographyData& d, std::mt19937_64& rng) {
  TomographyData out = d;
  for (auto& [k, v] : out.settings)
    for (double& c : v) c = c > 0 ? static_cast<double>(std::poisson_distribution<long long>(c)(rng)) : 0.0;
  return out;
}

// Evaluates `stat` on `resamples` Poisson resamples, in parallel. Each resample
// has its own seed, so results do not depend on the thread count. Resamples
// that lose a basis setting are skipped.
template <class Stat>
std::vector<std::vector<double>> bootstrap(const TomographyData& d, const BootstrapOptions& opt, Stat&& stat) {
  std::vector<std::optional<std::vector<double>>> slots(static_cast<std::size_t>(std::max(opt.resamples, 0)));
  const int workers = std::min<int>(worker_count(opt.threads), std::max<int>(1, static_cast<int>(slots.size())));
  auto work = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < slots.size(); i += static_cast<std::size_t>(workers)) {
      std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ull + i);
      try {
        slots[i] = stat(poisson_resample(d, rng));
      } catch (const error& e) {
        if (e.code() != errc::insufficient_data) throw;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<std::vector<double>> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

inline double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// Metrics

struct Estimate {
  double value = 0;
  double error = 0;
};

struct Metrics {
  Estimate fidelity;
  Estimate trace_distance;
  std::optional<Estimate> negativity;  // two qubits
  std::optional<Estimate> dop;         // one qubit, rectilinear
  std::optional<Estimate> dop_pair;    // two qubits, rectilinear
  std::vector<std::pair<PauliString, Estimate>> stabilizers;
};

namespace detail {

inline std::vector<double> metric_values(const DensityMatrix& rho, const DensityMatrix& ref,
                                         const std::vector<PauliString>& stabilizers) {
  std::vector<double> v{qknit::fidelity(rho, ref), qknit::trace_distance(rho, ref)};
  if (rho.num_qubits() == 2) {
    v.push_back(qknit::negativity(rho));
    v.push_back(rectilinear_pair_dop(rho));
  } else {
    v.push_back(rectilinear_dop(rho));
  }
  for (const auto& s : stabilizers) v.push_back(stabilizer_expectation(rho, s));
  return v;
}

}  // namespace detail

inline Metrics analyze(const ReconstructionResult& result, const DensityMatrix& reference,
                       const std::vector<PauliString>& stabilizers = {}, const BootstrapOptions& opt = {}) {
  if (result.dm.labels() != reference.labels())
    fail(errc::invalid_argument,
         "register mismatch: " + to_string(result.dm.labels()) + " vs " + to_string(reference.labels()));
  for (const auto& s : stabilizers)
    require(s.ops.size() == reference.num_qubits(), "stabilizer length does not match register");

  const auto point = detail::metric_values(result.dm, reference, stabilizers);
  const auto reps = bootstrap(result.data, opt, [&](const TomographyData& d) {
    return detail::metric_values(reconstruct(d, result.estimator).dm, reference, stabilizers);
  });
  auto est = [&](std::size_t i) {
    std::vector<double> col;
    for (const auto& r : reps) col.push_back(r[i]);
    return Estimate{point[i], sample_sd(col)};
  };
  Metrics m;
  m.fidelity = est(0);
  m.trace_distance = est(1);
  std::size_t i = 2;
  if (reference.num_qubits() == 2) {
    m.negativity = est(i++);
    m.dop_pair = est(i++);
  } else {
    m.dop = est(i++);
  }
  for (const auto& s : stabilizers) m.stabilizers.emplace_back(s, est(i++));
  return m;
}

// ---------------------------------------------------------------------------
// Determinism factor from data

enum class DeterminismPattern : std::uint8_t { three_pulse, five_pulse };

struct DeterminismOptions {
  DeterminismPattern pattern = DeterminismPattern::three_pulse;
  double efficiency = 0.01;        // detection efficiency of the bank that took the data
  double min_counts = 1000;        // below this the interval is flagged as wide
  BootstrapOptions bootstrap{};
};

struct DeterminismResult {
  double D_hat = 0;
  double D_error = 0;
  double fidelity = 0;      // best-fit fidelity of the measured matrix
  double mixture_weight = 0;  // fitted weight of the fired-but-lost option
  double counts_used = 0;
  bool identifiable = true;
  bool wide_interval = false;
  DensityMatrix measured;
};

inline const char* skip_spec(DeterminismPattern p) { return p == DeterminismPattern::three_pulse ? "fig4a" : "fig4b"; }
inline const char* lost_spec(DeterminismPattern p) { return p == DeterminismPattern::three_pulse ? "fig4c" : "fig4d"; }

// A missing middle photon is either a skipped pulse (weight 1 - D) or a fired
// pulse whose photon was not tagged (weight D (1 - p)), each scaled by the
// probability of the later conditioning outcomes under that option.
inline double determinism_from_weight(double w, double lost_to_skip_ratio) {
  const double denom = w + lost_to_skip_ratio * (1.0 - w);
  return denom > 0 ? std::clamp(w / denom, 0.0, 1.0) : 1.0;
}

inline DeterminismResult run_determinism_analysis(const CountsTable& counts, const ProtocolConfig& cfg,
                                                  const DeterminismOptions& opt = {}) {
  require(opt.efficiency > 0 && opt.efficiency <= 1, "efficiency must be in (0, 1]");
  const MeasurementSpec& skip = named_spec(skip_spec(opt.pattern)).spec;
  const MeasurementSpec& lost = named_spec(lost_spec(opt.pattern)).spec;
  ProtocolConfig model = cfg;
  model.determinism = 1.0;
  const ConditionalState rho_i = simulate_conditional(model, skip);
  const ConditionalState rho_ii = simulate_conditional(model, lost, opt.efficiency);
  const double p_tagged = opt.efficiency * model.window_acceptance();
  const double ratio = (1.0 - p_tagged) * rho_ii.probability / rho_i.probability;

  const TomographyRequest req = TomographyRequest::from_spec(lost, Estimator::linear_psd);
  const TomographyData data = collect(counts, req);
  DeterminismResult out{0, 0, 0, 0, data.total(), true, false, DensityMatrix::maximally_mixed(req.target_labels())};
  if (!(data.total() > 0)) fail(errc::insufficient_data, "no counts for the missing-middle pattern");
  const auto rec = reconstruct(data, Estimator::linear_psd);
  out.measured = rec.dm;

  auto fit = [&](const DensityMatrix& meas) {
    const DeterminismFit f = fit_determinism(meas, rho_i.rho, rho_ii.rho);
    return std::pair{f, determinism_from_weight(f.D_hat, ratio)};
  };
  const auto [f, D] = fit(rec.dm);
  out.mixture_weight = f.D_hat;
  out.D_hat = D;
  out.fidelity = f.fidelity;
  out.identifiable = f.identifiable;

  const auto reps = bootstrap(data, opt.bootstrap, [&](const TomographyData& d) {
    return std::vector<double>{fit(reconstruct(d, Estimator::linear_psd).dm).second};
  });
  std::vector<double> ds;
  for (const auto& r : reps) ds.push_back(r[0]);
  out.D_error = sample_sd(ds);
  out.wide_interval = !f.identifiable || out.counts_used < opt.min_counts || !(out.D_error <= 0.1);
  return out;
}

}  // namespace qknit
