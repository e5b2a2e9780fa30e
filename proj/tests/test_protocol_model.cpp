#include <random>

#include <gtest/gtest.h>

#include "qknit/protocol_model.hpp"

using namespace qknit;

namespace {

const QubitLabel S = QubitLabel::spin();
QubitLabel P(int k) { return QubitLabel::photon(k); }

DensityMatrix ideal_reference(int row) {
  if (row == 9) return partial_trace(table_density(9), {P(3)});
  return table_density(row);
}

DensityMatrix random_spin_photon_dm(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(8);
  for (auto& x : v) x = cplx(g(rng), g(rng));
  v /= v.norm();
  Vector w(8);
  for (auto& x : w) x = cplx(g(rng), g(rng));
  w /= w.norm();
  const double p = std::uniform_real_distribution<double>(0, 1)(rng);
  return DensityMatrix({P(1), P(2), S}, p * v * v.adjoint() + (1 - p) * w * w.adjoint());
}

// Independent oracle for the one-photon DOP between -Z and +Z flanks:
// dense midpoint rule directly in emission time, written with plain 2x2 and
// 4x2 algebra on the spin after the -Z herald.
double brute_force_flanked_dop(const ProtocolConfig& cfg, int steps) {
  const double T = cfg.pulse_period, w = cfg.precession_rate();
  const double dt = cfg.integration_window / steps;
  std::vector<std::pair<double, Eigen::Matrix<cplx, 4, 2>>> branches;
  double norm = 0;
  for (int k = 0; k < steps; ++k) {
    const double t = (k + 0.5) * dt;
    const double wt = std::exp(-t / cfg.radiative_lifetime);
    Eigen::Matrix<cplx, 4, 2> m = Eigen::Matrix<cplx, 4, 2>::Zero();
    // photon bit is the high bit: up -> |-Z>|up>, down -> |Z>|down>
    m(2, 0) = 1.0;
    m(1, 1) = 1.0;
    Eigen::Matrix4cd post = Eigen::Matrix4cd::Zero();
    post.block<2, 2>(0, 0) = post.block<2, 2>(2, 2) = precession_gate(w * (T - t));
    branches.emplace_back(wt, post * m * precession_gate(cfg.trion_precession_ratio * w * t));
    norm += wt;
  }
  auto fire = [&](const Eigen::Matrix2cd& spin) {
    Eigen::Matrix4cd out = Eigen::Matrix4cd::Zero();
    for (const auto& [wt, m] : branches) out += (wt / norm) * m * spin * m.adjoint();
    return out;  // (photon, spin)
  };
  const double f = dephasing_factor(T, cfg);
  auto dephase = [f](Eigen::Matrix2cd s) {
    s(0, 1) *= f;
    s(1, 0) *= f;
    return s;
  };
  // Pulse 1, herald -Z: keep photon bit 1 block.
  Eigen::Matrix2cd spin = Eigen::Matrix2cd::Identity() / 2.0;
  Eigen::Matrix4cd r = fire(dephase(spin));
  spin = r.block<2, 2>(2, 2);
  spin /= spin.trace();
  // Pulse 2, keep the photon.
  const Eigen::Matrix4cd two = fire(dephase(spin));
  // Pulse 3 on each spin block, then project photon 3 onto +Z and trace spins.
  Eigen::Matrix2cd photon2 = Eigen::Matrix2cd::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      Eigen::Matrix2cd sblock = two.block<2, 2>(2 * a, 2 * b);
      Eigen::Matrix2cd sd = sblock;
      sd(0, 1) *= f;
      sd(1, 0) *= f;
      Eigen::Matrix4cd out = Eigen::Matrix4cd::Zero();
      for (const auto& [wt, m] : branches) out += (wt / norm) * m * sd * m.adjoint();
      photon2(a, b) = out.block<2, 2>(0, 0).trace();  // photon 3 in |Z>
    }
  photon2 /= photon2.trace();
  const Ket2 x = BasisVector{Axis::X, Sign::plus}.ket(), xm = BasisVector{Axis::X, Sign::minus}.ket();
  const double px = (x.adjoint() * photon2 * x)(0, 0).real();
  const double pxm = (xm.adjoint() * photon2 * xm)(0, 0).real();
  return (px - pxm) / (px + pxm);
}

}  // namespace

TEST(Config, Validation) {
  ProtocolConfig c;
  EXPECT_NO_THROW(c.validate());
  c.determinism = 1.5;
  EXPECT_THROW(c.validate(), error);
  c = {};
  c.quadrature_nodes = 4;
  EXPECT_THROW(c.validate(), error);
  c = {};
  c.precession_per_period = 2 * kPi;
  EXPECT_THROW(c.validate(), error);
  c = {};
  c.radiative_lifetime = 0;
  EXPECT_THROW(c.validate(), error);
}

TEST(Spec, Validation) {
  MeasurementSpec s{{PhotonDirective::trace()}, {}};
  EXPECT_THROW(s.validate(), error);
  s = {{PhotonDirective::tomograph(), PhotonDirective::tomograph()}, {Excitation::fire, Excitation::skip}};
  EXPECT_THROW(s.validate(), error);
  s = {{PhotonDirective::tomograph()}, {Excitation::fire, Excitation::fire}};
  EXPECT_THROW(s.validate(), error);
  EXPECT_THROW(named_spec("fig9z"), error);
}

TEST(Quadrature, WeightsSumToOneAndIntegratePolynomials) {
  for (int n : {8, 9, 16, 33}) {
    const auto q = gauss_legendre_unit(n);
    ASSERT_EQ(static_cast<int>(q.size()), n);
    double s0 = 0, s5 = 0;
    for (const auto& [u, w] : q) {
      s0 += w;
      s5 += w * std::pow(u, 5);
    }
    EXPECT_NEAR(s0, 1.0, 1e-13);
    EXPECT_NEAR(s5, 1.0 / 6.0, 1e-13);
  }
}

TEST(Channel, IdealLimitReproducesRowThree) {
  const auto ch = noisy_emission_channel(ProtocolConfig::ideal());
  const auto h = precession_gate(kPi / 2);
  DensityMatrix rho(PureState::spin(Ket2(1, 0)));
  rho = apply_gate(rho, S, h);
  rho = apply_channel(rho, ch, 2);
  rho = apply_channel(rho, ch, 3);
  // The channel includes the spin precession up to the next pulse; undo it.
  rho = apply_gate(rho, S, precession_gate(-kPi / 2));
  EXPECT_GE(fidelity(rho, std::get<PureState>(table_state(3))), 0.9999);
}

TEST(Channel, TracePreservingOnRandomStates) {
  std::mt19937_64 rng(23);
  ProtocolConfig cfg = ProtocolConfig::calibrated();
  const auto ch = noisy_emission_channel(cfg);
  EXPECT_NEAR(ch.total_weight(), 1.0, 1e-13);
  for (int n = 0; n < 100; ++n) {
    const auto out = apply_channel(random_spin_photon_dm(rng), ch, 3);
    EXPECT_NEAR(out.trace(), 1.0, 1e-10);
    EXPECT_LT(out.hermiticity_error(), 1e-12);
  }
}

TEST(Channel, NodeDoublingConverges) {
  for (const auto& cfg0 : {ProtocolConfig{}, ProtocolConfig::calibrated()}) {
    ProtocolConfig a = cfg0, b = cfg0;
    b.quadrature_nodes = 2 * a.quadrature_nodes;
    for (const char* name : {"fig3a", "fig3c", "fig4d"}) {
      const auto ra = simulate_conditional_dm(a, name), rb = simulate_conditional_dm(b, name);
      EXPECT_LE((ra.matrix() - rb.matrix()).cwiseAbs().maxCoeff(), 1e-6) << name;
    }
  }
}

TEST(Channel, SinglePanelMatchesWindowChannel) {
  const ProtocolConfig cfg = ProtocolConfig::calibrated();
  const auto a = noisy_emission_channel(cfg);
  const auto b = emission_channel_over(cfg, 0, cfg.integration_window);
  ASSERT_EQ(a.branches.size(), b.branches.size());
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    EXPECT_NEAR(a.branches[i].weight, b.branches[i].weight, 1e-14);
    EXPECT_LT((a.branches[i].map - b.branches[i].map).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Channel, UntaggedPhotonChannelMatchesDirectIntegration) {
  // Midpoint rule in emission time out to 40 lifetimes; photons inside the
  // window count only when the detector missed them.
  std::mt19937_64 rng(41);
  const ProtocolConfig cfg = ProtocolConfig::calibrated();
  for (double eta : {0.0, 0.6, 1.0}) {
    const auto rho = random_spin_photon_dm(rng);
    const auto got = apply_channel(rho, untagged_photon_channel(cfg, eta), 3);
    const int steps = 100000;
    const double dt = 40 * cfg.radiative_lifetime / steps;
    Matrix acc = Matrix::Zero(16, 16);
    double norm = 0;
    for (int k = 0; k < steps; ++k) {
      const double t = (k + 0.5) * dt;
      const double wt = std::exp(-t / cfg.radiative_lifetime) * (t < cfg.integration_window ? 1 - eta : 1.0);
      if (wt == 0) continue;
      acc += wt * apply_emission(rho, S, 3, emission_map_at(t, cfg)).matrix();
      norm += wt;
    }
    EXPECT_LT((got.matrix() - acc / norm).cwiseAbs().maxCoeff(), 2e-6) << "efficiency " << eta;
  }
}

TEST(Channel, DefaultLifetimeLowersDopAndMatchesBruteForce) {
  for (const auto& cfg : {ProtocolConfig{}, ProtocolConfig::calibrated()}) {
    const double dop = rectilinear_dop(simulate_conditional_dm(cfg, "fig3a"));
    EXPECT_LT(dop, 1.0);
    EXPECT_NEAR(dop, brute_force_flanked_dop(cfg, 20000), 1e-6);
  }
}

TEST(Dephase, ZeroIntervalIsIdentity) {
  std::mt19937_64 rng(29);
  ProtocolConfig cfg;
  cfg.dephasing_time = 5e-9;
  const auto rho = random_spin_photon_dm(rng);
  EXPECT_EQ((dephase_spin(rho, 0.0, cfg).matrix() - rho.matrix()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dephase, LongIntervalDiagonalizesSpin) {
  std::mt19937_64 rng(31);
  ProtocolConfig cfg;
  cfg.dephasing_time = 5e-9;
  const auto rho = random_spin_photon_dm(rng);
  const auto out = dephase_spin(rho, 1e-6, cfg);
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 8; ++j) {
      if ((i & 1) != (j & 1)) EXPECT_EQ(std::abs(out.matrix()(i, j)), 0.0);
      else EXPECT_EQ(out.matrix()(i, j), rho.matrix()(i, j));
    }
  EXPECT_NEAR(out.trace(), rho.trace(), 1e-15);
}

TEST(Dephase, OneDephasingTimeGivesInverseE) {
  ProtocolConfig cfg;
  cfg.dephasing_time = 5e-9;
  const DensityMatrix plus(PureState::spin(Ket2(1, 1) / std::sqrt(2.0)));
  const auto out = dephase_spin(plus, 5e-9, cfg);
  EXPECT_NEAR(out.matrix()(0, 1).real() / plus.matrix()(0, 1).real(), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(std::exp(-1.0), 0.36787944117144233, 1e-16);
}

TEST(Dephase, NeedsSpin) { EXPECT_THROW(dephase_spin(table_density(8), 1e-9, ProtocolConfig{}), error); }

TEST(Conditional, IdealReproducesEveryNamedSpec) {
  for (const auto& [name, ns] : named_specs()) {
    const auto rho = simulate_conditional_dm(ProtocolConfig::ideal(), ns.spec);
    const auto ref = ideal_reference(ns.ideal_row);
    ASSERT_EQ(rho.labels(), ref.labels()) << name;
    EXPECT_GE(fidelity(rho, ref), 1.0 - 1e-9) << name;
    EXPECT_LT(trace_distance(rho, ref), 1e-7) << name;
  }
}

TEST(Conditional, IdealSinglePhotonIsUnpolarized) {
  const MeasurementSpec s{{PhotonDirective::tomograph()}, {}};
  const auto rho = simulate_conditional_dm(ProtocolConfig::ideal(), s);
  EXPECT_LT(trace_distance(rho, table_density(1)), 1e-12);
}

TEST(Conditional, ImpossibleConditioningAborts) {
  // After a -Z herald the ideal spin emits +Z on the skipped-pulse sequence;
  // conditioning the last photon on -Z has zero probability.
  const MeasurementSpec s{{PhotonDirective::project({Axis::Z, Sign::minus}), PhotonDirective::trace(),
                           PhotonDirective::project({Axis::Z, Sign::minus}), PhotonDirective::tomograph()},
                          {Excitation::fire, Excitation::skip, Excitation::fire, Excitation::fire}};
  try {
    simulate_conditional_dm(ProtocolConfig::ideal(), s);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::impossible_outcome);
  }
}

TEST(Conditional, IdealStabilizers) {
  MeasurementSpec s;
  for (int k = 0; k < 6; ++k) s.directives.push_back(PhotonDirective::tomograph());
  const auto rho = simulate_conditional_dm(ProtocolConfig::ideal(), s);
  const auto first3 = partial_trace(rho, {P(1), P(2), P(3)});
  const auto first5 = partial_trace(rho, {P(1), P(2), P(3), P(4), P(5)});
  const double zxz = stabilizer_expectation(first3, PauliString::parse("ZXZ"));
  EXPECT_NEAR(stabilizer_expectation(first3, PauliString::parse("-ZXZ")), 1.0, 1e-10);
  EXPECT_NEAR(stabilizer_expectation(first5, PauliString::parse("ZXIXZ")), zxz * zxz, 1e-12);
  EXPECT_NEAR(stabilizer_expectation(partial_trace(rho, {P(3), P(4), P(5)}), PauliString::parse("-ZXZ")), 1.0,
              1e-10);
}

// Grid spans dephasing times down to 5 ns, just below the calibrated value.
// Below about 3 ns the DOP turns weakly increasing in the lifetime.
TEST(Conditional, DopMonotoneInDephasingRateAndLifetime) {
  const std::vector<double> inv_t2{0.0, 0.05e9, 0.1e9, 0.15e9, 0.2e9};
  const std::vector<double> taus{0.1e-9, 0.2e-9, 0.4e-9, 0.6e-9, 0.8e-9};
  for (double ratio : {1.0, ProtocolConfig::kCalibratedPrecessionRatio}) {
    std::vector<std::vector<double>> dop(5, std::vector<double>(5));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        ProtocolConfig c;
        c.trion_precession_ratio = ratio;
        c.dephasing_time = inv_t2[i] == 0 ? std::numeric_limits<double>::infinity() : 1.0 / inv_t2[i];
        c.radiative_lifetime = taus[j];
        dop[i][j] = rectilinear_dop(simulate_conditional_dm(c, "fig3a"));
      }
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        if (i + 1 < 5) {
          EXPECT_LE(dop[i + 1][j], dop[i][j] + 1e-12) << "ratio " << ratio;
        }
        if (j + 1 < 5) {
          EXPECT_LE(dop[i][j + 1], dop[i][j] + 1e-12) << "ratio " << ratio;
        }
      }
  }
}

TEST(Conditional, FivePulseIdentityHoldsUnderNoise) {
  for (const auto& cfg : {ProtocolConfig{}, ProtocolConfig::calibrated()}) {
    const auto m = model_metrics(cfg);
    EXPECT_NEAR(std::abs(m.dop_pair), m.dop_single * m.dop_single, 0.05);
  }
}

TEST(Conditional, OptionDiscrimination) {
  const ProtocolConfig cfg;
  EXPECT_GE(negativity(simulate_conditional_dm(cfg, "fig4b")), 0.4);
  EXPECT_LE(negativity(simulate_conditional_dm(cfg, "fig4d")), 0.02);
}

TEST(Determinism, MixEndpoints) {
  const auto a = table_density(4), b = DensityMatrix::maximally_mixed(a.labels());
  EXPECT_EQ((determinism_mix(a, b, 1.0).matrix() - b.matrix()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((determinism_mix(a, b, 0.0).matrix() - a.matrix()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(determinism_mix(a, b, 0.3).trace(), 1.0, 1e-12);
  EXPECT_THROW(determinism_mix(a, table_density(5), 0.5), error);
  EXPECT_THROW(determinism_mix(a, b, 1.1), error);
}

TEST(Determinism, NearlyDeterministicThreePulse) {
  const ProtocolConfig cfg;
  const auto ri = simulate_conditional_dm(cfg, "fig4a"), rii = simulate_conditional_dm(cfg, "fig4c");
  EXPECT_GE(fidelity(determinism_mix(ri, rii, 0.99), rii), 0.99);
}

TEST(Determinism, FitRecoversExactMixtures) {
  for (const auto& cfg : {ProtocolConfig{}, ProtocolConfig::calibrated()}) {
    for (const auto& [opt_i, opt_ii] : {std::pair{"fig4a", "fig4c"}, std::pair{"fig4b", "fig4d"}}) {
      const auto ri = simulate_conditional_dm(cfg, opt_i), rii = simulate_conditional_dm(cfg, opt_ii);
      for (double d : {0.0, 0.25, 0.5, 0.7, 0.75, 1.0}) {
        const auto fit = fit_determinism(determinism_mix(ri, rii, d), ri, rii);
        EXPECT_TRUE(fit.identifiable);
        EXPECT_NEAR(fit.D_hat, d, 0.01) << opt_i << " D=" << d;
        EXPECT_NEAR(fit.fidelity, 1.0, 1e-6);
      }
    }
  }
}

TEST(Determinism, FitOnOptionTwoItself) {
  const ProtocolConfig cfg;
  const auto ri = simulate_conditional_dm(cfg, "fig4b"), rii = simulate_conditional_dm(cfg, "fig4d");
  const auto fit = fit_determinism(rii, ri, rii);
  EXPECT_NEAR(fit.D_hat, 1.0, 1e-4);
  EXPECT_NEAR(fit.fidelity, 1.0, 1e-9);
}

TEST(Determinism, DegenerateModelsAreFlagged) {
  const auto r = table_density(10);
  const auto fit = fit_determinism(r, r, r);
  EXPECT_FALSE(fit.identifiable);
}

TEST(Rates, IdealizedAdjacentRates) {
  const ProtocolConfig cfg;
  EXPECT_NEAR(predicted_event_rate(2, cfg, 0.01), 45.6e3, 1e-6);
  EXPECT_NEAR(predicted_event_rate(3, cfg, 0.01), 456.0, 1e-9);
  EXPECT_THROW(predicted_event_rate(0, cfg, 0.01), error);
}

TEST(Calibration, SolvesToPinnedParameters) {
  const auto r = calibrate();
  EXPECT_LT(r.residual_norm, 1e-6);
  EXPECT_NEAR(r.config.dephasing_time, ProtocolConfig::kCalibratedDephasingTime, 1e-12);
  EXPECT_NEAR(r.config.trion_precession_ratio, ProtocolConfig::kCalibratedPrecessionRatio, 1e-4);
  const auto m = model_metrics(ProtocolConfig::calibrated());
  EXPECT_NEAR(m.dop_single, 0.79, 1e-6);
  EXPECT_NEAR(m.negativity, 0.32, 1e-6);
}
