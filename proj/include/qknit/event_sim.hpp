#pragma once

// Monte Carlo detector click streams. The live quantum state is only the spin
// (two amplitudes): each emitted photon is measured or discarded as soon as
// it is emitted, which keeps the cost per pulse constant.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "qknit/protocol_model.hpp"

namespace qknit {

enum class Port : std::uint8_t { transmit = 0, reflect = 1 };  // + outcome / - outcome

inline constexpr int kChannels = 3;
inline constexpr int kDetectors = 2 * kChannels;

// Flag bits of DetectionEvent::flags.
inline constexpr std::uint8_t kFlagDark = 0x01;

struct DetectionEvent {
  std::uint64_t time_ps = 0;
  std::uint8_t detector = 0;  // channel * 2 + port
  std::uint8_t flags = 0;

  int channel() const { return detector / 2; }
  Port port() const { return static_cast<Port>(detector % 2); }

  static std::uint8_t detector_of(int channel, Port port) {
    return static_cast<std::uint8_t>(channel * 2 + static_cast<int>(port));
  }

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

inline Sign sign_of(Port p) { return p == Port::transmit ? Sign::plus : Sign::minus; }

// Probability that a photon with polarization `pol` leaves a PBS set to
// `axis` through `port`.
inline double port_probability(const Ket2& pol, Axis axis, Port port) {
  return std::norm(BasisVector{axis, sign_of(port)}.ket().dot(pol)) / pol.squaredNorm();
}

// Channel bases in force from start_ps onward.
struct SettingsSegment {
  std::uint64_t start_ps = 0;
  std::array<Axis, kChannels> axes{Axis::Z, Axis::X, Axis::Y};

  friend bool operator==(const SettingsSegment&, const SettingsSegment&) = default;
};

struct DetectorBankConfig {
  double efficiency = 0.01;
  double deadtime = 20e-9;  // s
  std::array<double, kChannels> channel_probabilities{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<Axis, kChannels> channel_basis{Axis::Z, Axis::X, Axis::Y};
  double timing_jitter_sigma = 0.0;  // s
  double dark_count_rate = 0.0;      // per detector, 1/s
  std::vector<SettingsSegment> schedule;  // empty: channel_basis throughout

  void validate() const {
    require(efficiency >= 0 && efficiency <= 1, "efficiency must be in [0, 1]");
    require(deadtime >= 0 && std::isfinite(deadtime), "deadtime must be non-negative");
    double sum = 0;
    for (double p : channel_probabilities) {
      require(p >= 0, "channel probabilities must be non-negative");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "channel probabilities must sum to 1");
    require(timing_jitter_sigma >= 0 && std::isfinite(timing_jitter_sigma), "jitter must be non-negative");
    require(dark_count_rate >= 0 && std::isfinite(dark_count_rate), "dark count rate must be non-negative");
    for (std::size_t i = 1; i < schedule.size(); ++i)
      require(schedule[i].start_ps > schedule[i - 1].start_ps, "settings schedule must be strictly increasing");
  }

  // Settings in force at time t, as a full segment.
  SettingsSegment settings_at(std::uint64_t t_ps) const {
    SettingsSegment out{0, channel_basis};
    for (const auto& s : schedule) {
      if (s.start_ps > t_ps) break;
      out = s;
    }
    return out;
  }
};

struct StreamConfig {
  ProtocolConfig protocol{};
  DetectorBankConfig bank{};
  double duration = 0.1;  // s
  std::uint64_t seed = 42;

  void validate() const {
    protocol.validate();
    bank.validate();
    require(duration > 0 && std::isfinite(duration), "duration must be positive");
  }

  std::uint64_t period_ps() const { return static_cast<std::uint64_t>(std::llround(protocol.pulse_period * 1e12)); }
  std::uint64_t pulses() const {
    return static_cast<std::uint64_t>(std::floor(duration * 1e12 / static_cast<double>(period_ps())));
  }
};

struct StreamStats {
  std::uint64_t pulses = 0;
  std::uint64_t excitations = 0;
  std::uint64_t detected_photons = 0;  // reached a detector, before deadtime
  std::uint64_t dark_counts = 0;       // generated, before deadtime
  std::uint64_t clicks = 0;            // written to the stream
  std::uint64_t deadtime_losses = 0;
  std::array<std::uint64_t, kChannels> routed{};
};

// Last-click bookkeeping for the six detectors; non-paralyzable deadtime.
class DetectorBank {
 public:
  explicit DetectorBank(const DetectorBankConfig& cfg)
      : cfg_(cfg),
        deadtime_ps_(static_cast<std::uint64_t>(std::llround(cfg.deadtime * 1e12))),
        channel_pick_(cfg.channel_probabilities.begin(), cfg.channel_probabilities.end()) {}

  template <class Rng>
  int sample_channel(Rng& rng) {
    return channel_pick_(rng);
  }

  // Registers a click unless the detector is still dead from its last
  // registered click.
  bool click(std::uint8_t detector, std::uint64_t time_ps) {
    auto& last = last_[detector];
    if (last && time_ps - *last < deadtime_ps_) return false;
    last = time_ps;
    return true;
  }

  const DetectorBankConfig& config() const { return cfg_; }

 private:
  const DetectorBankConfig& cfg_;
  std::uint64_t deadtime_ps_;
  std::discrete_distribution<int> channel_pick_;
  std::array<std::optional<std::uint64_t>, kDetectors> last_{};
};

// Routes a photon whose polarization outcome in its channel's basis is known
// to the matching PBS port; returns the click unless the detector is dead.
inline std::optional<DetectionEvent> route_and_click(int channel, Port outcome, std::uint64_t time_ps,
                                                     DetectorBank& bank, std::uint8_t flags = 0) {
  const auto det = DetectionEvent::detector_of(channel, outcome);
  if (!bank.click(det, time_ps)) return std::nullopt;
  return DetectionEvent{time_ps, det, flags};
}

namespace detail {

struct SpinAmps {
  cplx a{1.0, 0.0};  // up
  cplx b{0.0, 0.0};  // down

  void apply(const Gate& g) {
    const cplx na = g(0, 0) * a + g(0, 1) * b;
    const cplx nb = g(1, 0) * a + g(1, 1) * b;
    a = na;
    b = nb;
  }

  void normalize() {
    const double n = std::sqrt(std::norm(a) + std::norm(b));
    a /= n;
    b /= n;
  }
};

struct LaterFirst {
  bool operator()(const DetectionEvent& x, const DetectionEvent& y) const {
    return x.time_ps != y.time_ps ? x.time_ps > y.time_ps : x.detector > y.detector;
  }
};

}  // namespace detail

// Streams clicks in non-decreasing time order to `sink`. Equal seeds give
// identical streams.
template <class Sink>
StreamStats simulate_stream(const StreamConfig& cfg, Sink&& sink) {
  cfg.validate();
  const ProtocolConfig& pc = cfg.protocol;
  const DetectorBankConfig& bc = cfg.bank;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> emission_delay(1.0 / pc.radiative_lifetime);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double w = pc.precession_rate();
  const double T = pc.pulse_period;
  const Gate skip_gate = precession_gate(pc.precession_per_period);
  // Random Z phase with E[exp(i phi)] = exp(-(T/T2)^2).
  const double kick_sigma = std::isinf(pc.dephasing_time) ? 0.0 : std::sqrt(2.0) * T / pc.dephasing_time;
  const double jitter_ps = bc.timing_jitter_sigma * 1e12;
  const auto jitter_margin = static_cast<std::uint64_t>(std::ceil(8.0 * jitter_ps));
  const std::uint64_t period_ps = cfg.period_ps();
  const std::uint64_t n_pulses = cfg.pulses();

  DetectorBank bank(bc);
  StreamStats stats;
  stats.pulses = n_pulses;
  std::priority_queue<DetectionEvent, std::vector<DetectionEvent>, detail::LaterFirst> pending;

  auto flush_before = [&](std::uint64_t limit) {
    while (!pending.empty() && pending.top().time_ps < limit) {
      const DetectionEvent ev = pending.top();
      pending.pop();
      if (auto out = route_and_click(ev.channel(), ev.port(), ev.time_ps, bank, ev.flags)) {
        ++stats.clicks;
        sink(*out);
      } else {
        ++stats.deadtime_losses;
      }
    }
  };

  auto stamp = [&](std::uint64_t base, double delay_s) -> std::uint64_t {
    double offset = delay_s * 1e12;
    if (jitter_ps > 0) offset += std::clamp(gauss(rng), -8.0, 8.0) * jitter_ps;
    const double t = static_cast<double>(base) + std::round(offset);
    return t <= 0 ? 0 : static_cast<std::uint64_t>(t);
  };

  // Dark counts: one merged Poisson process over all detectors.
  const double dark_total = bc.dark_count_rate * kDetectors;
  std::exponential_distribution<double> dark_gap(dark_total > 0 ? dark_total : 1.0);
  double next_dark = dark_total > 0 ? dark_gap(rng) : std::numeric_limits<double>::infinity();
  std::uniform_int_distribution<int> dark_detector(0, kDetectors - 1);

  detail::SpinAmps spin;
  {
    // Fully mixed start: a uniformly random basis state is equivalent.
    if (unif(rng) < 0.5) spin = {{0.0, 0.0}, {1.0, 0.0}};
  }

  for (std::uint64_t k = 0; k < n_pulses; ++k) {
    const std::uint64_t base = k * period_ps;
    if (base > jitter_margin) flush_before(base - jitter_margin);

    while (next_dark * 1e12 < static_cast<double>(base + period_ps)) {
      const auto t = static_cast<std::uint64_t>(std::llround(next_dark * 1e12));
      pending.push({t, static_cast<std::uint8_t>(dark_detector(rng)), kFlagDark});
      ++stats.dark_counts;
      next_dark += dark_gap(rng);
    }

    if (kick_sigma > 0) {
      const double phi = kick_sigma * gauss(rng);
      spin.a *= std::polar(1.0, -phi / 2);
      spin.b *= std::polar(1.0, phi / 2);
    }

    if (!(unif(rng) < pc.determinism)) {
      spin.apply(skip_gate);
      continue;
    }
    ++stats.excitations;

    const double t = emission_delay(rng);
    spin.apply(precession_gate(pc.trion_precession_ratio * w * t));
    // Emission: a|up> + b|down> -> a|up>|-Z> + b|down>|Z>.
    if (unif(rng) < bc.efficiency) {
      const int ch = bank.sample_channel(rng);
      ++stats.routed[static_cast<std::size_t>(ch)];
      const std::uint64_t when = stamp(base, t);
      const Axis axis = bc.settings_at(base).axes[static_cast<std::size_t>(ch)];
      const Ket2 plus = BasisVector{axis, Sign::plus}.ket();
      // Spin left behind by the + outcome: <+|-Z> a |up> + <+|Z> b |down>.
      detail::SpinAmps on_plus{std::conj(plus(1)) * spin.a, std::conj(plus(0)) * spin.b};
      const double p_plus = std::norm(on_plus.a) + std::norm(on_plus.b);
      Port port;
      if (unif(rng) < p_plus) {
        port = Port::transmit;
        spin = on_plus;
      } else {
        port = Port::reflect;
        const Ket2 minus = BasisVector{axis, Sign::minus}.ket();
        spin = {std::conj(minus(1)) * spin.a, std::conj(minus(0)) * spin.b};
      }
      spin.normalize();
      ++stats.detected_photons;
      pending.push({when, DetectionEvent::detector_of(ch, port), 0});
    } else {
      // Lost photon: tracing it out dephases the spin in Z, same as a Z collapse.
      if (unif(rng) < std::norm(spin.a) / (std::norm(spin.a) + std::norm(spin.b))) {
        spin = {{1.0, 0.0}, {0.0, 0.0}};
      } else {
        spin = {{0.0, 0.0}, {1.0, 0.0}};
      }
    }
    spin.apply(precession_gate(w * std::max(T - t, 0.0)));
  }
  flush_before(std::numeric_limits<std::uint64_t>::max());
  return stats;
}

inline std::vector<DetectionEvent> simulate_stream(const StreamConfig& cfg, StreamStats* stats = nullptr) {
  std::vector<DetectionEvent> out;
  const StreamStats s = simulate_stream(cfg, [&](const DetectionEvent& e) { out.push_back(e); });
  if (stats) *stats = s;
  return out;
}

}  // namespace qknit
