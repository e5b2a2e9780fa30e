#pragma once

// Time-tag post-processing: pulse binning, pair capture within the correlation
// window, chaining of pairs that share a photon, and tomography counts.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qknit/event_sim.hpp"
#include "qknit/timetag_io.hpp"

namespace qknit {

// Two clicks are stored as a pair when their pulses differ by less than this
// many integration windows.
inline constexpr int kCorrelationWindows = 3;
inline constexpr std::uint64_t kMaxGap = kCorrelationWindows - 1;

struct TaggedPhoton {
  std::uint64_t pulse_index = 0;
  std::uint8_t detector = 0;
  std::uint32_t delay_ps = 0;

  int channel() const { return detector / 2; }
  Port port() const { return static_cast<Port>(detector % 2); }
  std::uint64_t time_ps(std::uint64_t period_ps) const { return pulse_index * period_ps + delay_ps; }

  friend bool operator==(const TaggedPhoton&, const TaggedPhoton&) = default;
  friend auto operator<=>(const TaggedPhoton&, const TaggedPhoton&) = default;
};

struct CorrelatedEvent {
  std::vector<TaggedPhoton> photons;  // strictly increasing pulse_index

  std::size_t multiplicity() const { return photons.size(); }

  std::vector<int> gaps() const {
    std::vector<int> g;
    for (std::size_t i = 1; i < photons.size(); ++i)
      g.push_back(static_cast<int>(photons[i].pulse_index - photons[i - 1].pulse_index));
    return g;
  }

  friend bool operator==(const CorrelatedEvent&, const CorrelatedEvent&) = default;
  friend auto operator<=>(const CorrelatedEvent& a, const CorrelatedEvent& b) { return a.photons <=> b.photons; }
};

struct BinningStats {
  std::uint64_t input = 0;
  std::uint64_t kept = 0;
  std::uint64_t outside_window = 0;
  std::uint64_t same_pulse_dropped = 0;  // photons removed because their pulse clicked twice
};

// Streaming binner. Feed events in time order; photons come out in pulse order
// once their pulse can no longer receive another in-window click.
class PulseBinner {
 public:
  PulseBinner(std::uint64_t period_ps, std::uint64_t window_ps) : period_(period_ps), window_(window_ps) {
    require(period_ps > 0, "pulse period must be positive");
    require(window_ps < period_ps, "integration window must be shorter than the pulse period");
  }

  template <class Out>
  void push(const DetectionEvent& e, Out&& out) {
    ++stats_.input;
    if (any_ && e.time_ps < last_time_)
      fail(errc::non_monotone, "time tags go backwards at " + std::to_string(e.time_ps) + " ps");
    any_ = true;
    last_time_ = e.time_ps;
    const std::uint64_t pulse = e.time_ps / period_;
    const std::uint64_t delay = e.time_ps - pulse * period_;
    if (delay > window_) {
      ++stats_.outside_window;
      return;
    }
    if (held_count_ > 0 && pulse != held_.pulse_index) release(out);
    if (held_count_ == 0) {
      held_ = {pulse, e.detector, static_cast<std::uint32_t>(delay)};
    }
    ++held_count_;
  }

  template <class Out>
  void finish(Out&& out) {
    if (held_count_ > 0) release(out);
  }

  const BinningStats& stats() const { return stats_; }

 private:
  template <class Out>
  void release(Out&& out) {
    if (held_count_ == 1) {
      ++stats_.kept;
      out(held_);
    } else {
      stats_.same_pulse_dropped += held_count_;
    }
    held_count_ = 0;
  }

  std::uint64_t period_, window_;
  BinningStats stats_;
  bool any_ = false;
  std::uint64_t last_time_ = 0;
  TaggedPhoton held_{};
  std::uint64_t held_count_ = 0;
};

inline std::uint64_t window_ps_of(const ProtocolConfig& cfg) {
  return static_cast<std::uint64_t>(std::llround(cfg.integration_window * 1e12));
}

inline std::vector<TaggedPhoton> bin_to_pulses(const std::vector<DetectionEvent>& events, std::uint64_t period_ps,
                                               std::uint64_t window_ps, BinningStats* stats = nullptr) {
  PulseBinner b(period_ps, window_ps);
  std::vector<TaggedPhoton> out;
  auto sink = [&](const TaggedPhoton& p) { out.push_back(p); };
  for (const auto& e : events) b.push(e, sink);
  b.finish(sink);
  if (stats) *stats = b.stats();
  return out;
}

inline std::vector<CorrelatedEvent> find_pairs(const std::vector<TaggedPhoton>& tagged) {
  std::vector<CorrelatedEvent> out;
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    for (std::size_t j = i + 1; j < tagged.size(); ++j) {
      require(tagged[j].pulse_index > tagged[i].pulse_index, "tagged photons must have increasing pulse indices");
      if (tagged[j].pulse_index - tagged[i].pulse_index > kMaxGap) break;
      out.push_back({{tagged[i], tagged[j]}});
    }
  }
  return out;
}

// Joins pairs sharing a photon into maximal chains of three or more photons.
// Each connected group is reported once; its sub-chains are not.
inline std::vector<CorrelatedEvent> chain_events(const std::vector<CorrelatedEvent>& pairs) {
  std::vector<TaggedPhoton> nodes;
  for (const auto& p : pairs) {
    require(p.photons.size() == 2, "chain_events expects pairs");
    nodes.insert(nodes.end(), p.photons.begin(), p.photons.end());
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  auto id = [&](const TaggedPhoton& t) {
    return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), t) - nodes.begin());
  };

  std::vector<std::size_t> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& p : pairs) {
    const auto a = find(id(p.photons[0])), b = find(id(p.photons[1]));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  std::map<std::size_t, CorrelatedEvent> groups;
  for (std::size_t i = 0; i < nodes.size(); ++i) groups[find(i)].photons.push_back(nodes[i]);
  std::vector<CorrelatedEvent> out;
  for (auto& [root, ev] : groups)
    if (ev.photons.size() >= 3) out.push_back(std::move(ev));
  std::sort(out.begin(), out.end());
  return out;
}

// Single pass over tagged photons with look-back limited to the correlation
// window. Reports every pair and every maximal run (k >= 2) as it closes.
class StreamCorrelator {
 public:
  struct Counters {
    std::uint64_t photons = 0;
    std::uint64_t pairs = 0;
    std::array<std::uint64_t, 8> runs_by_size{};  // index k, last bucket is k >= 7
  };

  template <class OnPair, class OnRun>
  void push(const TaggedPhoton& t, OnPair&& on_pair, OnRun&& on_run) {
    ++counters_.photons;
    if (!run_.photons.empty()) {
      const auto last = run_.photons.back().pulse_index;
      require(t.pulse_index > last, "tagged photons must have increasing pulse indices");
      if (t.pulse_index - last > kMaxGap) close(on_run);
    }
    // Pair partners lie at most kMaxGap pulses back, so they are the tail of the run.
    for (auto it = run_.photons.rbegin(); it != run_.photons.rend(); ++it) {
      if (t.pulse_index - it->pulse_index > kMaxGap) break;
      ++counters_.pairs;
      on_pair(CorrelatedEvent{{*it, t}});
    }
    run_.photons.push_back(t);
  }

  template <class OnRun>
  void finish(OnRun&& on_run) {
    close(on_run);
  }

  const Counters& counters() const { return counters_; }

 private:
  template <class OnRun>
  void close(OnRun&& on_run) {
    const std::size_t k = run_.photons.size();
    if (k >= 2) {
      ++counters_.runs_by_size[std::min<std::size_t>(k, counters_.runs_by_size.size() - 1)];
      on_run(run_);
    }
    run_.photons.clear();
  }

  CorrelatedEvent run_;
  Counters counters_;
};

// ---------------------------------------------------------------------------
// Counts for tomography

struct CellKey {
  std::vector<int> gaps;
  std::vector<Axis> bases;
  std::vector<Sign> outcomes;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
  friend bool operator==(const CellKey&, const CellKey&) = default;

  // "gaps=1,2|bases=Z,X,Z|out=-Z,+X,+Z"
  std::string str() const {
    std::ostringstream os;
    os << "gaps=";
    for (std::size_t i = 0; i < gaps.size(); ++i) os << (i ? "," : "") << gaps[i];
    os << "|bases=";
    for (std::size_t i = 0; i < bases.size(); ++i) os << (i ? "," : "") << axis_char(bases[i]);
    os << "|out=";
    for (std::size_t i = 0; i < outcomes.size(); ++i) os << (i ? "," : "") << BasisVector{bases[i], outcomes[i]}.str();
    return os.str();
  }

  static CellKey parse(const std::string& s) {
    auto bad = [&]() -> CellKey { fail(errc::schema, "bad counts key '" + s + "'"); };
    auto split = [](const std::string& x, char d) {
      std::vector<std::string> out;
      std::string cur;
      std::istringstream is(x);
      while (std::getline(is, cur, d)) out.push_back(cur);
      return out;
    };
    const auto parts = split(s, '|');
    if (parts.size() != 3 || parts[0].rfind("gaps=", 0) != 0 || parts[1].rfind("bases=", 0) != 0 ||
        parts[2].rfind("out=", 0) != 0)
      return bad();
    CellKey k;
    for (const auto& g : split(parts[0].substr(5), ',')) {
      if (g != "1" && g != "2") return bad();
      k.gaps.push_back(g[0] - '0');
    }
    for (const auto& b : split(parts[1].substr(6), ',')) k.bases.push_back(parse_axis(b));
    for (const auto& o : split(parts[2].substr(4), ',')) {
      if (o.size() != 2 || (o[0] != '+' && o[0] != '-')) return bad();
      k.outcomes.push_back(BasisVector::parse(o).sign);
      if (k.outcomes.size() > k.bases.size() || BasisVector::parse(o).axis != k.bases[k.outcomes.size() - 1])
        return bad();
    }
    if (k.bases.size() != k.gaps.size() + 1 || k.outcomes.size() != k.bases.size()) return bad();
    return k;
  }
};

struct CountsTable {
  std::map<CellKey, std::uint64_t> cells;
  std::uint64_t events = 0;             // windows that landed in a cell
  std::uint64_t dropped_boundary = 0;   // windows straddling a settings change

  std::uint64_t at(const CellKey& k) const {
    auto it = cells.find(k);
    return it == cells.end() ? 0 : it->second;
  }

  void add(const CellKey& k, std::uint64_t n = 1) {
    cells[k] += n;
    events += n;
  }

  // Cellwise sum; associative and commutative.
  void merge(const CountsTable& other) {
    for (const auto& [k, n] : other.cells) cells[k] += n;
    events += other.events;
    dropped_boundary += other.dropped_boundary;
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (const auto& [k, n] : cells) s += n;
    return s;
  }
};

// Channel bases over the acquisition, one segment per settings change.
class SettingsLog {
 public:
  SettingsLog() : segments_{SettingsSegment{}} {}
  explicit SettingsLog(std::array<Axis, kChannels> fixed) : segments_{SettingsSegment{0, fixed}} {}
  explicit SettingsLog(const DetectorBankConfig& bank) {
    segments_.push_back({0, bank.channel_basis});
    for (const auto& s : bank.schedule) {
      if (s.start_ps == 0) segments_[0] = s;
      else segments_.push_back(s);
    }
  }

  std::size_t segment_at(std::uint64_t t_ps) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t_ps,
                               [](std::uint64_t t, const SettingsSegment& s) { return t < s.start_ps; });
    return static_cast<std::size_t>(it - segments_.begin()) - 1;
  }

  Axis axis(std::size_t segment, int channel) const { return segments_[segment].axes[static_cast<std::size_t>(channel)]; }

  const std::vector<SettingsSegment>& segments() const { return segments_; }

 private:
  std::vector<SettingsSegment> segments_;
};

// All gap sequences over {1, 2} of the given lengths.
inline std::vector<std::vector<int>> gap_patterns(std::size_t min_len = 1, std::size_t max_len = 3) {
  std::vector<std::vector<int>> out;
  for (std::size_t len = min_len; len <= max_len; ++len)
    for (std::size_t mask = 0; mask < (std::size_t{1} << len); ++mask) {
      std::vector<int> g(len);
      for (std::size_t i = 0; i < len; ++i) g[i] = (mask >> (len - 1 - i)) & 1 ? 2 : 1;
      out.push_back(g);
    }
  return out;
}

// Counts every contiguous window of each event whose gap sequence is one of
// `patterns`. A window reaches a cell only if all its photons were taken
// under one settings segment.
class CountsAccumulator {
 public:
  CountsAccumulator(SettingsLog log, std::uint64_t period_ps, std::vector<std::vector<int>> patterns = gap_patterns())
      : log_(std::move(log)), period_(period_ps) {
    for (auto& p : patterns) {
      max_len_ = std::max(max_len_, p.size());
      patterns_.insert(std::move(p));
    }
  }

  void add(const CorrelatedEvent& ev) {
    const auto& ph = ev.photons;
    const auto gaps = ev.gaps();
    for (std::size_t start = 0; start + 1 < ph.size(); ++start) {
      for (std::size_t len = 1; len <= max_len_ && start + len < ph.size(); ++len) {
        std::vector<int> g(gaps.begin() + static_cast<std::ptrdiff_t>(start),
                           gaps.begin() + static_cast<std::ptrdiff_t>(start + len));
        if (!patterns_.count(g)) continue;
        const std::size_t seg = log_.segment_at(ph[start].time_ps(period_));
        if (log_.segment_at(ph[start + len].time_ps(period_)) != seg) {
          ++table_.dropped_boundary;
          continue;
        }
        CellKey key;
        key.gaps = std::move(g);
        for (std::size_t i = start; i <= start + len; ++i) {
          key.bases.push_back(log_.axis(seg, ph[i].channel()));
          key.outcomes.push_back(sign_of(ph[i].port()));
        }
        table_.add(key);
      }
    }
  }

  const CountsTable& table() const { return table_; }
  CountsTable take() { return std::move(table_); }

 private:
  SettingsLog log_;
  std::uint64_t period_;
  std::set<std::vector<int>> patterns_;
  std::size_t max_len_ = 0;
  CountsTable table_;
};

inline CountsTable accumulate_counts(const std::vector<CorrelatedEvent>& events, const SettingsLog& log,
                                     std::uint64_t period_ps,
                                     std::vector<std::vector<int>> patterns = gap_patterns()) {
  CountsAccumulator acc(log, period_ps, std::move(patterns));
  for (const auto& e : events) acc.add(e);
  return acc.take();
}

// Maximal runs (k >= 2) from a tag stream, the input accumulate_counts expects.
inline std::vector<CorrelatedEvent> correlated_runs(const std::vector<TaggedPhoton>& tagged) {
  StreamCorrelator sc;
  std::vector<CorrelatedEvent> runs;
  auto on_run = [&](const CorrelatedEvent& r) { runs.push_back(r); };
  for (const auto& t : tagged) sc.push(t, [](const CorrelatedEvent&) {}, on_run);
  sc.finish(on_run);
  return runs;
}

// Simulation, binning, run detection and counting in one pass, without
// holding the click stream in memory.
inline CountsTable simulate_counts(const StreamConfig& cfg, std::vector<std::vector<int>> patterns = gap_patterns(),
                                   BinningStats* binning = nullptr) {
  PulseBinner binner(cfg.period_ps(), window_ps_of(cfg.protocol));
  StreamCorrelator sc;
  CountsAccumulator acc(SettingsLog(cfg.bank), cfg.period_ps(), std::move(patterns));
  auto on_run = [&](const CorrelatedEvent& r) { acc.add(r); };
  auto on_tag = [&](const TaggedPhoton& t) { sc.push(t, [](const CorrelatedEvent&) {}, on_run); };
  simulate_stream(cfg, [&](const DetectionEvent& e) { binner.push(e, on_tag); });
  binner.finish(on_tag);
  sc.finish(on_run);
  if (binning) *binning = binner.stats();
  return acc.take();
}

// ---------------------------------------------------------------------------
// Correlated-event files
//
//   header 24 bytes: "QKNEV1", u16 version, u64 pulse_period_ps, u64 window_ps
//   record: u32 body length, u8 k, k x (u64 pulse, u8 detector, u32 delay_ps)

inline constexpr std::array<char, 6> kEventMagic{'Q', 'K', 'N', 'E', 'V', '1'};
inline constexpr std::uint16_t kEventVersion = 1;

struct EventFileHeader {
  std::uint64_t pulse_period_ps = 0;
  std::uint64_t window_ps = 0;
};

class EventWriter {
 public:
  EventWriter(std::ostream& os, const EventFileHeader& h) : os_(os) {
    os_.write(kEventMagic.data(), kEventMagic.size());
    le::put<std::uint16_t>(os_, kEventVersion);
    le::put<std::uint64_t>(os_, h.pulse_period_ps);
    le::put<std::uint64_t>(os_, h.window_ps);
  }

  void write(const CorrelatedEvent& ev) {
    const auto k = ev.photons.size();
    require(k >= 1 && k <= 255, "event multiplicity out of range");
    le::put<std::uint32_t>(os_, static_cast<std::uint32_t>(1 + 13 * k));
    le::put<std::uint8_t>(os_, static_cast<std::uint8_t>(k));
    for (const auto& p : ev.photons) {
      le::put<std::uint64_t>(os_, p.pulse_index);
      le::put<std::uint8_t>(os_, p.detector);
      le::put<std::uint32_t>(os_, p.delay_ps);
    }
    ++count_;
  }

  void finish() {
    os_.flush();
    if (!os_) fail(errc::io, "failed writing event stream");
  }

  std::uint64_t count() const { return count_; }

 private:
  std::ostream& os_;
  std::uint64_t count_ = 0;
};

class EventReader {
 public:
  explicit EventReader(std::istream& is) : is_(is) {
    std::array<unsigned char, 24> h{};
    if (le::read_some(is_, h.data(), h.size()) != h.size()) fail(errc::truncated_file, "event header is truncated");
    if (std::memcmp(h.data(), kEventMagic.data(), kEventMagic.size()) != 0)
      fail(errc::schema, "not an event file (bad magic)");
    const auto version = le::get<std::uint16_t>(h.data() + 6);
    if (version != kEventVersion)
      fail(errc::version_mismatch, "event file version " + std::to_string(version) + ", expected " +
                                       std::to_string(kEventVersion));
    header_.pulse_period_ps = le::get<std::uint64_t>(h.data() + 8);
    header_.window_ps = le::get<std::uint64_t>(h.data() + 16);
  }

  const EventFileHeader& header() const { return header_; }

  bool next(CorrelatedEvent& ev) {
    std::array<unsigned char, 4> len{};
    const std::size_t got = le::read_some(is_, len.data(), len.size());
    if (got == 0) return false;
    if (got != len.size()) fail(errc::truncated_file, "event file ends inside a length prefix");
    const auto body_len = le::get<std::uint32_t>(len.data());
    if (body_len < 1 + 13 || (body_len - 1) % 13 != 0) fail(errc::schema, "bad event record length");
    std::vector<unsigned char> body(body_len);
    if (le::read_some(is_, body.data(), body.size()) != body.size())
      fail(errc::truncated_file, "event file ends inside a record");
    const std::size_t k = body[0];
    if (1 + 13 * k != body_len) fail(errc::schema, "event multiplicity does not match record length");
    ev.photons.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const unsigned char* p = body.data() + 1 + 13 * i;
      ev.photons[i] = {le::get<std::uint64_t>(p), p[8], le::get<std::uint32_t>(p + 9)};
      if (ev.photons[i].detector >= kDetectors) fail(errc::schema, "detector id out of range");
    }
    return true;
  }

 private:
  std::istream& is_;
  EventFileHeader header_;
};

inline void write_events_csv(std::ostream& os, const std::vector<CorrelatedEvent>& events) {
  os << "event,k,position,pulse,detector,channel,port,delay_ps\n";
  for (std::size_t e = 0; e < events.size(); ++e)
    for (std::size_t i = 0; i < events[e].photons.size(); ++i) {
      const auto& p = events[e].photons[i];
      os << e << ',' << events[e].photons.size() << ',' << i << ',' << p.pulse_index << ',' << int(p.detector) << ','
         << p.channel() << ',' << (p.port() == Port::transmit ? "transmit" : "reflect") << ',' << p.delay_ps << '\n';
    }
}

}  // namespace qknit
