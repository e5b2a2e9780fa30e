#pragma once

// JSON forms of configs, measurement specs, matrices, counts tables and
// analysis results. Field order is fixed so equal inputs give equal bytes.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qknit/tomography.hpp"

namespace qknit {

using Json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void bad_json(const std::string& what) { fail(errc::schema, what); }

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad_json(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) bad_json("unknown key '" + k + "' in " + where);
}

template <class T>
void read_field(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_json(std::string("bad value for '") + key + "' in " + where);
  }
}

inline Axis axis_from_json(const Json& j) {
  if (!j.is_string()) bad_json("basis axis must be a string");
  try {
    return parse_axis(j.get<std::string>());
  } catch (const error&) {
    bad_json("bad basis axis '" + j.get<std::string>() + "'");
  }
}

inline std::array<Axis, kChannels> axes_from_json(const Json& j) {
  if (!j.is_array() || j.size() != kChannels) bad_json("channel bases must be an array of three axes");
  std::array<Axis, kChannels> out{};
  for (std::size_t i = 0; i < kChannels; ++i) out[i] = axis_from_json(j[i]);
  return out;
}

inline Json axes_to_json(const std::array<Axis, kChannels>& a) {
  Json j = Json::array();
  for (auto x : a) j.push_back(std::string(1, axis_char(x)));
  return j;
}

}  // namespace detail

inline Json to_json(const ProtocolConfig& c) {
  Json j;
  j["pulse_period"] = c.pulse_period;
  j["precession_per_period"] = c.precession_per_period;
  j["radiative_lifetime"] = c.radiative_lifetime;
  j["integration_window"] = c.integration_window;
  j["dephasing_time"] = std::isinf(c.dephasing_time) ? Json(nullptr) : Json(c.dephasing_time);
  j["trion_precession_ratio"] = c.trion_precession_ratio;
  j["determinism"] = c.determinism;
  j["quadrature_nodes"] = c.quadrature_nodes;
  return j;
}

// Optional "preset" (default | ideal | calibrated) sets the base; listed
// fields override it. dephasing_time null means no dephasing.
inline ProtocolConfig protocol_from_json(const Json& j) {
  const std::string where = "protocol";
  detail::check_keys(j,
                     {"preset", "pulse_period", "precession_per_period", "radiative_lifetime", "integration_window",
                      "dephasing_time", "trion_precession_ratio", "determinism", "quadrature_nodes"},
                     where);
  ProtocolConfig c;
  if (auto it = j.find("preset"); it != j.end()) {
    const std::string p = it->is_string() ? it->get<std::string>() : "";
    if (p == "ideal") c = ProtocolConfig::ideal();
    else if (p == "calibrated") c = ProtocolConfig::calibrated();
    else if (p != "default") detail::bad_json("unknown protocol preset '" + p + "'");
  }
  detail::read_field(j, "pulse_period", c.pulse_period, where);
  detail::read_field(j, "precession_per_period", c.precession_per_period, where);
  detail::read_field(j, "radiative_lifetime", c.radiative_lifetime, where);
  detail::read_field(j, "integration_window", c.integration_window, where);
  if (auto it = j.find("dephasing_time"); it != j.end()) {
    if (it->is_null()) c.dephasing_time = std::numeric_limits<double>::infinity();
    else detail::read_field(j, "dephasing_time", c.dephasing_time, where);
  }
  detail::read_field(j, "trion_precession_ratio", c.trion_precession_ratio, where);
  detail::read_field(j, "determinism", c.determinism, where);
  detail::read_field(j, "quadrature_nodes", c.quadrature_nodes, where);
  c.validate();
  return c;
}

inline Json to_json(const DetectorBankConfig& b) {
  Json j;
  j["efficiency"] = b.efficiency;
  j["deadtime"] = b.deadtime;
  j["channel_probabilities"] = b.channel_probabilities;
  j["channel_basis"] = detail::axes_to_json(b.channel_basis);
  j["timing_jitter_sigma"] = b.timing_jitter_sigma;
  j["dark_count_rate"] = b.dark_count_rate;
  Json s = Json::array();
  for (const auto& seg : b.schedule) s.push_back(Json{{"start_ps", seg.start_ps}, {"axes", detail::axes_to_json(seg.axes)}});
  j["schedule"] = s;
  return j;
}

inline DetectorBankConfig bank_from_json(const Json& j) {
  const std::string where = "bank";
  detail::check_keys(j,
                     {"efficiency", "deadtime", "channel_probabilities", "channel_basis", "timing_jitter_sigma",
                      "dark_count_rate", "schedule"},
                     where);
  DetectorBankConfig b;
  detail::read_field(j, "efficiency", b.efficiency, where);
  detail::read_field(j, "deadtime", b.deadtime, where);
  detail::read_field(j, "channel_probabilities", b.channel_probabilities, where);
  if (auto it = j.find("channel_basis"); it != j.end()) b.channel_basis = detail::axes_from_json(*it);
  detail::read_field(j, "timing_jitter_sigma", b.timing_jitter_sigma, where);
  detail::read_field(j, "dark_count_rate", b.dark_count_rate, where);
  if (auto it = j.find("schedule"); it != j.end()) {
    if (!it->is_array()) detail::bad_json("schedule must be an array");
    for (const auto& seg : *it) {
      detail::check_keys(seg, {"start_ps", "axes"}, "schedule entry");
      SettingsSegment s;
      detail::read_field(seg, "start_ps", s.start_ps, "schedule entry");
      if (auto a = seg.find("axes"); a != seg.end()) s.axes = detail::axes_from_json(*a);
      b.schedule.push_back(s);
    }
  }
  b.validate();
  return b;
}

inline Json to_json(const StreamConfig& c) {
  Json j;
  j["protocol"] = to_json(c.protocol);
  j["bank"] = to_json(c.bank);
  j["duration"] = c.duration;
  j["seed"] = c.seed;
  return j;
}

inline StreamConfig stream_config_from_json(const Json& j) {
  detail::check_keys(j, {"protocol", "bank", "duration", "seed"}, "config");
  StreamConfig c;
  if (auto it = j.find("protocol"); it != j.end()) c.protocol = protocol_from_json(*it);
  if (auto it = j.find("bank"); it != j.end()) c.bank = bank_from_json(*it);
  detail::read_field(j, "duration", c.duration, "config");
  detail::read_field(j, "seed", c.seed, "config");
  c.validate();
  return c;
}

inline Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(errc::schema, source + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(errc::io, "cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline Json read_json_file(const std::string& path) { return parse_json_text(read_file(path), path); }

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(errc::io, "cannot open " + path + " for writing");
  os << text;
  if (!os) fail(errc::io, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Measurement specs: {"directives": ["-Z", "T", "trace", "+Z"], "mask": ["fire", ...]}

inline MeasurementSpec spec_from_json(const Json& j) {
  detail::check_keys(j, {"directives", "mask"}, "measurement spec");
  MeasurementSpec s;
  auto d = j.find("directives");
  if (d == j.end() || !d->is_array()) detail::bad_json("measurement spec needs a directives array");
  for (const auto& x : *d) {
    if (!x.is_string()) detail::bad_json("directive must be a string");
    const auto v = x.get<std::string>();
    if (v == "T" || v == "tomograph") s.directives.push_back(PhotonDirective::tomograph());
    else if (v == "trace") s.directives.push_back(PhotonDirective::trace());
    else {
      try {
        s.directives.push_back(PhotonDirective::project(BasisVector::parse(v)));
      } catch (const error&) {
        detail::bad_json("bad directive '" + v + "'");
      }
    }
  }
  if (auto m = j.find("mask"); m != j.end()) {
    if (!m->is_array()) detail::bad_json("mask must be an array");
    for (const auto& x : *m) {
      const auto v = x.is_string() ? x.get<std::string>() : "";
      if (v == "fire") s.mask.push_back(Excitation::fire);
      else if (v == "skip") s.mask.push_back(Excitation::skip);
      else detail::bad_json("mask entries must be fire or skip");
    }
  }
  try {
    s.validate();
  } catch (const error& e) {
    fail(errc::schema, e.what());
  }
  return s;
}

inline Json to_json(const MeasurementSpec& s) {
  Json d = Json::array(), m = Json::array();
  for (const auto& x : s.directives)
    d.push_back(x.kind == Directive::tomograph ? "T" : x.kind == Directive::trace ? "trace" : x.onto.str());
  for (auto e : s.mask) m.push_back(e == Excitation::fire ? "fire" : "skip");
  Json j;
  j["directives"] = d;
  if (!s.mask.empty()) j["mask"] = m;
  return j;
}

// ---------------------------------------------------------------------------
// Matrices

inline Json to_json(const Register& r) {
  Json j = Json::array();
  for (const auto& q : r) j.push_back(q.str());
  return j;
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

inline Json to_json(const DensityMatrix& rho) {
  Json j;
  j["labels"] = to_json(rho.labels());
  j["re"] = matrix_to_json(rho.matrix().real());
  j["im"] = matrix_to_json(rho.matrix().imag());
  return j;
}

inline DensityMatrix density_from_json(const Json& j) {
  detail::check_keys(j, {"labels", "re", "im"}, "density matrix");
  try {
    Register reg;
    for (const auto& l : j.at("labels")) reg.push_back(QubitLabel::parse(l.get<std::string>()));
    const auto d = static_cast<Eigen::Index>(detail::dim_of(reg.size()));
    Matrix m(d, d);
    const auto& re = j.at("re");
    const auto& im = j.at("im");
    if (re.size() != static_cast<std::size_t>(d) || im.size() != static_cast<std::size_t>(d))
      detail::bad_json("density matrix shape does not match labels");
    for (Eigen::Index r = 0; r < d; ++r) {
      if (re[r].size() != static_cast<std::size_t>(d) || im[r].size() != static_cast<std::size_t>(d))
        detail::bad_json("density matrix shape does not match labels");
      for (Eigen::Index c = 0; c < d; ++c) m(r, c) = cplx(re[r][c].get<double>(), im[r][c].get<double>());
    }
    return DensityMatrix(std::move(reg), std::move(m));
  } catch (const nlohmann::json::exception& e) {
    fail(errc::schema, std::string("bad density matrix: ") + e.what());
  } catch (const error& e) {
    if (e.code() == errc::schema) throw;
    fail(errc::schema, std::string("bad density matrix: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Counts

inline Json to_json(const CountsTable& t) {
  Json cells = Json::object();
  for (const auto& [k, n] : t.cells) cells[k.str()] = n;
  Json j;
  j["events"] = t.events;
  j["dropped_boundary"] = t.dropped_boundary;
  j["cells"] = cells;
  return j;
}

inline CountsTable counts_from_json(const Json& j) {
  detail::check_keys(j, {"events", "dropped_boundary", "cells"}, "counts");
  CountsTable t;
  auto cells = j.find("cells");
  if (cells == j.end() || !cells->is_object()) detail::bad_json("counts need a cells object");
  for (const auto& [k, v] : cells->items()) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      detail::bad_json("count for '" + k + "' must be a non-negative integer");
    t.add(CellKey::parse(k), v.get<std::uint64_t>());
  }
  std::uint64_t events = t.events;
  detail::read_field(j, "events", events, "counts");
  if (events != t.events) detail::bad_json("counts total does not match the cells");
  detail::read_field(j, "dropped_boundary", t.dropped_boundary, "counts");
  return t;
}

// ---------------------------------------------------------------------------
// Results

inline Json to_json(const Estimate& e) { return Json{{"value", e.value}, {"error", e.error}}; }

inline Json to_json(const Metrics& m) {
  Json j;
  j["fidelity"] = to_json(m.fidelity);
  j["trace_distance"] = to_json(m.trace_distance);
  if (m.negativity) j["negativity"] = to_json(*m.negativity);
  if (m.dop) j["dop"] = to_json(*m.dop);
  if (m.dop_pair) j["dop_pair"] = to_json(*m.dop_pair);
  for (const auto& [p, e] : m.stabilizers) j["stabilizers"][p.str()] = to_json(e);
  return j;
}

inline Json to_json(const ReconstructionResult& r) {
  Json j;
  j["matrix"] = to_json(r.dm);
  j["estimator"] = r.estimator == Estimator::linear ? "linear" : "linear_psd";
  j["counts_used"] = r.counts_used;
  j["stderr_re"] = matrix_to_json(r.stderr_re);
  j["stderr_im"] = matrix_to_json(r.stderr_im);
  j["clipped_mass"] = r.clipped_mass;
  return j;
}

inline Json to_json(const DeterminismResult& r) {
  Json j;
  j["D_hat"] = r.D_hat;
  j["D_error"] = r.D_error;
  j["fidelity"] = r.fidelity;
  j["mixture_weight"] = r.mixture_weight;
  j["counts_used"] = r.counts_used;
  j["identifiable"] = r.identifiable;
  j["wide_interval"] = r.wide_interval;
  j["measured"] = to_json(r.measured);
  return j;
}

}  // namespace qknit
