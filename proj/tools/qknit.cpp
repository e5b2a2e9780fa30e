// qknit: simulate, correlate, reconstruct and report on photon-knitting runs.
//
// Every JSON output embeds a "manifest" and the resolved "config". Binary
// outputs get a sidecar <path>.manifest.json. Nothing time-dependent is
// recorded, so rerunning a stage on the same inputs gives identical bytes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "qknit/json_io.hpp"
#include "qknit/timetag_io.hpp"

namespace fs = std::filesystem;
using namespace qknit;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kUsageExit = 64;

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(errc::io, "cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) fail(errc::io, "sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  // Output hashes only make sense for sidecars written after the output.
  Json to_json(bool hash_outputs) const {
    Json j;
    j["tool"] = "qknit";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["args"] = args;
    j["config_path"] = config_path ? Json(*config_path) : Json(nullptr);
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    Json in = Json::array();
    if (config_path) in.push_back(Json{{"path", *config_path}, {"sha256", sha256_file(*config_path)}});
    for (const auto& p : inputs) in.push_back(Json{{"path", p}, {"sha256", sha256_file(p)}});
    j["inputs"] = in;
    Json out = Json::array();
    for (const auto& p : outputs) {
      Json o{{"path", p}};
      if (hash_outputs) o["sha256"] = sha256_file(p);
      out.push_back(o);
    }
    j["outputs"] = out;
    return j;
  }
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_json_output(const std::string& path, Json body, const Manifest& m) {
  Json j;
  j["manifest"] = m.to_json(false);
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  if (path.empty() || path == "-") std::cout << dump(j);
  else write_text_file(path, dump(j));
}

void write_sidecar(const std::string& path, const Manifest& m, const Json& extra) {
  Json j;
  j["manifest"] = m.to_json(true);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text_file(path + ".manifest.json", dump(j));
}

// Config resolution: --config file, else the config echoed by the upstream
// input, else defaults. --seed and --duration override whatever was found.
struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::string out;
};

StreamConfig resolve_config(const CommonOpts& o, const Json* upstream) {
  StreamConfig cfg;
  if (!o.config_path.empty()) cfg = stream_config_from_json(read_json_file(o.config_path));
  else if (upstream && upstream->contains("config")) cfg = stream_config_from_json(upstream->at("config"));
  if (o.seed) cfg.seed = *o.seed;
  if (o.duration) cfg.duration = *o.duration;
  cfg.validate();
  return cfg;
}

Manifest make_manifest(const std::string& command, const std::vector<std::string>& args, const CommonOpts& o) {
  Manifest m;
  m.command = command;
  m.args = args;
  if (!o.config_path.empty()) m.config_path = o.config_path;
  return m;
}

void add_common(CLI::App* sub, CommonOpts& o, bool stream_flags) {
  sub->add_option("--config", o.config_path, "stream config JSON")->check(CLI::ExistingFile);
  if (stream_flags) {
    sub->add_option("--seed", o.seed, "RNG seed");
    sub->add_option("--duration", o.duration, "simulated acquisition time in seconds");
  }
  sub->add_option("--out", o.out, "output path ('-' or empty for stdout where allowed)");
}

// A named spec or a path to a spec JSON file.
struct ResolvedSpec {
  std::string name;
  MeasurementSpec spec;
  std::optional<int> ideal_row;
};

ResolvedSpec resolve_spec(const std::string& s) {
  const auto& all = named_specs();
  if (auto it = all.find(s); it != all.end()) return {s, it->second.spec, it->second.ideal_row};
  if (!fs::exists(s)) fail(errc::invalid_argument, "unknown spec '" + s + "' (not a named spec or a file)");
  return {fs::path(s).stem().string(), spec_from_json(read_json_file(s)), std::nullopt};
}

// Ideal-table reference restricted to the photons the measurement keeps.
DensityMatrix ideal_row_state(int row, const MeasurementSpec& spec) {
  const DensityMatrix full = table_density(row);
  const Register keep = spec.tomograph_labels();
  if (full.labels() == keep) return full;
  return partial_trace(full, std::set<QubitLabel>(keep.begin(), keep.end()));
}

Json model_metrics_json(const DensityMatrix& rho) {
  Json j;
  if (rho.num_qubits() == 1) j["dop"] = rectilinear_dop(rho);
  if (rho.num_qubits() == 2) {
    j["negativity"] = negativity(rho);
    j["dop_pair"] = rectilinear_pair_dop(rho);
  }
  return j;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// model

struct ModelOpts {
  CommonOpts common;
  std::vector<std::string> specs;
  bool ideal = false;
  bool calibrated = false;
};

int cmd_model(const ModelOpts& o, const std::vector<std::string>& args) {
  StreamConfig cfg = resolve_config(o.common, nullptr);
  if (o.ideal) cfg.protocol = ProtocolConfig::ideal();
  if (o.calibrated) cfg.protocol = ProtocolConfig::calibrated();
  cfg.validate();

  std::vector<std::string> names = o.specs;
  if (names.empty())
    for (const auto& [n, s] : named_specs()) names.push_back(n);

  Manifest m = make_manifest("model", args, o.common);
  Json results = Json::array();
  for (const auto& n : names) {
    const ResolvedSpec rs = resolve_spec(n);
    if (!named_specs().count(n)) m.inputs.push_back(n);
    const ConditionalState st = simulate_conditional(cfg.protocol, rs.spec);
    Json r;
    r["spec"] = rs.name;
    r["measurement"] = to_json(rs.spec);
    r["probability"] = st.probability;
    r["matrix"] = to_json(st.rho);
    r["metrics"] = model_metrics_json(st.rho);
    std::cerr << rs.name;
    for (const auto& [k, v] : r["metrics"].items()) std::cerr << ' ' << k << '=' << fmt(v.get<double>());
    if (rs.ideal_row) {
      const double f = fidelity(st.rho, ideal_row_state(*rs.ideal_row, rs.spec));
      r["ideal_row"] = *rs.ideal_row;
      r["ideal_row_fidelity"] = f;
      std::cerr << " ideal_row=" << *rs.ideal_row << " fidelity_to_row=" << fmt(f, 6);
    }
    std::cerr << '\n';
    results.push_back(r);
  }
  if (!o.common.out.empty() && o.common.out != "-") m.outputs.push_back(o.common.out);
  Json body;
  body["config"] = to_json(cfg);
  body["results"] = results;
  write_json_output(o.common.out, body, m);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
  CommonOpts common;
  std::string csv;
};

int cmd_simulate(const SimulateOpts& o, const std::vector<std::string>& args) {
  if (o.common.out.empty()) fail(errc::invalid_argument, "simulate needs --out");
  const StreamConfig cfg = resolve_config(o.common, nullptr);
  const std::uint64_t period = cfg.period_ps();

  std::ofstream os(o.common.out, std::ios::binary);
  if (!os) fail(errc::io, "cannot open " + o.common.out + " for writing");
  TagWriter writer(os, period);
  std::uint64_t adjacent = 0;
  std::optional<std::uint64_t> last_pulse;
  std::vector<DetectionEvent> kept_for_csv;
  const StreamStats stats = simulate_stream(cfg, [&](const DetectionEvent& e) {
    writer.write(e);
    const std::uint64_t pulse = e.time_ps / period;
    if (last_pulse && pulse == *last_pulse + 1) ++adjacent;
    last_pulse = pulse;
    if (!o.csv.empty()) kept_for_csv.push_back(e);
  });
  writer.finish();
  os.close();
  if (!o.csv.empty()) {
    std::ofstream cs(o.csv);
    if (!cs) fail(errc::io, "cannot open " + o.csv + " for writing");
    write_tags_csv(cs, kept_for_csv);
  }

  Manifest m = make_manifest("simulate", args, o.common);
  m.seed = cfg.seed;
  m.outputs.push_back(o.common.out);
  if (!o.csv.empty()) m.outputs.push_back(o.csv);

  Json summary;
  summary["pulses"] = stats.pulses;
  summary["excitations"] = stats.excitations;
  summary["detected_photons"] = stats.detected_photons;
  summary["dark_counts"] = stats.dark_counts;
  summary["clicks"] = stats.clicks;
  summary["deadtime_losses"] = stats.deadtime_losses;
  summary["click_rate_hz"] = static_cast<double>(stats.clicks) / cfg.duration;
  summary["adjacent_pair_rate_hz"] = static_cast<double>(adjacent) / cfg.duration;
  summary["predicted_pair_rate_hz"] = predicted_event_rate(2, cfg.protocol, cfg.bank.efficiency);
  summary["predicted_triple_rate_hz"] = predicted_event_rate(3, cfg.protocol, cfg.bank.efficiency);
  write_sidecar(o.common.out, m, Json{{"config", to_json(cfg)}, {"summary", summary}});

  std::cerr << "clicks=" << stats.clicks << " adjacent_pair_rate_hz=" << fmt(summary["adjacent_pair_rate_hz"], 1)
            << " predicted_pair_rate_hz=" << fmt(summary["predicted_pair_rate_hz"], 1) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelateOpts {
  CommonOpts common;
  std::string input;
  std::string events;
  std::string events_csv;
  bool pairs = false;
};

int cmd_correlate(const CorrelateOpts& o, const std::vector<std::string>& args) {
  if (o.common.out.empty()) fail(errc::invalid_argument, "correlate needs --out for the counts JSON");
  std::optional<Json> sidecar;
  if (o.common.config_path.empty() && fs::exists(o.input + ".manifest.json"))
    sidecar = read_json_file(o.input + ".manifest.json");
  StreamConfig cfg = resolve_config(o.common, sidecar ? &*sidecar : nullptr);

  std::ifstream is(o.input, std::ios::binary);
  if (!is) fail(errc::io, "cannot open " + o.input);
  TagReader reader(is);
  const std::uint64_t period = reader.header().pulse_period_ps;
  if (period != cfg.period_ps())
    fail(errc::schema, "tag file pulse period " + std::to_string(period) + " ps does not match config " +
                           std::to_string(cfg.period_ps()) + " ps");
  const std::uint64_t window = window_ps_of(cfg.protocol);

  std::ofstream ev_os;
  std::optional<EventWriter> ev_writer;
  if (!o.events.empty()) {
    ev_os.open(o.events, std::ios::binary);
    if (!ev_os) fail(errc::io, "cannot open " + o.events + " for writing");
    ev_writer.emplace(ev_os, EventFileHeader{period, window});
  }
  std::vector<CorrelatedEvent> csv_events;
  auto store = [&](const CorrelatedEvent& ev) {
    if (ev_writer) ev_writer->write(ev);
    if (!o.events_csv.empty()) csv_events.push_back(ev);
  };

  PulseBinner binner(period, window);
  StreamCorrelator sc;
  CountsAccumulator acc(SettingsLog(cfg.bank), period);
  auto on_run = [&](const CorrelatedEvent& r) {
    acc.add(r);
    if (!o.pairs) store(r);
  };
  auto on_pair = [&](const CorrelatedEvent& p) {
    if (o.pairs) store(p);
  };
  auto on_tag = [&](const TaggedPhoton& t) { sc.push(t, on_pair, on_run); };
  DetectionEvent e;
  while (reader.next(e)) binner.push(e, on_tag);
  binner.finish(on_tag);
  sc.finish(on_run);
  if (ev_writer) {
    ev_writer->finish();
    ev_os.close();
  }
  if (!o.events_csv.empty()) {
    std::ofstream cs(o.events_csv);
    if (!cs) fail(errc::io, "cannot open " + o.events_csv + " for writing");
    write_events_csv(cs, csv_events);
  }
  const CountsTable counts = acc.take();

  Manifest m = make_manifest("correlate", args, o.common);
  m.inputs.push_back(o.input);
  m.seed = cfg.seed;
  for (const auto* p : {&o.events, &o.events_csv})
    if (!p->empty()) m.outputs.push_back(*p);
  if (!o.events.empty())
    write_sidecar(o.events, m, Json{{"config", to_json(cfg)}, {"records", o.pairs ? "pairs" : "runs"}});
  m.outputs.push_back(o.common.out);

  const auto& bs = binner.stats();
  const auto& cc = sc.counters();
  Json body;
  body["config"] = to_json(cfg);
  body["binning"] = Json{{"input", bs.input},
                         {"kept", bs.kept},
                         {"outside_window", bs.outside_window},
                         {"same_pulse_dropped", bs.same_pulse_dropped}};
  body["correlation"] = Json{{"photons", cc.photons}, {"pairs", cc.pairs}, {"runs_by_size", cc.runs_by_size}};
  body["counts"] = to_json(counts);
  write_json_output(o.common.out, body, m);
  std::cerr << "photons=" << cc.photons << " pairs=" << cc.pairs << " counted_windows=" << counts.events << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// tomo

struct TomoOpts {
  CommonOpts common;
  std::string input;
  std::vector<std::string> specs;
  std::string estimator = "linear_psd";
  int resamples = 200;
  std::uint64_t bootstrap_seed = 1;
};

CountsTable counts_of(const Json& j) { return counts_from_json(j.contains("counts") ? j.at("counts") : j); }

int cmd_tomo(const TomoOpts& o, const std::vector<std::string>& args) {
  const Json in = read_json_file(o.input);
  const StreamConfig cfg = resolve_config(o.common, &in);
  const CountsTable counts = counts_of(in);
  const Estimator est = o.estimator == "linear" ? Estimator::linear : Estimator::linear_psd;
  const BootstrapOptions bo{o.resamples, o.bootstrap_seed, 0};

  Manifest m = make_manifest("tomo", args, o.common);
  m.inputs.push_back(o.input);
  Json results = Json::array();
  for (const auto& n : o.specs) {
    const ResolvedSpec rs = resolve_spec(n);
    if (!named_specs().count(n)) m.inputs.push_back(n);
    const TomographyRequest req = TomographyRequest::from_spec(rs.spec, est);
    const ReconstructionResult rec = reconstruct(collect(counts, req), est);
    const DensityMatrix model = simulate_conditional_dm(cfg.protocol, rs.spec);
    const Metrics vs_model = analyze(rec, model, {}, bo);

    Json r;
    r["spec"] = rs.name;
    r["measurement"] = to_json(rs.spec);
    r["reconstruction"] = to_json(rec);
    r["model"] = to_json(model);
    r["metrics_vs_model"] = to_json(vs_model);
    std::cerr << rs.name << " counts=" << rec.counts_used << " fidelity_vs_model=" << fmt(vs_model.fidelity.value)
              << "+-" << fmt(vs_model.fidelity.error);
    if (rs.ideal_row) {
      const Metrics vs_row = analyze(rec, ideal_row_state(*rs.ideal_row, rs.spec), {}, bo);
      r["ideal_row"] = *rs.ideal_row;
      r["metrics_vs_ideal_row"] = to_json(vs_row);
      std::cerr << " fidelity_vs_row" << *rs.ideal_row << '=' << fmt(vs_row.fidelity.value) << "+-"
                << fmt(vs_row.fidelity.error);
    }
    std::cerr << '\n';
    results.push_back(r);
  }
  if (!o.common.out.empty() && o.common.out != "-") m.outputs.push_back(o.common.out);
  Json body;
  body["config"] = to_json(cfg);
  body["bootstrap"] = Json{{"resamples", bo.resamples}, {"seed", bo.seed}};
  body["results"] = results;
  write_json_output(o.common.out, body, m);
  return 0;
}

// ---------------------------------------------------------------------------
// fit-d

struct FitDOpts {
  CommonOpts common;
  std::string input;
  std::string pattern = "three";
  int resamples = 200;
  std::uint64_t bootstrap_seed = 1;
  double min_counts = 1000;
};

int cmd_fit_d(const FitDOpts& o, const std::vector<std::string>& args) {
  const Json in = read_json_file(o.input);
  const StreamConfig cfg = resolve_config(o.common, &in);
  DeterminismOptions opt;
  opt.pattern = o.pattern == "five" ? DeterminismPattern::five_pulse : DeterminismPattern::three_pulse;
  opt.efficiency = cfg.bank.efficiency;
  opt.min_counts = o.min_counts;
  opt.bootstrap = {o.resamples, o.bootstrap_seed, 0};
  const DeterminismResult r = run_determinism_analysis(counts_of(in), cfg.protocol, opt);

  Manifest m = make_manifest("fit-d", args, o.common);
  m.inputs.push_back(o.input);
  if (!o.common.out.empty() && o.common.out != "-") m.outputs.push_back(o.common.out);
  Json body;
  body["config"] = to_json(cfg);
  body["pattern"] = o.pattern;
  body["bootstrap"] = Json{{"resamples", opt.bootstrap.resamples}, {"seed", opt.bootstrap.seed}};
  body["result"] = to_json(r);
  write_json_output(o.common.out, body, m);
  std::cerr << "D_hat=" << fmt(r.D_hat) << "+-" << fmt(r.D_error) << (r.wide_interval ? " (wide interval)" : "")
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string format = "text";
  std::string out;
};

struct Row {
  std::string source, item, quantity;
  double value;
  std::optional<double> error;
};

void rows_from_metrics(std::vector<Row>& rows, const std::string& src, const std::string& item, const std::string& tag,
                       const Json& metrics) {
  for (const auto& [k, v] : metrics.items()) {
    if (k == "stabilizers") {
      for (const auto& [p, e] : v.items())
        rows.push_back({src, item, tag + "stabilizer " + p, e.at("value").get<double>(), e.at("error").get<double>()});
    } else if (v.is_object()) {
      rows.push_back({src, item, tag + k, v.at("value").get<double>(), v.at("error").get<double>()});
    } else {
      rows.push_back({src, item, tag + k, v.get<double>(), std::nullopt});
    }
  }
}

std::vector<Row> rows_of(const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.contains("manifest") || !j["manifest"].contains("command")) fail(errc::schema, path + " has no manifest");
  const std::string cmd = j["manifest"]["command"].get<std::string>();
  const std::string src = fs::path(path).filename().string();
  std::vector<Row> rows;
  try {
    if (cmd == "model") {
      for (const auto& r : j.at("results")) {
        const auto item = r.at("spec").get<std::string>();
        rows_from_metrics(rows, src, item, "model ", r.at("metrics"));
        if (r.contains("ideal_row_fidelity"))
          rows.push_back({src, item, "model fidelity_to_ideal_row", r["ideal_row_fidelity"].get<double>(), {}});
      }
    } else if (cmd == "tomo") {
      for (const auto& r : j.at("results")) {
        const auto item = r.at("spec").get<std::string>();
        rows.push_back({src, item, "counts_used", r.at("reconstruction").at("counts_used").get<double>(), {}});
        rows_from_metrics(rows, src, item, "", r.at("metrics_vs_model"));
        if (r.contains("metrics_vs_ideal_row")) {
          const auto& f = r["metrics_vs_ideal_row"]["fidelity"];
          rows.push_back({src, item, "fidelity_to_ideal_row", f.at("value").get<double>(), f.at("error").get<double>()});
        }
      }
    } else if (cmd == "fit-d") {
      const auto& r = j.at("result");
      const auto item = j.at("pattern").get<std::string>() + "-pulse";
      rows.push_back({src, item, "D_hat", r.at("D_hat").get<double>(), r.at("D_error").get<double>()});
      rows.push_back({src, item, "fit_fidelity", r.at("fidelity").get<double>(), {}});
      rows.push_back({src, item, "counts_used", r.at("counts_used").get<double>(), {}});
      rows.push_back({src, item, "wide_interval", r.at("wide_interval").get<bool>() ? 1.0 : 0.0, {}});
    } else {
      fail(errc::schema, path + ": report does not take '" + cmd + "' outputs");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(errc::schema, path + ": " + e.what());
  }
  return rows;
}

int cmd_report(const ReportOpts& o) {
  std::vector<Row> rows;
  for (const auto& p : o.inputs) {
    auto r = rows_of(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  std::ostringstream os;
  if (o.format == "csv") {
    os << "source,item,quantity,value,error\n";
    for (const auto& r : rows)
      os << r.source << ',' << r.item << ',' << r.quantity << ',' << fmt(r.value, 6) << ','
         << (r.error ? fmt(*r.error, 6) : "") << '\n';
  } else {
    std::size_t ws = 6, wi = 4, wq = 8;
    for (const auto& r : rows) {
      ws = std::max(ws, r.source.size());
      wi = std::max(wi, r.item.size());
      wq = std::max(wq, r.quantity.size());
    }
    auto line = [&](const std::string& s, const std::string& i, const std::string& q, const std::string& v) {
      os << std::left << std::setw(static_cast<int>(ws) + 2) << s << std::setw(static_cast<int>(wi) + 2) << i
         << std::setw(static_cast<int>(wq) + 2) << q << v << '\n';
    };
    line("source", "item", "quantity", "value");
    for (const auto& r : rows) line(r.source, r.item, r.quantity, fmt(r.value) + (r.error ? " +- " + fmt(*r.error) : ""));
  }
  if (o.out.empty() || o.out == "-") std::cout << os.str();
  else write_text_file(o.out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qknit: photon-knitting simulation and analysis"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  const std::vector<std::string> args(argv + 1, argv + argc);

  ModelOpts mo;
  auto* model = app.add_subcommand("model", "model conditional density matrices for measurement specs");
  add_common(model, mo.common, false);
  model->add_option("--spec", mo.specs, "named spec or spec JSON path (repeatable; default all named specs)");
  auto* ideal = model->add_flag("--ideal", mo.ideal, "use the ideal protocol config");
  model->add_flag("--calibrated", mo.calibrated, "use the calibrated protocol config")->excludes(ideal);

  SimulateOpts so;
  auto* simulate = app.add_subcommand("simulate", "simulate a detector click stream into a time-tag file");
  add_common(simulate, so.common, true);
  simulate->add_option("--csv", so.csv, "also write the clicks as CSV");

  CorrelateOpts co;
  auto* correlate = app.add_subcommand("correlate", "bin clicks to pulses, find correlated windows and count them");
  add_common(correlate, co.common, false);
  correlate->add_option("input", co.input, "time-tag file")->required();
  correlate->add_option("--events", co.events, "write correlated events (binary)");
  correlate->add_option("--events-csv", co.events_csv, "write correlated events (CSV)");
  correlate->add_flag("--pairs", co.pairs, "store pairs instead of maximal runs");

  TomoOpts to;
  auto* tomo = app.add_subcommand("tomo", "reconstruct density matrices from a counts table");
  add_common(tomo, to.common, false);
  tomo->add_option("input", to.input, "counts JSON from correlate")->required()->check(CLI::ExistingFile);
  tomo->add_option("--spec", to.specs, "named spec or spec JSON path (repeatable)")->required();
  tomo->add_option("--estimator", to.estimator, "linear or linear_psd")
      ->check(CLI::IsMember({"linear", "linear_psd"}));
  tomo->add_option("--resamples", to.resamples, "bootstrap resamples")->check(CLI::NonNegativeNumber);
  tomo->add_option("--bootstrap-seed", to.bootstrap_seed, "bootstrap seed");

  FitDOpts fo;
  auto* fitd = app.add_subcommand("fit-d", "estimate the determinism factor from a counts table");
  add_common(fitd, fo.common, false);
  fitd->add_option("input", fo.input, "counts JSON from correlate")->required()->check(CLI::ExistingFile);
  fitd->add_option("--pattern", fo.pattern, "three or five")->check(CLI::IsMember({"three", "five"}));
  fitd->add_option("--resamples", fo.resamples, "bootstrap resamples")->check(CLI::NonNegativeNumber);
  fitd->add_option("--bootstrap-seed", fo.bootstrap_seed, "bootstrap seed");
  fitd->add_option("--min-counts", fo.min_counts, "counts below which the interval is flagged wide");

  ReportOpts ro;
  auto* report = app.add_subcommand("report", "tabulate model, tomo and fit-d outputs");
  report->add_option("inputs", ro.inputs, "JSON outputs of model, tomo or fit-d")->required()->check(CLI::ExistingFile);
  report->add_option("--format", ro.format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
  report->add_option("--out", ro.out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }

  try {
    if (*model) return cmd_model(mo, args);
    if (*simulate) return cmd_simulate(so, args);
    if (*correlate) return cmd_correlate(co, args);
    if (*tomo) return cmd_tomo(to, args);
    if (*fitd) return cmd_fit_d(fo, args);
    if (*report) return cmd_report(ro);
  } catch (const qknit::error& e) {
    std::cerr << "qknit: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "qknit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
