#pragma once

// Command-line front end binding the library into reproducible pipelines over
// WAV fixtures and preset files. Everything routes through run() so tests can
// drive the tool in-process and capture its streams; tools/pipetone.cpp is a
// two-line wrapper around it.
//
// Exit statuses: 0 success, 1 usage error (bad flags or argument values),
// 2 I/O or format error (unreadable files, schema violations), 3 domain
// verdict (detection positive, frame decode failure).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pipetone/capacity.hpp"
#include "pipetone/channel.hpp"
#include "pipetone/characterize.hpp"
#include "pipetone/defense.hpp"
#include "pipetone/modem.hpp"
#include "pipetone/signal.hpp"
#include "pipetone/wav.hpp"

namespace pipetone::cli {

namespace detail {

// Shortest exact decimal form, so reports round-trip and identical runs
// produce identical bytes.
inline std::string fmt_g(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 16; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed for " + path);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double to_double(const std::string& cell, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0')
    throw std::runtime_error(context + ": not a number: '" + cell + "'");
  return v;
}

// Comma-separated report with '#'-prefixed "key,value" metadata lines above
// a single header row.
struct CsvTable {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name, const std::string& path) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::runtime_error(path + ": missing column '" + name + "'");
  }
};

inline CsvTable parse_csv(const std::string& text, const std::string& path) {
  CsvTable table;
  for (const auto& raw : split(text, '\n')) {
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      const auto pos = body.find(',');
      if (pos != std::string::npos) table.meta[body.substr(0, pos)] = body.substr(pos + 1);
      continue;
    }
    auto cells = split(line, ',');
    if (table.columns.empty()) {
      table.columns = std::move(cells);
    } else {
      if (cells.size() != table.columns.size())
        throw std::runtime_error(path + ": row has " + std::to_string(cells.size()) +
                                 " cells, header has " + std::to_string(table.columns.size()));
      table.rows.push_back(std::move(cells));
    }
  }
  if (table.columns.empty()) throw std::runtime_error(path + ": no header row");
  return table;
}

// "lo:hi" and "lo:hi:spacing" flag values.
inline std::vector<double> parse_colon(const std::string& text, std::size_t parts,
                                       const std::string& flag) {
  const auto cells = split(text, ':');
  if (cells.size() != parts)
    throw std::invalid_argument(flag + " expects " + std::to_string(parts) +
                                " colon-separated numbers, got '" + text + "'");
  std::vector<double> out;
  for (const auto& c : cells) {
    try {
      out.push_back(to_double(c, flag));
    } catch (const std::runtime_error& e) {
      throw std::invalid_argument(e.what());
    }
  }
  return out;
}

inline FecScheme parse_fec(const std::string& name) {
  if (name == "none") return FecScheme::none;
  if (name == "hamming74") return FecScheme::hamming74;
  if (name == "repetition3") return FecScheme::repetition3;
  throw std::invalid_argument("--fec must be none, hamming74, or repetition3, got '" + name +
                              "'");
}

// Seed precedence: explicit flag, then PIPETONE_SEED, then 1.
inline std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("PIPETONE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw std::invalid_argument(std::string("PIPETONE_SEED is not a number: '") + env + "'");
    return v;
  }
  return 1;
}

inline std::string sweep_csv(const BandwidthReport& report, const SweepConfig& cfg,
                             std::uint64_t seed) {
  std::string out;
  out += "# pipetone sweep report\n";
  out += "# preset," + report.run_name + "\n";
  out += "# seed," + std::to_string(seed) + "\n";
  out += "# sample_rate_hz," + fmt_g(cfg.sample_rate) + "\n";
  out += "# tone_dur_s," + fmt_g(cfg.tone_dur_s) + "\n";
  out += "# pad_dur_s," + fmt_g(cfg.pad_dur_s) + "\n";
  out += "# peak_tolerance_hz," + fmt_g(report.peak_tolerance_hz) + "\n";
  out += "freq_hz,distance_m,pass,peak_magnitude\n";
  for (std::size_t fi = 0; fi < report.freqs_hz.size(); ++fi) {
    for (std::size_t di = 0; di < report.distances_m.size(); ++di) {
      const auto& cell = report.cells[fi][di];
      out += fmt_g(report.freqs_hz[fi]) + "," + fmt_g(report.distances_m[di]) + "," +
             (cell.pass ? "1" : "0") + "," + fmt_g(cell.magnitude) + "\n";
    }
  }
  return out;
}

inline BandwidthReport read_sweep_report(const std::string& path) {
  const auto table = parse_csv(read_file(path), path);
  const auto fc = table.col("freq_hz", path);
  const auto dc = table.col("distance_m", path);
  const auto pc = table.col("pass", path);

  BandwidthReport report;
  const auto it = table.meta.find("preset");
  report.run_name = it != table.meta.end() ? it->second : path;
  const auto key = [](double f) { return std::llround(f * 1000.0); };
  std::map<long long, std::size_t> freq_index;
  for (const auto& row : table.rows) {
    const double f = to_double(row[fc], path);
    const double d = to_double(row[dc], path);
    const bool pass = to_double(row[pc], path) != 0.0;
    auto [pos, fresh] = freq_index.emplace(key(f), report.freqs_hz.size());
    if (fresh) {
      report.freqs_hz.push_back(f);
      report.cells.emplace_back();
    }
    auto& cells = report.cells[pos->second];
    if (pos->second == 0) report.distances_m.push_back(d);
    cells.push_back({pass, 0.0});
  }
  for (const auto& row : report.cells)
    if (row.size() != report.distances_m.size())
      throw std::runtime_error(path + ": uneven distance coverage across frequencies");
  if (report.freqs_hz.empty()) throw std::runtime_error(path + ": no sweep rows");
  return report;
}

inline std::vector<ChannelMeasurement> read_measurements(const std::string& path) {
  const auto table = parse_csv(read_file(path), path);
  const auto fc = table.col("freq_hz", path);
  const auto sc = table.col("signal_plus_noise", path);
  const auto nc = table.col("noise", path);
  const auto bc = table.col("bandwidth_hz", path);
  std::vector<ChannelMeasurement> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ChannelMeasurement m;
    m.freq_hz = to_double(row[fc], path);
    m.signal_plus_noise = to_double(row[sc], path);
    m.noise = to_double(row[nc], path);
    m.bandwidth_hz = to_double(row[bc], path);
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

// Parsed-argument bundles, one per subcommand. run() fills them from flags
// and hands them to the do_* workers below, which are also the natural entry
// points for in-process callers that want to skip flag parsing.

struct SweepArgs {
  std::string preset;
  std::string out_dir;
  std::uint64_t seed = 1;
  SweepConfig cfg;
};

inline int do_sweep(const SweepArgs& a, std::ostream& out) {
  const auto model = load_preset(a.preset);
  const auto report = run_sweep(model, a.cfg, a.seed);
  std::filesystem::create_directories(a.out_dir);
  const std::string path = a.out_dir + "/sweep_" + report.run_name + ".csv";
  detail::write_file_atomic(path, detail::sweep_csv(report, a.cfg, a.seed));
  out << "sweep: " << report.run_name << ": " << report.passing().size() << "/"
      << report.freqs_hz.size() << " frequencies pass at " << report.distances_m.size()
      << " taps -> " << path << "\n";
  return 0;
}

struct GlobalArgs {
  std::vector<std::string> reports;
  std::string out_path;  // empty: print the list
};

inline int do_global(const GlobalArgs& a, std::ostream& out) {
  std::vector<BandwidthReport> reports;
  reports.reserve(a.reports.size());
  for (const auto& p : a.reports) reports.push_back(detail::read_sweep_report(p));
  const auto shared = global_bandwidth(reports);
  std::string content = "freq_hz\n";
  for (double f : shared) content += detail::fmt_g(f) + "\n";
  if (a.out_path.empty()) {
    out << content;
  } else {
    detail::write_file_atomic(a.out_path, content);
    out << "global: " << shared.size() << " frequencies pass every report -> " << a.out_path
        << "\n";
  }
  return 0;
}

struct CapacityArgs {
  std::string preset;
  double distance_m = 0.0;
  bool have_distance = false;
  std::string measurements;  // CSV alternative to preset + distance
  double band_lo_hz = 15000.0;
  double band_hi_hz = 20000.0;
  double spacing_hz = 100.0;
  double eq1_bandwidth_hz = 0.0;  // > 0: single-channel rate-law mode
  double amplitude = 1.0;
  double sample_rate = 44100.0;
  std::uint64_t seed = 1;
  std::string out_path;
};

inline int do_capacity(const CapacityArgs& a, std::ostream& out) {
  std::vector<ChannelMeasurement> measurements;
  std::string run_name;
  if (!a.measurements.empty()) {
    measurements = detail::read_measurements(a.measurements);
    run_name = a.measurements;
  } else if (!a.preset.empty() && a.have_distance) {
    const auto model = load_preset(a.preset);
    run_name = model.name;
    const auto plan = plan_subchannels(a.band_lo_hz, a.band_hi_hz, a.spacing_hz);
    const auto baseline =
        noise_floor(model, 1.0, a.sample_rate, derive_seed(a.seed, 1000001));
    for (std::size_t k = 0; k < plan.freqs_hz.size(); ++k) {
      const auto tone =
          gen_tone(plan.freqs_hz[k], a.amplitude, 1.0, 0.0, a.sample_rate);
      const auto rx = propagate(tone, model, a.distance_m, true, derive_seed(a.seed, k));
      measurements.push_back(
          measure_subchannel(baseline, rx.buffer, plan.freqs_hz[k], a.spacing_hz));
    }
  } else {
    throw std::invalid_argument(
        "capacity: needs --preset with --distance, or --measurements");
  }

  if (a.eq1_bandwidth_hz > 0.0) {
    // Single-channel rate law at a caller-chosen bandwidth, one line per
    // measurement; the per-row bandwidth column is deliberately ignored.
    out << "freq_hz,eq1_bandwidth_hz,capacity_bps\n";
    for (const auto& m : measurements) {
      out << detail::fmt_g(m.freq_hz) << "," << detail::fmt_g(a.eq1_bandwidth_hz) << ","
          << detail::fmt_g(shannon_capacity(a.eq1_bandwidth_hz, m.signal_plus_noise, m.noise))
          << "\n";
    }
    return 0;
  }

  const auto plan = plan_subchannels(a.band_lo_hz, a.band_hi_hz, a.spacing_hz);
  const auto report = total_capacity(measurements, plan, run_name);
  if (!a.out_path.empty()) {
    std::string content;
    content += "# pipetone capacity report\n";
    content += "# run," + report.run_name + "\n";
    content += "# seed," + std::to_string(a.seed) + "\n";
    content += "# total_bps," + detail::fmt_g(report.total_bps) + "\n";
    content += "freq_hz,capacity_bps\n";
    for (const auto& sc : report.per_subchannel)
      content += detail::fmt_g(sc.freq_hz) + "," + detail::fmt_g(sc.bps) + "\n";
    detail::write_file_atomic(a.out_path, content);
    out << "report -> " << a.out_path << "\n";
  }
  char total[32];
  std::snprintf(total, sizeof total, "%.2f", report.total_bps / 1e6);
  out << report.run_name << ": " << report.per_subchannel.size() << " subchannels, total "
      << total << " Mbps\n";
  return 0;
}

struct SendArgs {
  std::string in_path;
  std::string preset;
  double distance_m = 0.0;
  double plan_lo_hz = 15000.0;
  double plan_hi_hz = 20000.0;
  double plan_spacing_hz = 100.0;
  FecScheme fec = FecScheme::hamming74;
  std::string out_wav;
  double amplitude = 0.5;
  double symbol_dur_s = 0.02;
  double sample_rate = 44100.0;
  bool noise_on = true;
  std::uint64_t seed = 1;
};

inline int do_send(const SendArgs& a, std::ostream& out) {
  const std::string raw = detail::read_file(a.in_path);
  const std::vector<std::uint8_t> payload(raw.begin(), raw.end());
  const auto model = load_preset(a.preset);
  const auto plan = plan_subchannels(a.plan_lo_hz, a.plan_hi_hz, a.plan_spacing_hz);
  const auto bits = encode_frame(payload, a.fec);
  const auto clip = modulate(bits, plan, a.symbol_dur_s, a.amplitude, a.sample_rate);
  const auto prop = propagate(clip, model, a.distance_m, a.noise_on, a.seed);
  const auto clipped = write_wav(a.out_wav, prop.buffer);
  out << "send: " << payload.size() << " B payload, " << bits.size() << " coded bits, "
      << prop.buffer.samples.size() << " samples -> " << a.out_wav << " (delay "
      << detail::fmt_g(prop.delay_s) << " s)\n";
  if (clipped > 0) out << "warning: " << clipped << " samples clipped\n";
  return 0;
}

struct RecvArgs {
  std::string in_wav;
  double plan_lo_hz = 15000.0;
  double plan_hi_hz = 20000.0;
  double plan_spacing_hz = 100.0;
  FecScheme fec = FecScheme::hamming74;
  double symbol_dur_s = 0.02;
  std::string out_path;  // empty: report only
};

inline int do_recv(const RecvArgs& a, std::ostream& out, std::ostream& err) {
  const auto buf = read_wav(a.in_wav);
  const auto plan = plan_subchannels(a.plan_lo_hz, a.plan_hi_hz, a.plan_spacing_hz);
  const auto res = demodulate(buf, plan, a.symbol_dur_s, a.fec);
  if (!res.ok) {
    err << "recv: " << res.failure << "\n";
    return 3;
  }
  if (!a.out_path.empty())
    detail::write_file_atomic(a.out_path,
                              std::string(res.payload.begin(), res.payload.end()));
  out << "recv: " << res.payload.size() << " B payload, " << res.bit_errors_corrected
      << " bit errors corrected, sync at sample " << res.sync_offset;
  if (!a.out_path.empty()) out << " -> " << a.out_path;
  out << "\n";
  return 0;
}

struct DetectArgs {
  std::string baseline_wav;
  std::string window_wav;
  double pfa = 0.01;
  double band_lo_hz = 15000.0;
  double band_hi_hz = 20000.0;
};

inline int do_detect(const DetectArgs& a, std::ostream& out) {
  const auto noise = read_wav(a.baseline_wav);
  const auto window = read_wav(a.window_wav);
  const auto baseline = build_baseline(noise, a.band_lo_hz, a.band_hi_hz);
  const auto r = detect(window, baseline, a.pfa);
  out << "detected,score,threshold\n";
  out << (r.detected ? 1 : 0) << "," << detail::fmt_g(r.score) << ","
      << detail::fmt_g(r.threshold) << "\n";
  return r.detected ? 3 : 0;
}

struct LocalizeArgs {
  std::string manifest;
};

inline int do_localize(const LocalizeArgs& a, std::ostream& out) {
  const auto text = detail::read_file(a.manifest);
  double speed = 0.0;
  std::vector<ReceiverTap> taps;
  try {
    const auto j = nlohmann::json::parse(text);
    speed = j.at("speed_mps").get<double>();
    for (const auto& jt : j.at("taps")) {
      ReceiverTap tap;
      const double position = jt.at("position").get<double>();
      const auto unit = jt.at("unit").get<std::string>();
      if (unit == "m")
        tap.position_m = position;
      else if (unit == "ft")
        tap.position_m = position * 0.3048;
      else
        throw std::runtime_error("tap unit must be 'm' or 'ft', got '" + unit + "'");
      std::filesystem::path wav = jt.at("wav").get<std::string>();
      if (wav.is_relative())
        wav = std::filesystem::path(a.manifest).parent_path() / wav;
      tap.recording = read_wav(wav.string());
      tap.clock_offset_s = jt.value("clock_offset_s", 0.0);
      taps.push_back(std::move(tap));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(a.manifest + ": " + e.what());
  }
  const auto est = localize(taps, speed);
  out << "position_m,residual_s,extrapolated\n";
  out << detail::fmt_g(est.position_m) << "," << detail::fmt_g(est.residual_s) << ","
      << (est.extrapolated ? 1 : 0) << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string preset;
  double distance_m = 0.0;
  double snr_threshold_db = 6.0;
  std::uint64_t seed = 1;
};

inline int do_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto model = load_preset(a.preset);
  const auto res = min_volume(model, a.distance_m, volume_ladder(), a.snr_threshold_db, a.seed);
  out << "usable,min_amplitude\n";
  out << (res.usable ? 1 : 0) << "," << detail::fmt_g(res.amplitude) << "\n";
  return 0;
}

// Flag surface and dispatch. args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"covert acoustic channel toolkit over pipe-run models"};
  app.name("pipetone");
  app.require_subcommand(1);

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Per-frequency usability sweep of a preset");
  sweep->add_option("--preset", sweep_args.preset, "preset JSON path")->required();
  sweep->add_option("--out", sweep_args.out_dir, "output directory for the report CSV")
      ->required();
  auto* sweep_seed = sweep->add_option("--seed", sweep_args.seed, "master sweep seed");
  sweep->add_option("--fmin", sweep_args.cfg.f_min_hz, "lowest frequency, Hz");
  sweep->add_option("--fmax", sweep_args.cfg.f_max_hz, "highest frequency, Hz");
  sweep->add_option("--step", sweep_args.cfg.step_hz, "grid step, Hz");
  sweep->add_option("--tone-dur", sweep_args.cfg.tone_dur_s, "tone duration, s");
  sweep->add_option("--pad-dur", sweep_args.cfg.pad_dur_s, "pad after the tone, s");
  sweep->add_option("--rate", sweep_args.cfg.sample_rate, "sample rate, Hz");
  sweep->add_option("--tolerance", sweep_args.cfg.peak_tolerance_hz, "peak tolerance, Hz");

  GlobalArgs global_args;
  auto* global_cmd =
      app.add_subcommand("global", "Frequencies passing every given sweep report");
  global_cmd->add_option("--reports", global_args.reports, "sweep report CSVs")
      ->required()
      ->expected(-1);
  global_cmd->add_option("--out", global_args.out_path, "write the list here");

  CapacityArgs capacity_args;
  std::string capacity_band = "15000:20000";
  auto* capacity_cmd = app.add_subcommand("capacity", "Subchannel capacity survey");
  capacity_cmd->add_option("--preset", capacity_args.preset, "preset JSON path");
  auto* capacity_dist =
      capacity_cmd->add_option("--distance", capacity_args.distance_m, "tap distance, m");
  capacity_cmd->add_option("--measurements", capacity_args.measurements,
                           "per-subchannel measurement CSV instead of a preset");
  capacity_cmd->add_option("--band", capacity_band, "band as lo:hi in Hz");
  capacity_cmd->add_option("--spacing", capacity_args.spacing_hz, "subchannel spacing, Hz");
  capacity_cmd->add_option("--eq1-bandwidth", capacity_args.eq1_bandwidth_hz,
                           "single-channel rate-law bandwidth, Hz");
  capacity_cmd->add_option("--amplitude", capacity_args.amplitude, "probe tone amplitude");
  capacity_cmd->add_option("--rate", capacity_args.sample_rate, "sample rate, Hz");
  auto* capacity_seed = capacity_cmd->add_option("--seed", capacity_args.seed, "survey seed");
  capacity_cmd->add_option("--out", capacity_args.out_path, "per-subchannel report CSV");

  SendArgs send_args;
  std::string send_plan = "15000:20000:100";
  std::string send_fec = "hamming74";
  auto* send_cmd = app.add_subcommand("send", "Frame, modulate, and propagate a payload");
  send_cmd->add_option("--in", send_args.in_path, "payload file")->required();
  send_cmd->add_option("--preset", send_args.preset, "preset JSON path")->required();
  send_cmd->add_option("--distance", send_args.distance_m, "tap distance, m")->required();
  send_cmd->add_option("--plan", send_plan, "subchannel plan as lo:hi:spacing in Hz");
  send_cmd->add_option("--fec", send_fec, "none, hamming74, or repetition3");
  send_cmd->add_option("--out", send_args.out_wav, "received recording WAV")->required();
  send_cmd->add_option("--amplitude", send_args.amplitude, "drive level, full scale");
  send_cmd->add_option("--symbol-dur", send_args.symbol_dur_s, "symbol duration, s");
  send_cmd->add_option("--rate", send_args.sample_rate, "sample rate, Hz");
  send_cmd->add_flag("--no-noise", "propagate without the noise floor");
  auto* send_seed = send_cmd->add_option("--seed", send_args.seed, "channel seed");

  RecvArgs recv_args;
  std::string recv_plan = "15000:20000:100";
  std::string recv_fec = "hamming74";
  auto* recv_cmd = app.add_subcommand("recv", "Demodulate a recording back to bytes");
  recv_cmd->add_option("--in", recv_args.in_wav, "recording WAV")->required();
  recv_cmd->add_option("--plan", recv_plan, "subchannel plan as lo:hi:spacing in Hz");
  recv_cmd->add_option("--fec", recv_fec, "none, hamming74, or repetition3");
  recv_cmd->add_option("--symbol-dur", recv_args.symbol_dur_s, "symbol duration, s");
  recv_cmd->add_option("--out", recv_args.out_path, "write the payload here");

  DetectArgs detect_args;
  std::string detect_band = "15000:20000";
  auto* detect_cmd = app.add_subcommand("detect", "Score a window against a noise baseline");
  detect_cmd->add_option("--baseline", detect_args.baseline_wav, "transmission-free WAV")
      ->required();
  detect_cmd->add_option("--window", detect_args.window_wav, "window WAV to score")
      ->required();
  detect_cmd->add_option("--pfa", detect_args.pfa, "target false alarm rate");
  detect_cmd->add_option("--band", detect_band, "watched band as lo:hi in Hz");

  LocalizeArgs localize_args;
  auto* localize_cmd = app.add_subcommand("localize", "Position estimate from tap recordings");
  localize_cmd->add_option("--manifest", localize_args.manifest, "tap manifest JSON")
      ->required();

  CalibrateArgs calibrate_args;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "Quietest workable drive level for a run");
  calibrate_cmd->add_option("--preset", calibrate_args.preset, "preset JSON path")->required();
  calibrate_cmd->add_option("--distance", calibrate_args.distance_m, "tap distance, m")
      ->required();
  calibrate_cmd->add_option("--snr-db", calibrate_args.snr_threshold_db,
                            "required SNR over the noise floor, dB");
  auto* calibrate_seed =
      calibrate_cmd->add_option("--seed", calibrate_args.seed, "calibration seed");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("pipetone");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sweep->parsed()) {
      sweep_args.seed = detail::resolve_seed(sweep_seed->count() > 0, sweep_args.seed);
      return do_sweep(sweep_args, out);
    }
    if (global_cmd->parsed()) return do_global(global_args, out);
    if (capacity_cmd->parsed()) {
      const auto band = detail::parse_colon(capacity_band, 2, "--band");
      capacity_args.band_lo_hz = band[0];
      capacity_args.band_hi_hz = band[1];
      capacity_args.have_distance = capacity_dist->count() > 0;
      capacity_args.seed = detail::resolve_seed(capacity_seed->count() > 0, capacity_args.seed);
      return do_capacity(capacity_args, out);
    }
    if (send_cmd->parsed()) {
      const auto plan = detail::parse_colon(send_plan, 3, "--plan");
      send_args.plan_lo_hz = plan[0];
      send_args.plan_hi_hz = plan[1];
      send_args.plan_spacing_hz = plan[2];
      send_args.fec = detail::parse_fec(send_fec);
      send_args.noise_on = send_cmd->count("--no-noise") == 0;
      send_args.seed = detail::resolve_seed(send_seed->count() > 0, send_args.seed);
      return do_send(send_args, out);
    }
    if (recv_cmd->parsed()) {
      const auto plan = detail::parse_colon(recv_plan, 3, "--plan");
      recv_args.plan_lo_hz = plan[0];
      recv_args.plan_hi_hz = plan[1];
      recv_args.plan_spacing_hz = plan[2];
      recv_args.fec = detail::parse_fec(recv_fec);
      return do_recv(recv_args, out, err);
    }
    if (detect_cmd->parsed()) {
      const auto band = detail::parse_colon(detect_band, 2, "--band");
      detect_args.band_lo_hz = band[0];
      detect_args.band_hi_hz = band[1];
      return do_detect(detect_args, out);
    }
    if (localize_cmd->parsed()) return do_localize(localize_args, out);
    if (calibrate_cmd->parsed()) {
      calibrate_args.seed =
          detail::resolve_seed(calibrate_seed->count() > 0, calibrate_args.seed);
      return do_calibrate(calibrate_args, out);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "error: no subcommand\n";
  return 1;
}

}  // namespace pipetone::cli
