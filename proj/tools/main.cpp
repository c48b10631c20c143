// qistk: analytic design curves and Monte Carlo simulation for one-bit
// quanta image sensors, as data-for-plots (CSV/JSON) and PGM images.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qistk/design.hpp"
#include "qistk/io.hpp"
#include "qistk/model.hpp"
#include "qistk/sim.hpp"
#include "qistk/validate.hpp"

namespace {

constexpr const char* kToolVersion = "qistk 0.1.0";

using json = nlohmann::json;
namespace fs = std::filesystem;
namespace design = qistk::design;
namespace model = qistk::model;
namespace sim = qistk::sim;

struct Common {
  std::string args_line;
  std::string format = "csv";
  std::string out;
  std::string out_dir;
  std::uint64_t seed = 42;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--format", c.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  sub->add_option("--out", c.out,
                  "output file (default: stdout; relative paths resolve "
                  "against --out-dir)");
  sub->add_option("--out-dir", c.out_dir, "default output directory")
      ->envname("QISTK_OUT_DIR");
  sub->add_option("--seed", c.seed, "RNG seed recorded in provenance")
      ->capture_default_str();
}

fs::path resolve_out(const Common& c, const std::string& name) {
  fs::path p(name);
  if (!c.out_dir.empty() && p.is_relative()) {
    return fs::path(c.out_dir) / p;
  }
  return p;
}

// Every tabular output opens with tool version, argv and seed so a result
// file alone identifies the run that made it.
void csv_provenance(std::ostream& out, const Common& c) {
  out << "# " << kToolVersion << "\n# args: " << c.args_line
      << "\n# seed: " << c.seed << "\n";
}

json json_provenance(const Common& c) {
  return {{"tool", kToolVersion}, {"args", c.args_line}, {"seed", c.seed}};
}

class OutputFile {
 public:
  explicit OutputFile(const Common& c) {
    if (!c.out.empty()) {
      const auto path = resolve_out(c, c.out);
      file_.open(path);
      if (!file_) {
        throw qistk::io::io_error("cannot open " + path.string() +
                                  " for writing");
      }
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string fmt(double v, const char* spec = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// dB of a ratio; empty/null when the ratio has hit zero (saturation).
std::optional<double> to_db(double ratio) {
  if (!(ratio > 0.0)) return std::nullopt;
  return 20.0 * std::log10(ratio);
}

std::string csv_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : "";
}

json json_opt(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

// "lo:hi" or "lo:hi:points".
struct RangeSpec {
  double lo = 0.0, hi = 0.0;
  std::int64_t points = 0;
};

RangeSpec parse_range(const std::string& text, std::int64_t default_points) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 2 && parts.size() != 3) {
    throw std::invalid_argument("range '" + text +
                                "' must look like lo:hi or lo:hi:points");
  }
  RangeSpec r;
  try {
    r.lo = std::stod(parts[0]);
    r.hi = std::stod(parts[1]);
    r.points = parts.size() == 3 ? std::stoll(parts[2]) : default_points;
  } catch (const std::exception&) {
    throw std::invalid_argument("range '" + text + "' has non-numeric parts");
  }
  if (r.points < 2) {
    throw std::invalid_argument("range '" + text +
                                "' needs at least two points");
  }
  return r;
}

// Exact fractions ("1/64") avoid decimal drift in bracket ratios.
double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return std::stod(text);
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    if (den == 0.0) throw std::invalid_argument("zero denominator");
    return num / den;
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse '" + text + "' as a number");
  }
}

// Log-spaced distinct integers covering [lo, hi].
std::vector<std::int64_t> integer_log_sweep(const RangeSpec& r) {
  if (r.lo < 1 || r.hi <= r.lo) {
    throw std::invalid_argument("integer sweep needs 1 <= lo < hi");
  }
  std::vector<std::int64_t> out;
  const double llo = std::log(r.lo), lhi = std::log(r.hi);
  for (std::int64_t i = 0; i < r.points; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(r.points - 1);
    const auto n = std::llround(std::exp(llo + f * (lhi - llo)));
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// snr-curve: exposure-referred SNR vs exposure for either sensor type.

struct SnrCurveArgs {
  Common common;
  std::string sensor;
  std::vector<double> sigmas;
  std::int64_t n = 256;
  double q = 0.5;
  double fwc = 5000.0;
  std::string theta_spec = "1e-4:1e4:400";
};

int cmd_snr_curve(const SnrCurveArgs& a) {
  if (a.sigmas.empty()) {
    throw std::invalid_argument("snr-curve: sigma sweep must not be empty");
  }
  const RangeSpec r = parse_range(a.theta_spec, 400);
  const auto grid =
      model::ExposureGrid::log_spaced(r.lo, r.hi, static_cast<int>(r.points));

  struct Row {
    double sigma, theta, snr;
  };
  std::vector<Row> rows;
  rows.reserve(a.sigmas.size() * grid.thetas.size());
  for (const double sigma : a.sigmas) {
    for (const double theta : grid.thetas) {
      const double snr =
          a.sensor == "qis"
              ? model::snr_qis(theta, {{sigma, a.q}, a.n})
              : model::snr_cis(theta, {sigma, a.fwc, std::nullopt});
      rows.push_back({sigma, theta, snr});
    }
  }

  OutputFile output(a.common);
  auto& out = output.stream();
  if (a.common.format == "csv") {
    csv_provenance(out, a.common);
    out << "sensor,sigma,n,theta,snr,snr_db\n";
    for (const auto& row : rows) {
      out << a.sensor << "," << fmt(row.sigma) << "," << a.n << ","
          << fmt(row.theta) << "," << fmt(row.snr) << ","
          << csv_opt(to_db(row.snr)) << "\n";
    }
  } else {
    json j{{"provenance", json_provenance(a.common)},
           {"sensor", a.sensor},
           {"n", a.n},
           {"rows", json::array()}};
    for (const auto& row : rows) {
      j["rows"].push_back({{"sigma", row.sigma},
                           {"theta", row.theta},
                           {"snr", row.snr},
                           {"snr_db", json_opt(to_db(row.snr))}});
    }
    out << j.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// snr-vs-n: SNR against frame count at fixed total exposure, with the
// analytic optimum logged as a self-check column.

struct SnrVsNArgs {
  Common common;
  std::vector<double> thetas{10.0};
  double sigma = 0.19;
  double q = 0.5;
  std::string n_spec = "1:4096:200";
};

int cmd_snr_vs_n(const SnrVsNArgs& a) {
  if (a.thetas.empty()) {
    throw std::invalid_argument("snr-vs-n: theta sweep must not be empty");
  }
  const auto sweep = integer_log_sweep(parse_range(a.n_spec, 200));

  struct Series {
    double theta;
    std::vector<double> snr;
    std::optional<double> n_star;
    std::int64_t sweep_peak = 0;
    std::optional<bool> agrees;  // peak within grid tolerance of n_star
  };
  std::vector<Series> series;
  for (const double theta : a.thetas) {
    Series s;
    s.theta = theta;
    for (const std::int64_t n : sweep) {
      s.snr.push_back(model::snr_qis(theta, {{a.sigma, a.q}, n}));
    }
    const auto peak =
        std::max_element(s.snr.begin(), s.snr.end()) - s.snr.begin();
    s.sweep_peak = sweep[static_cast<std::size_t>(peak)];
    const auto n_star = design::optimal_frames(theta, a.sigma);
    if (!n_star.unbounded) {
      s.n_star = n_star.value;
      // Grid tolerance: the sweep cannot localize the peak more finely than
      // its local spacing.
      double gap = 1.0;
      if (peak > 0) {
        gap = std::max(gap, static_cast<double>(
                                s.sweep_peak - sweep[static_cast<std::size_t>(peak - 1)]));
      }
      if (peak + 1 < static_cast<std::ptrdiff_t>(sweep.size())) {
        gap = std::max(gap, static_cast<double>(
                                sweep[static_cast<std::size_t>(peak + 1)] - s.sweep_peak));
      }
      s.agrees = std::abs(static_cast<double>(s.sweep_peak) - n_star.value) <=
                 gap;
    }
    series.push_back(std::move(s));
  }

  OutputFile output(a.common);
  auto& out = output.stream();
  if (a.common.format == "csv") {
    csv_provenance(out, a.common);
    out << "theta,n,snr,snr_db,n_star,sweep_peak_n,peak_agrees\n";
    for (const auto& s : series) {
      for (std::size_t i = 0; i < sweep.size(); ++i) {
        out << fmt(s.theta) << "," << sweep[i] << "," << fmt(s.snr[i]) << ","
            << csv_opt(to_db(s.snr[i])) << "," << csv_opt(s.n_star) << ","
            << s.sweep_peak << ","
            << (s.agrees ? (*s.agrees ? "1" : "0") : "") << "\n";
      }
    }
  } else {
    json j{{"provenance", json_provenance(a.common)},
           {"sigma", a.sigma},
           {"series", json::array()}};
    for (const auto& s : series) {
      json points = json::array();
      for (std::size_t i = 0; i < sweep.size(); ++i) {
        points.push_back({{"n", sweep[i]},
                          {"snr", s.snr[i]},
                          {"snr_db", json_opt(to_db(s.snr[i]))}});
      }
      j["series"].push_back(
          {{"theta", s.theta},
           {"points", std::move(points)},
           {"n_star", json_opt(s.n_star)},
           {"sweep_peak_n", s.sweep_peak},
           {"peak_agrees", s.agrees ? json(*s.agrees) : json(nullptr)}});
    }
    out << j.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// optimal: the design constants and worked optima.

struct OptimalArgs {
  Common common;
  bool table = false;
  std::vector<double> sigmas;
  std::optional<double> theta;
};

int cmd_optimal(const OptimalArgs& a) {
  std::vector<double> sigmas = a.sigmas;
  if (a.table) {
    sigmas = {0.0, 0.1, 0.15, 0.2, 0.25, 0.3};
  }
  if (sigmas.empty()) {
    throw std::invalid_argument(
        "optimal: pass --table1 or at least one --sigma");
  }

  struct Row {
    double sigma, omega, delta, peak_const;
    design::FrameCount frame_const;
    std::optional<double> n_star;
  };
  std::vector<Row> rows;
  for (const double sigma : sigmas) {
    Row row{};
    row.sigma = sigma;
    row.delta =
        sigma == 0.0 ? 0.0 : qistk::specfun::normal_cdf(-0.5 / sigma);
    row.omega = 1.0 - row.delta;
    row.peak_const = qistk::specfun::modified_lambert_peak(row.omega);
    row.frame_const = design::frame_constant(sigma);
    if (a.theta && !row.frame_const.unbounded) {
      row.n_star = *a.theta * row.frame_const.value;
    }
    rows.push_back(row);
  }

  OutputFile output(a.common);
  auto& out = output.stream();
  if (a.common.format == "csv") {
    csv_provenance(out, a.common);
    out << "sigma,omega,delta,peak_exposure_per_frame,frame_constant";
    if (a.theta) out << ",theta,n_star,n_star_rounded";
    out << "\n";
    for (const auto& row : rows) {
      out << fmt(row.sigma) << "," << fmt(row.omega) << "," << fmt(row.delta)
          << "," << fmt(row.peak_const) << ","
          << (row.frame_const.unbounded ? "unbounded"
                                        : fmt(row.frame_const.value));
      if (a.theta) {
        out << "," << fmt(*a.theta) << "," << csv_opt(row.n_star) << ","
            << (row.n_star ? std::to_string(std::llround(*row.n_star)) : "");
      }
      out << "\n";
    }
  } else {
    json j{{"provenance", json_provenance(a.common)}, {"rows", json::array()}};
    for (const auto& row : rows) {
      json item{{"sigma", row.sigma},
                {"omega", row.omega},
                {"delta", row.delta},
                {"peak_exposure_per_frame", row.peak_const},
                {"frame_constant", row.frame_const.unbounded
                                       ? json(nullptr)
                                       : json(row.frame_const.value)},
                {"unbounded", row.frame_const.unbounded}};
      if (a.theta) {
        item["theta"] = *a.theta;
        item["n_star"] = json_opt(row.n_star);
        if (row.n_star) item["n_star_rounded"] = std::llround(*row.n_star);
      }
      j["rows"].push_back(std::move(item));
    }
    out << j.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// dr: dynamic range for one configuration, a CIS reference, or an N sweep.

struct DrArgs {
  Common common;
  std::int64_t n = 1000;
  double sigma = 0.19;
  bool cis = false;
  double fwc = 5000.0;
  double cis_sigma = 2.0;
  std::string sweep_spec;
};

json dr_to_json(const design::DynamicRangeReport& r) {
  return {{"theta_minus", r.theta_minus},
          {"theta_plus", r.theta_plus},
          {"dr_db", r.dr_db},
          {"sensor_term_db", r.sensor_term_db},
          {"bracket_term_db", r.bracket_term_db},
          {"theta_minus_exact", r.theta_minus_exact}};
}

int cmd_dr(const DrArgs& a) {
  OutputFile output(a.common);
  auto& out = output.stream();

  if (!a.sweep_spec.empty()) {
    const auto sweep = integer_log_sweep(parse_range(a.sweep_spec, 60));
    const auto cis = design::dynamic_range_cis({a.cis_sigma, a.fwc, std::nullopt});
    if (a.common.format == "csv") {
      csv_provenance(out, a.common);
      out << "n,theta_minus,theta_plus,qis_dr_db,cis_dr_db\n";
      for (const std::int64_t n : sweep) {
        const auto r = design::dynamic_range_qis(n, a.sigma);
        out << n << "," << fmt(r.theta_minus) << "," << fmt(r.theta_plus)
            << "," << fmt(r.dr_db) << "," << fmt(cis.dr_db) << "\n";
      }
    } else {
      json j{{"provenance", json_provenance(a.common)},
             {"sigma", a.sigma},
             {"cis_reference", dr_to_json(cis)},
             {"rows", json::array()}};
      for (const std::int64_t n : sweep) {
        const auto r = design::dynamic_range_qis(n, a.sigma);
        json item = dr_to_json(r);
        item["n"] = n;
        j["rows"].push_back(std::move(item));
      }
      out << j.dump(2) << "\n";
    }
    return 0;
  }

  const auto report =
      a.cis ? design::dynamic_range_cis({a.sigma, a.fwc, std::nullopt})
            : design::dynamic_range_qis(a.n, a.sigma);
  if (a.common.format == "csv") {
    csv_provenance(out, a.common);
    out << "sensor,n,sigma,theta_minus,theta_plus,dr_db,theta_minus_exact\n";
    out << (a.cis ? "cis" : "qis") << ",";
    if (a.cis) {
      out << "";
    } else {
      out << a.n;
    }
    out << "," << fmt(a.sigma) << "," << fmt(report.theta_minus) << ","
        << fmt(report.theta_plus) << "," << fmt(report.dr_db) << ","
        << fmt(report.theta_minus_exact) << "\n";
  } else {
    json j{{"provenance", json_provenance(a.common)},
           {"sensor", a.cis ? "cis" : "qis"},
           {"sigma", a.sigma},
           {"report", dr_to_json(report)}};
    if (!a.cis) j["n"] = a.n;
    out << j.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bracket: exposure-bracketing schedule analysis.

struct BracketArgs {
  Common common;
  std::vector<std::string> taus;
  std::int64_t n = 1000;
  double sigma = 0.19;
  double cis_sigma = 2.0;
  double fwc = 5000.0;
  std::int64_t curve_points = 200;
};

int cmd_bracket(const BracketArgs& a) {
  std::vector<double> taus;
  for (const auto& t : a.taus) taus.push_back(parse_fraction(t));
  const design::BracketSchedule schedule(taus, a.n);

  const auto report = design::dynamic_range_bracket(schedule, a.sigma);
  const auto total_frames =
      a.n * static_cast<std::int64_t>(schedule.taus().size());
  const auto qis_all = design::dynamic_range_qis(total_frames, a.sigma);
  const auto cis = design::dynamic_range_cis({a.cis_sigma, a.fwc, std::nullopt});

  const auto grid = model::ExposureGrid::log_spaced(
      report.theta_minus / 10.0, report.theta_plus * 10.0,
      static_cast<int>(a.curve_points));
  const model::QisConfig config{{a.sigma, 0.5}, a.n};

  OutputFile output(a.common);
  auto& out = output.stream();
  if (a.common.format == "csv") {
    csv_provenance(out, a.common);
    out << "# sensor_term_db: " << fmt(report.sensor_term_db) << "\n"
        << "# bracket_term_db: " << fmt(report.bracket_term_db) << "\n"
        << "# total_dr_db: " << fmt(report.dr_db) << "\n"
        << "# theta_minus: " << fmt(report.theta_minus)
        << " theta_plus: " << fmt(report.theta_plus) << "\n"
        << "# qis_single_schedule_" << total_frames
        << "_frames_dr_db: " << fmt(qis_all.dr_db) << "\n"
        << "# cis_reference_dr_db: " << fmt(cis.dr_db) << "\n";
    out << "tau,theta,snr,snr_db\n";
    for (const double tau : schedule.taus()) {
      for (const double theta : grid.thetas) {
        const double snr = design::bracket_snr(theta, tau, config);
        out << fmt(tau) << "," << fmt(theta) << "," << fmt(snr) << ","
            << csv_opt(to_db(snr)) << "\n";
      }
    }
    for (const double theta : grid.thetas) {
      const double snr =
          design::bracket_envelope_snr(theta, schedule, a.sigma);
      out << "envelope," << fmt(theta) << "," << fmt(snr) << ","
          << csv_opt(to_db(snr)) << "\n";
    }
  } else {
    json j{{"provenance", json_provenance(a.common)},
           {"sigma", a.sigma},
           {"n_per_bracket", a.n},
           {"taus", schedule.taus()},
           {"decomposition", dr_to_json(report)},
           {"qis_single_schedule", dr_to_json(qis_all)},
           {"qis_single_schedule_frames", total_frames},
           {"cis_reference", dr_to_json(cis)},
           {"curves", json::array()}};
    for (const double tau : schedule.taus()) {
      json points = json::array();
      for (const double theta : grid.thetas) {
        const double snr = design::bracket_snr(theta, tau, config);
        points.push_back({{"theta", theta}, {"snr", snr}});
      }
      j["curves"].push_back({{"tau", tau}, {"points", std::move(points)}});
    }
    json envelope = json::array();
    for (const double theta : grid.thetas) {
      envelope.push_back(
          {{"theta", theta},
           {"snr", design::bracket_envelope_snr(theta, schedule, a.sigma)}});
    }
    j["envelope"] = std::move(envelope);
    out << j.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate: capture, reconstruct, measure; optionally a linear-sensor capture
// of the same scene for side-by-side comparison.

struct SimulateArgs {
  Common common;
  std::string scene = "synthetic";
  std::int64_t width = 128;
  std::int64_t height = 128;
  double theta_max = 16.0;
  std::int64_t n = 64;
  double sigma = 0.19;
  double q = 0.5;
  std::string prefix = "sim";
  bool cis = false;
  double cis_sigma = 2.0;
  double fwc = 4000.0;
  int adc_bits = 8;
  int threads = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const sim::ExposureMap scene =
      a.scene == "synthetic"
          ? sim::synthetic_scene(a.width, a.height, a.theta_max)
          : qistk::io::exposure_from_pgm(a.scene, a.theta_max);
  scene.validate();

  const model::QisConfig config{{a.sigma, a.q}, a.n};
  const auto stack = sim::capture_qis(scene, config, a.common.seed, a.threads);
  const auto est = sim::reconstruct_mle(stack);
  const auto metrics = sim::image_metrics(scene, est);

  const auto path = [&](const char* suffix) {
    return resolve_out(a.common, a.prefix + suffix);
  };
  if (const auto dir = path("").parent_path(); !dir.empty()) {
    fs::create_directories(dir);
  }
  qistk::io::write_qbf(path(".qbf"), stack);
  qistk::io::write_qmap(path("_truth.qmap"), scene);
  qistk::io::write_qmap(path("_recon.qmap"), est.width, est.height,
                        est.theta_hats);
  qistk::io::write_pgm(path("_recon.pgm"), est.width, est.height,
                       est.theta_hats, a.theta_max, 65535);

  std::int64_t saturated = 0;
  for (const auto flag : est.saturated_mask) saturated += flag;

  json j{{"provenance", json_provenance(a.common)},
         {"scene", a.scene},
         {"width", scene.width},
         {"height", scene.height},
         {"theta_max", a.theta_max},
         {"qis",
          {{"n_frames", a.n},
           {"sigma", a.sigma},
           {"q", a.q},
           {"mse", metrics.mse},
           {"psnr_db", std::isinf(metrics.psnr_db) ? json(nullptr)
                                                   : json(metrics.psnr_db)},
           {"pixels_used", metrics.pixels_used},
           {"saturated_pixels", saturated}}}};

  if (a.cis) {
    const model::CisConfig cis_config{a.cis_sigma, a.fwc, a.adc_bits};
    const auto img = sim::capture_cis(scene, cis_config, a.common.seed,
                                      a.threads);
    qistk::io::write_pgm(path("_cis.pgm"), img.width, img.height, img.values,
                         a.fwc, 65535);
    sim::EstimateMap cis_est;
    cis_est.width = img.width;
    cis_est.height = img.height;
    cis_est.theta_hats = img.values;
    cis_est.saturated_mask.assign(img.values.size(), 0);
    for (std::size_t p = 0; p < img.values.size(); ++p) {
      if (img.values[p] >= a.fwc) cis_est.saturated_mask[p] = 1;
    }
    const auto cis_metrics = sim::image_metrics(scene, cis_est);
    j["cis"] = {{"sigma", a.cis_sigma},
                {"fwc", a.fwc},
                {"adc_bits", a.adc_bits},
                {"mse", cis_metrics.mse},
                {"psnr_db", std::isinf(cis_metrics.psnr_db)
                                ? json(nullptr)
                                : json(cis_metrics.psnr_db)},
                {"pixels_used", cis_metrics.pixels_used}};
  }

  std::ofstream metrics_file(path("_metrics.json"));
  if (!metrics_file) {
    throw qistk::io::io_error("cannot open metrics file for writing");
  }
  metrics_file << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// validate: the acceptance table; exit 3 on any failure.

struct ValidateArgs {
  Common common;
  bool quick = false;
  double perturb_omega = 0.0;
  int threads = 0;
};

int cmd_validate(const ValidateArgs& a) {
  qistk::validate::Options opt;
  opt.quick = a.quick;
  opt.omega_perturb = a.perturb_omega;
  opt.seed = a.common.seed;
  opt.n_threads = a.threads;
  const auto results = qistk::validate::run_all(opt);
  qistk::validate::print_report(results, std::cout);
  return qistk::validate::all_passed(results) ? 0 : 3;
}

std::string join_args(int argc, char** argv) {
  std::string line;
  for (int i = 1; i < argc; ++i) {
    if (i > 1) line += ' ';
    line += argv[i];
  }
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quanta image sensor design toolkit: analytic SNR and dynamic "
               "range curves, optimal-design formulas, and a Monte Carlo "
               "capture/reconstruction simulator"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "",
                 "INI config file; command-line flags take precedence");
  app.require_subcommand(0, 1);

  SnrCurveArgs snr_args;
  auto* snr = app.add_subcommand(
      "snr-curve", "exposure-referred SNR vs exposure for one sensor");
  add_common(snr, snr_args.common);
  snr->add_option("--sensor", snr_args.sensor, "sensor model")
      ->required()
      ->check(CLI::IsMember({"qis", "cis"}));
  snr->add_option("--sigma", snr_args.sigmas,
                  "read noise values, one series each")
      ->delimiter(',');
  snr->add_option("--n", snr_args.n, "frames per capture (qis)")
      ->capture_default_str();
  snr->add_option("--q", snr_args.q, "comparator threshold (qis)")
      ->capture_default_str();
  snr->add_option("--fwc", snr_args.fwc, "full-well capacity (cis)")
      ->capture_default_str();
  snr->add_option("--theta-log", snr_args.theta_spec,
                  "log-spaced exposure sweep lo:hi:points")
      ->capture_default_str();
  snr->callback([&] {
    if (snr_args.sigmas.empty()) {
      snr_args.sigmas = {snr_args.sensor == "cis" ? 2.0 : 0.19};
    }
  });

  SnrVsNArgs vsn_args;
  auto* vsn = app.add_subcommand(
      "snr-vs-n", "SNR vs frame count at fixed total exposure");
  add_common(vsn, vsn_args.common);
  vsn->add_option("--theta", vsn_args.thetas, "total exposures, one series each")
      ->delimiter(',')
      ->capture_default_str();
  vsn->add_option("--sigma", vsn_args.sigma, "read noise")
      ->capture_default_str();
  vsn->add_option("--q", vsn_args.q, "comparator threshold")
      ->capture_default_str();
  vsn->add_option("--n-range", vsn_args.n_spec,
                  "log-spaced integer sweep lo:hi:points")
      ->capture_default_str();

  OptimalArgs opt_args;
  auto* opt = app.add_subcommand(
      "optimal", "optimal exposure/frame-count design constants");
  add_common(opt, opt_args.common);
  opt->add_flag("--table1", opt_args.table,
                "emit the reference table for sigma in {0, 0.1, 0.15, 0.2, "
                "0.25, 0.3}");
  opt->add_option("--sigma", opt_args.sigmas, "read noise values")
      ->delimiter(',');
  double opt_theta = 0.0;
  opt->add_option("--theta", opt_theta,
                  "total exposure; adds N* columns to the output")
      ->check(CLI::PositiveNumber);
  opt->callback([&] {
    if (opt->count("--theta") > 0) opt_args.theta = opt_theta;
  });

  DrArgs dr_args;
  auto* dr = app.add_subcommand("dr", "dynamic range between the SNR=1 "
                                      "crossings");
  add_common(dr, dr_args.common);
  dr->add_option("--n", dr_args.n, "frames (qis)")->capture_default_str();
  dr->add_option("--sigma", dr_args.sigma, "read noise of the chosen sensor")
      ->capture_default_str();
  dr->add_flag("--cis", dr_args.cis, "report the linear sensor instead");
  dr->add_option("--fwc", dr_args.fwc, "full-well capacity (cis)")
      ->capture_default_str();
  dr->add_option("--cis-sigma", dr_args.cis_sigma,
                 "read noise of the cis reference column in sweeps")
      ->capture_default_str();
  dr->add_option("--sweep-n", dr_args.sweep_spec,
                 "sweep frames lo:hi[:points] and add a cis reference column");

  BracketArgs br_args;
  auto* br = app.add_subcommand(
      "bracket", "exposure bracketing: per-bracket curves, envelope and dB "
                 "decomposition");
  add_common(br, br_args.common);
  br->add_option("--taus", br_args.taus,
                 "integration-time ratios; decimals or fractions like 1/64")
      ->required()
      ->delimiter(',');
  br->add_option("--n", br_args.n, "frames per bracket")->capture_default_str();
  br->add_option("--sigma", br_args.sigma, "read noise")
      ->capture_default_str();
  br->add_option("--cis-sigma", br_args.cis_sigma, "cis reference read noise")
      ->capture_default_str();
  br->add_option("--fwc", br_args.fwc, "cis reference full-well capacity")
      ->capture_default_str();
  br->add_option("--curve-points", br_args.curve_points,
                 "points per SNR curve")
      ->capture_default_str();

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand(
      "simulate", "capture binary frames, reconstruct, and measure quality");
  add_common(simulate, sim_args.common);
  simulate->add_option("--scene", sim_args.scene,
                       "'synthetic' or a PGM file treated as linear radiance")
      ->capture_default_str();
  simulate->add_option("--width", sim_args.width, "synthetic scene width")
      ->capture_default_str();
  simulate->add_option("--height", sim_args.height, "synthetic scene height")
      ->capture_default_str();
  simulate->add_option("--theta-max", sim_args.theta_max,
                       "exposure mapped to the scene's white point")
      ->capture_default_str();
  simulate->add_option("--n", sim_args.n, "binary frames")
      ->capture_default_str();
  simulate->add_option("--sigma", sim_args.sigma, "read noise")
      ->capture_default_str();
  simulate->add_option("--q", sim_args.q, "comparator threshold")
      ->capture_default_str();
  simulate->add_option("--prefix", sim_args.prefix,
                       "output file prefix (resolved against --out-dir)")
      ->capture_default_str();
  simulate->add_flag("--cis", sim_args.cis,
                     "also capture the scene with the linear sensor");
  simulate->add_option("--cis-sigma", sim_args.cis_sigma, "cis read noise")
      ->capture_default_str();
  simulate->add_option("--fwc", sim_args.fwc, "cis full-well capacity")
      ->capture_default_str();
  simulate->add_option("--adc-bits", sim_args.adc_bits, "cis ADC bit depth")
      ->capture_default_str();
  simulate->add_option("--threads", sim_args.threads,
                       "worker threads (0 = hardware)")
      ->capture_default_str();

  ValidateArgs val_args;
  auto* val = app.add_subcommand(
      "validate", "run the analytic-vs-Monte-Carlo acceptance table");
  add_common(val, val_args.common);
  val->add_flag("--quick", val_args.quick, "reduced Monte Carlo budgets");
  val->add_option("--perturb-omega", val_args.perturb_omega,
                  "fault injection: scale omega by (1 + x); nonzero must fail")
      ->capture_default_str();
  val->add_option("--threads", val_args.threads,
                  "worker threads (0 = hardware)")
      ->capture_default_str();

  const std::string args_line = join_args(argc, argv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (snr->parsed()) {
      snr_args.common.args_line = args_line;
      return cmd_snr_curve(snr_args);
    }
    if (vsn->parsed()) {
      vsn_args.common.args_line = args_line;
      return cmd_snr_vs_n(vsn_args);
    }
    if (opt->parsed()) {
      opt_args.common.args_line = args_line;
      return cmd_optimal(opt_args);
    }
    if (dr->parsed()) {
      dr_args.common.args_line = args_line;
      return cmd_dr(dr_args);
    }
    if (br->parsed()) {
      br_args.common.args_line = args_line;
      return cmd_bracket(br_args);
    }
    if (simulate->parsed()) {
      sim_args.common.args_line = args_line;
      return cmd_simulate(sim_args);
    }
    if (val->parsed()) {
      val_args.common.args_line = args_line;
      return cmd_validate(val_args);
    }
  } catch (const qistk::specfun::no_crossing_error& e) {
    std::cerr << "numeric-domain error: " << e.what() << "\n";
    return 2;
  } catch (const qistk::sim::saturation_error& e) {
    std::cerr << "numeric-domain error: " << e.what() << "\n";
    return 2;
  } catch (const qistk::io::io_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "numeric-domain error: " << e.what() << "\n";
    return 2;
  }

  std::cout << app.help();
  return 0;
}
