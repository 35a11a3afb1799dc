#pragma once

// Experiment runner: scene -> dataset -> split/normalise -> train -> NMSE,
// plus key=value configuration files and (K, SNR, iters) sweeps.

#include <cctype>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "risce/dataset.hpp"
#include "risce/metrics.hpp"
#include "risce/models.hpp"
#include "risce/training.hpp"

namespace risce {

enum class Scheme { ls, cenet, ienet_cenet, ienet_cenet_no_dense };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ls: return "LS";
    case Scheme::cenet: return "CENet";
    case Scheme::ienet_cenet: return "IENet+CENet";
    case Scheme::ienet_cenet_no_dense: return "IENet+CENet-no-dense";
  }
  return "?";
}

/// Accepts the display names and the short forms ls, cenet, full, nodense.
inline Scheme parse_scheme(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "ls") return Scheme::ls;
  if (l == "cenet") return Scheme::cenet;
  if (l == "ienet+cenet" || l == "full") return Scheme::ienet_cenet;
  if (l == "ienet+cenet-no-dense" || l == "nodense" || l == "no-dense")
    return Scheme::ienet_cenet_no_dense;
  throw UsageError("unknown scheme '" + s + "'");
}

struct ExperimentConfig {
  SceneConfig scene;
  std::size_t group_size = 2;
  std::size_t pilot_length = 0;
  double power = 1.0;
  double snr_db = 20.0;
  std::size_t samples = 5000;
  double train_ratio = 0.9;
  std::uint64_t split_seed = 1;
  Scheme scheme = Scheme::ienet_cenet;
  std::size_t channels = 32;
  std::size_t ienet_blocks = 2;
  std::size_t cenet_blocks = 4;
  double beta = 0.2;
  double slope = 0.2;
  TrainConfig train;

  ModelConfig model_config() const {
    ModelConfig m;
    m.antennas = scene.geometry.ap_antennas;
    m.elements = scene.geometry.ris_elements();
    m.group_size = group_size;
    m.use_ienet = scheme != Scheme::cenet;
    const bool dense = scheme != Scheme::ienet_cenet_no_dense;
    m.ienet = {channels, ienet_blocks, beta, slope, dense};
    m.cenet = {channels, cenet_blocks, beta, slope, dense};
    return m;
  }

  GroupingConfig grouping() const {
    GroupingConfig g;
    g.elements = scene.geometry.ris_elements();
    g.group_size = group_size;
    g.pilot_length = pilot_length;
    g.power = power;
    g.noise_variance = noise_variance_for(power, snr_db);
    return g;
  }

  void validate() const {
    scene.validate();
    grouping().validate();
    detail::require(samples >= 2 && samples <= scene.user_count(),
                    "experiment: samples must be in [2, grid size]");
    if (scheme != Scheme::ls) {
      model_config().validate();
      train.validate();
    }
  }
};

// ---------------------------------------------------------------------------
// Config files: one `key = value` per line, '#' starts a comment.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class V>
V parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  V v{};
  is >> v;
  if (!is || !(is >> std::ws).eof())
    throw UsageError("config: bad value '" + value + "' for '" + key + "'");
  if constexpr (std::is_unsigned_v<V>)
    if (value.find('-') != std::string::npos)
      throw UsageError("config: '" + key + "' must be non-negative");
  return v;
}

inline std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(parse_number<std::uint64_t>(key, trim(item)));
  return out;
}

}  // namespace detail

/// Sets one configuration key; unknown keys are a usage error.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  const std::string v = detail::trim(raw);
  auto& s = c.scene;
  auto& t = c.train;
  if (key == "antennas") s.geometry.ap_antennas = parse_number<std::size_t>(key, v);
  else if (key == "ris_rows") s.geometry.ris_rows = parse_number<std::size_t>(key, v);
  else if (key == "ris_cols") s.geometry.ris_cols = parse_number<std::size_t>(key, v);
  else if (key == "spacing") s.geometry.d_over_lambda = parse_number<double>(key, v);
  else if (key == "grid_rows") s.grid_rows = parse_number<std::size_t>(key, v);
  else if (key == "grid_cols") s.grid_cols = parse_number<std::size_t>(key, v);
  else if (key == "paths_g") s.paths_g = parse_number<std::size_t>(key, v);
  else if (key == "paths_h") s.paths_h = parse_number<std::size_t>(key, v);
  else if (key == "angle_spread") s.angle_spread = parse_number<double>(key, v);
  else if (key == "scene_seed") s.master_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "k") c.group_size = parse_number<std::size_t>(key, v);
  else if (key == "pilot_length") c.pilot_length = parse_number<std::size_t>(key, v);
  else if (key == "power") c.power = parse_number<double>(key, v);
  else if (key == "snr_db") c.snr_db = parse_number<double>(key, v);
  else if (key == "samples") c.samples = parse_number<std::size_t>(key, v);
  else if (key == "train_ratio") c.train_ratio = parse_number<double>(key, v);
  else if (key == "split_seed") c.split_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "scheme") c.scheme = parse_scheme(v);
  else if (key == "channels") c.channels = parse_number<std::size_t>(key, v);
  else if (key == "ienet_blocks") c.ienet_blocks = parse_number<std::size_t>(key, v);
  else if (key == "cenet_blocks") c.cenet_blocks = parse_number<std::size_t>(key, v);
  else if (key == "beta") c.beta = parse_number<double>(key, v);
  else if (key == "slope") c.slope = parse_number<double>(key, v);
  else if (key == "rho") t.rho = parse_number<double>(key, v);
  else if (key == "lr") t.lr0 = parse_number<double>(key, v);
  else if (key == "halve_every") t.halve_every = parse_number<std::uint64_t>(key, v);
  else if (key == "iters") t.total_iters = parse_number<std::uint64_t>(key, v);
  else if (key == "batch") t.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "val_every") t.val_every = parse_number<std::uint64_t>(key, v);
  else if (key == "extra_val_iters") t.extra_val_iters = detail::parse_u64_list(key, v);
  else if (key == "clip_norm") t.clip_norm = parse_number<double>(key, v);
  else if (key == "eval_batch") t.eval_batch = parse_number<std::size_t>(key, v);
  else throw UsageError("config: unknown key '" + key + "'");
}

inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Fully resolved configuration in the same key = value format.
inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& s = c.scene;
  const auto& t = c.train;
  os << "antennas = " << s.geometry.ap_antennas << '\n'
     << "ris_rows = " << s.geometry.ris_rows << '\n'
     << "ris_cols = " << s.geometry.ris_cols << '\n'
     << "spacing = " << s.geometry.d_over_lambda << '\n'
     << "grid_rows = " << s.grid_rows << '\n'
     << "grid_cols = " << s.grid_cols << '\n'
     << "paths_g = " << s.paths_g << '\n'
     << "paths_h = " << s.paths_h << '\n'
     << "angle_spread = " << s.angle_spread << '\n'
     << "scene_seed = " << s.master_seed << '\n'
     << "k = " << c.group_size << '\n'
     << "pilot_length = " << c.pilot_length << '\n'
     << "power = " << c.power << '\n'
     << "snr_db = " << c.snr_db << '\n'
     << "samples = " << c.samples << '\n'
     << "train_ratio = " << c.train_ratio << '\n'
     << "split_seed = " << c.split_seed << '\n'
     << "scheme = " << scheme_name(c.scheme) << '\n'
     << "channels = " << c.channels << '\n'
     << "ienet_blocks = " << c.ienet_blocks << '\n'
     << "cenet_blocks = " << c.cenet_blocks << '\n'
     << "beta = " << c.beta << '\n'
     << "slope = " << c.slope << '\n'
     << "rho = " << t.rho << '\n'
     << "lr = " << t.lr0 << '\n'
     << "halve_every = " << t.halve_every << '\n'
     << "iters = " << t.total_iters << '\n'
     << "batch = " << t.batch_size << '\n'
     << "seed = " << t.seed << '\n'
     << "val_every = " << t.val_every << '\n'
     << "extra_val_iters = ";
  for (std::size_t i = 0; i < t.extra_val_iters.size(); ++i)
    os << (i ? "," : "") << t.extra_val_iters[i];
  os << '\n'
     << "clip_norm = " << t.clip_norm << '\n'
     << "eval_batch = " << t.eval_batch << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Data preparation

/// Normalised samples with their split and packed float tensors.
struct PreparedData {
  std::vector<Sample> samples;
  Split split;
  double scale = 1.0;
  PackedSet<float> train;
  PackedSet<float> val;
};

inline PreparedData prepare(std::vector<Sample> samples, double train_ratio,
                            std::uint64_t split_seed) {
  PreparedData d;
  d.samples = std::move(samples);
  d.split = risce::split(d.samples.size(), train_ratio, split_seed);
  d.scale = normalize_dataset(d.samples, d.split.train);
  d.train = pack<float>(d.samples, d.split.train);
  d.val = pack<float>(d.samples, d.split.val);
  return d;
}

inline std::vector<Sample> generate_samples(const ExperimentConfig& c) {
  const Scene scene(c.scene);
  return generate_dataset(scene, c.grouping(), c.snr_db, c.samples);
}

inline PreparedData prepare(const ExperimentConfig& c) {
  return prepare(generate_samples(c), c.train_ratio, c.split_seed);
}

inline Dataset make_dataset_file(const ExperimentConfig& c, std::vector<Sample> samples) {
  Dataset ds;
  const auto g = c.grouping();
  ds.info = {static_cast<std::uint32_t>(c.scene.geometry.ap_antennas),
             static_cast<std::uint32_t>(g.elements),
             static_cast<std::uint32_t>(g.group_size),
             static_cast<std::uint32_t>(g.slots()),
             samples.size(),
             c.snr_db,
             c.scene.master_seed};
  ds.samples = std::move(samples);
  return ds;
}

// ---------------------------------------------------------------------------
// Runs

struct ExperimentResult {
  std::size_t k = 0;
  double snr_db = 0.0;
  Scheme scheme = Scheme::ls;
  double nmse = 0.0;  // linear, mean of per-sample ratios on the validation split
  double nmse_db = 0.0;
  std::uint64_t iters = 0;
  std::uint64_t seed = 0;
  std::vector<LossRecord> records;
  double seconds = 0.0;
};

inline constexpr const char* kResultHeader = "k,snr_db,scheme,nmse_db,iters,seed";

inline std::string format_result(const ExperimentResult& r) {
  std::ostringstream os;
  os << r.k << ',' << r.snr_db << ',' << scheme_name(r.scheme) << ',' << std::setprecision(17)
     << r.nmse_db << ',' << r.iters << ',' << r.seed;
  return os.str();
}

struct RunOptions {
  std::string out_dir;  // resolved config, loss log, checkpoint and result row; empty disables
  std::function<void(const LossRecord&)> on_record;
};

inline std::string run_tag(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string name = scheme_name(c.scheme);
  for (auto& ch : name)
    if (ch == '+') ch = '_';
  os << name << "_k" << c.group_size << "_snr" << c.snr_db << "_it" << c.train.total_iters;
  return os.str();
}

/// Trains (unless the scheme is LS) and evaluates on the validation split
/// of already prepared data.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const PreparedData& data,
                                       const RunOptions& opt = {}) {
  c.validate();
  ExperimentResult r;
  r.k = c.group_size;
  r.snr_db = c.snr_db;
  r.scheme = c.scheme;
  r.seed = c.train.seed;
  std::filesystem::path dir;
  const std::string tag = run_tag(c);
  if (!opt.out_dir.empty()) {
    dir = opt.out_dir;
    std::filesystem::create_directories(dir);
    std::ofstream cfg(dir / (tag + ".cfg"));
    cfg << format_config(c) << "# nmse evaluated on the validation split\n";
  }
  if (c.scheme == Scheme::ls) {
    r.nmse = evaluate_ls_nmse(data.val, c.group_size, data.scale, c.train.eval_batch);
  } else {
    JointModel<float> model(c.model_config(), c.train.seed);
    LoopOptions lo;
    lo.scale = data.scale;
    lo.on_record = opt.on_record;
    if (!opt.out_dir.empty()) {
      lo.log_path = (dir / (tag + ".log.csv")).string();
      lo.checkpoint_path = (dir / (tag + ".ckpt")).string();
      lo.checkpoint_meta = {{"scheme", scheme_name(c.scheme)},
                            {"k", std::to_string(c.group_size)},
                            {"config", format_config(c)}};
    }
    const auto res = train_loop(model, data.train, data.val, c.train, lo);
    r.nmse = res.final_val_nmse;
    r.records = res.records;
    r.seconds = res.seconds;
    r.iters = c.train.total_iters;
  }
  r.nmse_db = to_db(r.nmse);
  if (!opt.out_dir.empty()) {
    std::ofstream row(dir / (tag + ".result.csv"));
    row << kResultHeader << '\n' << format_result(r) << '\n';
  }
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  c.validate();
  return run_experiment(c, prepare(c), opt);
}

enum class SweepAxis { k, snr, iters };

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "k" || s == "K") return SweepAxis::k;
  if (s == "snr" || s == "snr_db") return SweepAxis::snr;
  if (s == "iters") return SweepAxis::iters;
  throw UsageError("unknown sweep axis '" + s + "' (expected k, snr or iters)");
}

/// One row per (value, scheme), values outermost. Data are generated once per
/// value of K or SNR and shared by every scheme at that point.
inline std::vector<ExperimentResult> run_sweep(SweepAxis axis, const std::vector<double>& values,
                                               const ExperimentConfig& base,
                                               const std::vector<Scheme>& schemes,
                                               const RunOptions& opt = {}) {
  if (values.empty() || schemes.empty()) throw UsageError("sweep: need values and schemes");
  std::vector<ExperimentResult> out;
  for (double v : values) {
    ExperimentConfig c = base;
    switch (axis) {
      case SweepAxis::k:
        if (v < 1 || v != std::floor(v)) throw UsageError("sweep: K values must be positive integers");
        c.group_size = static_cast<std::size_t>(v);
        break;
      case SweepAxis::snr: c.snr_db = v; break;
      case SweepAxis::iters:
        if (v < 1 || v != std::floor(v)) throw UsageError("sweep: iteration counts must be positive integers");
        c.train.total_iters = static_cast<std::uint64_t>(v);
        break;
    }
    c.validate();
    const PreparedData data = prepare(c);
    for (Scheme s : schemes) {
      c.scheme = s;
      out.push_back(run_experiment(c, data, opt));
    }
  }
  return out;
}

inline void write_results_csv(const std::string& path, const std::vector<ExperimentResult>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << kResultHeader << '\n';
  for (const auto& r : rows) f << format_result(r) << '\n';
}

}  // namespace risce
