#pragma once

// Synthetic geometric scene, (A~(0), A~, A) sample generation, the binary
// dataset container, deterministic train/validation split and power
// normalisation.
//
// The scene stands in for a ray-traced indoor map. The RIS -> AP channel G
// is fixed per scene. Every user on a rows x cols grid gets a nominal
// arrival direction at the RIS that varies linearly across the grid; its
// P_h paths sit at that direction plus a uniform offset in
// [-angle_spread, angle_spread], with gains drawn i.i.d. CN(0, 1/P_h).
//
// Dataset file layout (little-endian):
//   magic "RISCEDAT" | u32 version | u32 M | u32 N | u32 K | u32 T
//   u64 count | f64 snr_db | u64 master_seed
//   payload: per sample a0 (M x N~), a_tilde (M x N~), a_full (M x N);
//            each complex entry as f32 real, f32 imag; row-major.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "risce/binary_io.hpp"
#include "risce/channel_model.hpp"
#include "risce/complex_matrix.hpp"
#include "risce/error.hpp"
#include "risce/pilot_protocol.hpp"
#include "risce/seed.hpp"

namespace risce {

struct SceneConfig {
  ArrayGeometry geometry{16, 8, 8, 0.5};
  std::size_t grid_rows = 400;
  std::size_t grid_cols = 201;
  std::size_t paths_g = 5;
  std::size_t paths_h = 5;
  double angle_spread = 0.1;  // radians

  // Nominal user directions at the RIS, swept across the grid columns
  // (azimuth) and rows (elevation).
  double azimuth_min = 0.35;
  double azimuth_max = 1.05;
  double elevation_min = 1.2;
  double elevation_max = 1.95;

  // Nominal RIS -> AP direction: angle at the AP and departure angles at the RIS.
  double ap_angle = 0.3;
  double ris_azimuth = -0.6;
  double ris_elevation = 1.3;

  std::uint64_t master_seed = 1;
  double carrier_hz = 2.4e9;  // metadata only; geometry is in wavelengths

  std::size_t user_count() const noexcept { return grid_rows * grid_cols; }

  void validate() const {
    geometry.validate();
    detail::require(grid_rows >= 1 && grid_cols >= 1, "SceneConfig: user grid is empty");
    detail::require(paths_g >= 1 && paths_h >= 1, "SceneConfig: path counts must be >= 1");
    detail::require(angle_spread >= 0.0 && std::isfinite(angle_spread),
                    "SceneConfig: angle spread must be non-negative");
  }
};

namespace detail {

inline double wrap_azimuth(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  a -= std::numbers::pi;
  return a < std::numbers::pi ? a : -std::numbers::pi;
}

/// Reflect into [0, pi).
inline double fold_elevation(double e) {
  const double two_pi = 2.0 * std::numbers::pi;
  e = std::fmod(e, two_pi);
  if (e < 0) e += two_pi;
  if (e >= std::numbers::pi) e = two_pi - e;
  return e < std::numbers::pi ? e : std::nextafter(std::numbers::pi, 0.0);
}

inline double lerp_grid(double lo, double hi, std::size_t i, std::size_t n) {
  if (n <= 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

inline cplx circular_gaussian(std::mt19937_64& rng, double variance) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

}  // namespace detail

class Scene {
 public:
  Scene() = default;
  explicit Scene(SceneConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(derive_seed(config_.master_seed, {0x6701}));
    std::uniform_real_distribution<double> offset(-config_.angle_spread, config_.angle_spread);
    const double gain_var = 1.0 / static_cast<double>(config_.paths_g);
    for (std::size_t p = 0; p < config_.paths_g; ++p) {
      Path path;
      path.gain = detail::circular_gaussian(rng, gain_var);
      path.aoa_ap = config_.ap_angle + offset(rng);
      path.azimuth = detail::wrap_azimuth(config_.ris_azimuth + offset(rng));
      path.elevation = detail::fold_elevation(config_.ris_elevation + offset(rng));
      g_paths_.paths.push_back(path);
    }
    g_ = assemble_G(config_.geometry, g_paths_);
  }

  const SceneConfig& config() const noexcept { return config_; }
  std::size_t user_count() const noexcept { return config_.user_count(); }
  const PathSet& g_paths() const noexcept { return g_paths_; }
  const ComplexMatrix& G() const noexcept { return g_; }

  /// Nominal (azimuth, elevation) of the user at grid position `index`
  /// (row-major over the grid).
  std::pair<double, double> nominal_direction(std::size_t index) const {
    const std::size_t r = index / config_.grid_cols, c = index % config_.grid_cols;
    return {detail::lerp_grid(config_.azimuth_min, config_.azimuth_max, c, config_.grid_cols),
            detail::lerp_grid(config_.elevation_min, config_.elevation_max, r, config_.grid_rows)};
  }

  PathSet user_paths(std::size_t index) const {
    if (index >= user_count())
      throw InvalidArgument("Scene: user index " + std::to_string(index) + " outside the grid");
    const auto [az, el] = nominal_direction(index);
    std::mt19937_64 rng(derive_seed(config_.master_seed, {0x4855, index}));
    std::uniform_real_distribution<double> offset(-config_.angle_spread, config_.angle_spread);
    const double gain_var = 1.0 / static_cast<double>(config_.paths_h);
    PathSet ps;
    for (std::size_t p = 0; p < config_.paths_h; ++p) {
      Path path;
      path.gain = detail::circular_gaussian(rng, gain_var);
      path.azimuth = detail::wrap_azimuth(az + offset(rng));
      path.elevation = detail::fold_elevation(el + offset(rng));
      ps.paths.push_back(path);
    }
    return ps;
  }

  ComplexMatrix h(std::size_t index) const {
    return assemble_h(config_.geometry, user_paths(index));
  }

  ComplexMatrix cascaded(std::size_t index) const { return cascade(g_, h(index)); }

 private:
  SceneConfig config_;
  PathSet g_paths_;
  ComplexMatrix g_;
};

inline Scene generate_scene(const SceneConfig& config) { return Scene(config); }

struct Sample {
  ComplexMatrix a0;       // LS partial estimate, M x N~
  ComplexMatrix a_tilde;  // group-leader columns, M x N~
  ComplexMatrix a_full;   // cascaded channel, M x N
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

inline double noise_variance_for(double power, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return power * std::pow(10.0, -snr_db / 10.0);
}

/// Pipeline for one user: A = G diag(h), Y = sqrt(P) A X + N,
/// a0 = Y X~^H / (K sqrt P), a_tilde = leader columns of A.
/// An SNR of +infinity gives a noiseless measurement.
inline Sample generate_sample(const Scene& scene, std::size_t user_index,
                              const GroupingConfig& grouping, double snr_db, std::uint64_t seed,
                              const PilotMatrix* pilots = nullptr) {
  GroupingConfig g = grouping;
  g.elements = scene.config().geometry.ris_elements();
  g.noise_variance = noise_variance_for(g.power, snr_db);
  g.validate();
  PilotMatrix own;
  if (pilots == nullptr) {
    own = make_pilots(g);
    pilots = &own;
  }
  Sample s;
  s.a_full = scene.cascaded(user_index);
  const auto round =
      simulate_rx(s.a_full, pilots->expanded, g.power, g.noise_variance, derive_seed(seed, {0x4E}));
  s.a0 = ls_estimate(round.received, pilots->grouped, g.group_size, g.power);
  s.a_tilde = grouped_channels(s.a_full, g.group_size).leaders;
  s.snr_db = snr_db;
  s.seed = seed;
  return s;
}

inline std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, {0x5A, index});
}

/// Samples for users 0 .. count-1 in grid order.
inline std::vector<Sample> generate_dataset(const Scene& scene, const GroupingConfig& grouping,
                                            double snr_db, std::size_t count) {
  if (count == 0 || count > scene.user_count())
    throw InvalidArgument("generate_dataset: count must be in [1, " +
                          std::to_string(scene.user_count()) + "]");
  GroupingConfig g = grouping;
  g.elements = scene.config().geometry.ris_elements();
  g.noise_variance = noise_variance_for(g.power, snr_db);
  const PilotMatrix pilots = make_pilots(g);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(generate_sample(scene, i, g, snr_db, sample_seed(scene.config().master_seed, i),
                                  &pilots));
  return out;
}

// ---------------------------------------------------------------------------
// Binary container

inline constexpr char kDatasetMagic[8] = {'R', 'I', 'S', 'C', 'E', 'D', 'A', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetInfo {
  std::uint32_t antennas = 0;     // M
  std::uint32_t elements = 0;     // N
  std::uint32_t group_size = 0;   // K
  std::uint32_t pilot_length = 0; // T
  std::uint64_t count = 0;
  double snr_db = 0.0;
  std::uint64_t master_seed = 0;

  std::uint32_t groups() const noexcept { return group_size ? elements / group_size : 0; }

  std::uint64_t payload_bytes() const noexcept {
    const std::uint64_t m = antennas, g = groups(), n = elements;
    return count * (2 * m * g + 2 * m * g + 2 * m * n) * 4;
  }
};

struct Dataset {
  DatasetInfo info;
  std::vector<Sample> samples;
};

inline constexpr std::uint64_t kDatasetHeaderBytes = 8 + 4 * 5 + 8 + 8 + 8;

inline void write_dataset(const std::string& path, const Dataset& ds) {
  const auto& info = ds.info;
  if (info.count != ds.samples.size())
    throw InvalidArgument("write_dataset: header count does not match the sample list");
  io::Writer w(path);
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(info.antennas);
  w.u32(info.elements);
  w.u32(info.group_size);
  w.u32(info.pilot_length);
  w.u64(info.count);
  w.f64(info.snr_db);
  w.u64(info.master_seed);
  const auto put = [&](const ComplexMatrix& m, std::size_t rows, std::size_t cols) {
    if (m.rows() != rows || m.cols() != cols)
      throw InvalidArgument("write_dataset: sample matrix has unexpected shape");
    for (const auto& v : m.data()) {
      w.f32(static_cast<float>(v.real()));
      w.f32(static_cast<float>(v.imag()));
    }
  };
  for (const auto& s : ds.samples) {
    put(s.a0, info.antennas, info.groups());
    put(s.a_tilde, info.antennas, info.groups());
    put(s.a_full, info.antennas, info.elements);
  }
  w.close();
}

/// Reads a dataset. Sample seeds are not stored; they are re-derived from
/// the master seed and file position, which matches generate_dataset order.
inline Dataset read_dataset(const std::string& path) {
  io::Reader r(path);
  if (r.size() < kDatasetHeaderBytes) throw TruncationError("'" + path + "': header truncated");
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
    throw FormatError("'" + path + "' is not a dataset file (bad magic)");
  if (const auto v = r.u32(); v != kDatasetVersion)
    throw FormatError("'" + path + "': unsupported dataset version " + std::to_string(v));
  Dataset ds;
  auto& info = ds.info;
  info.antennas = r.u32();
  info.elements = r.u32();
  info.group_size = r.u32();
  info.pilot_length = r.u32();
  info.count = r.u64();
  info.snr_db = r.f64();
  info.master_seed = r.u64();
  if (info.antennas == 0 || info.elements == 0 || info.group_size == 0 ||
      info.elements % info.group_size != 0)
    throw FormatError("'" + path + "': inconsistent dimensions in header");
  if (r.remaining() != info.payload_bytes())
    throw TruncationError("'" + path + "': payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " + std::to_string(info.payload_bytes()));
  const auto get = [&](std::size_t rows, std::size_t cols) {
    ComplexMatrix m(rows, cols);
    for (auto& v : m.data()) {
      const float re = r.f32();
      const float im = r.f32();
      v = {re, im};
    }
    return m;
  };
  ds.samples.reserve(info.count);
  for (std::uint64_t i = 0; i < info.count; ++i) {
    Sample s;
    s.a0 = get(info.antennas, info.groups());
    s.a_tilde = get(info.antennas, info.groups());
    s.a_full = get(info.antennas, info.elements);
    s.snr_db = info.snr_db;
    s.seed = sample_seed(info.master_seed, i);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Split and normalisation

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle, then the first round(ratio * count) indices train.
inline Split split(std::size_t count, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split: ratio must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(count)));
  if (n_train == 0 || n_train >= count)
    throw InvalidArgument("split: ratio leaves an empty partition for " + std::to_string(count) +
                          " samples");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  std::mt19937_64 rng(derive_seed(seed, {0x5B}));
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return s;
}

inline std::vector<Sample> take(const std::vector<Sample>& samples,
                                std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples.at(i));
  return out;
}

/// Scale making mean ||A||_F^2 / (M N) over `reference` equal to one.
inline double normalization_scale(const std::vector<Sample>& samples,
                                  std::span<const std::size_t> reference) {
  if (reference.empty()) throw InvalidArgument("normalize_dataset: empty reference set");
  double power = 0.0;
  for (auto i : reference) {
    const auto& a = samples.at(i).a_full;
    power += frobenius_norm_sq(a) / static_cast<double>(a.size());
  }
  power /= static_cast<double>(reference.size());
  if (!(power > 0.0)) throw InvalidArgument("normalize_dataset: dataset has zero power");
  return 1.0 / std::sqrt(power);
}

inline void apply_scale(std::vector<Sample>& samples, double scale) {
  for (auto& s : samples) {
    s.a0 *= scale;
    s.a_tilde *= scale;
    s.a_full *= scale;
  }
}

/// Normalises every sample in place using the power of `reference`
/// (normally the training split); returns the applied scale.
inline double normalize_dataset(std::vector<Sample>& samples,
                                std::span<const std::size_t> reference) {
  const double scale = normalization_scale(samples, reference);
  apply_scale(samples, scale);
  return scale;
}

inline double normalize_dataset(std::vector<Sample>& samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return normalize_dataset(samples, all);
}

}  // namespace risce
