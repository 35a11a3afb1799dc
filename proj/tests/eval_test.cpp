#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "risce/experiment.hpp"
#include "test_util.hpp"

using namespace risce;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("risce_eval_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small, fast experiment: M=2, N=4 (2x2), 60 users.
ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.scene.geometry = {2, 2, 2, 0.5};
  c.scene.grid_rows = 6;
  c.scene.grid_cols = 10;
  c.scene.paths_g = 2;
  c.scene.paths_h = 2;
  c.samples = 40;
  c.group_size = 2;
  c.channels = 2;
  c.ienet_blocks = 1;
  c.cenet_blocks = 1;
  c.train.total_iters = 4;
  c.train.val_every = 2;
  c.train.batch_size = 4;
  return c;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "risce");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(f, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST(Nmse, ExactEstimateIsZeroAndFloorInDb) {
  std::mt19937_64 rng(1);
  const auto a = test::random_matrix(3, 4, rng);
  EXPECT_EQ(nmse(a, a), 0.0);
  EXPECT_EQ(to_db(0.0), kNmseFloorDb);
  EXPECT_EQ(to_db(1e-50), kNmseFloorDb);
}

TEST(Nmse, ZeroEstimateIsZeroDb) {
  std::mt19937_64 rng(2);
  const auto a = test::random_matrix(3, 4, rng);
  EXPECT_DOUBLE_EQ(nmse(a, ComplexMatrix(3, 4)), 1.0);
  EXPECT_DOUBLE_EQ(to_db(1.0), 0.0);
}

TEST(Nmse, DoubledEstimateIsZeroDb) {
  std::mt19937_64 rng(3);
  const auto a = test::random_matrix(3, 4, rng);
  EXPECT_NEAR(nmse(a, a * 2.0), 1.0, 1e-15);
}

TEST(Nmse, ZeroPowerTruthRejected) {
  EXPECT_THROW(nmse(ComplexMatrix(2, 2), ComplexMatrix(2, 2)), InvalidArgument);
  EXPECT_THROW(nmse(ComplexMatrix(2, 2), ComplexMatrix(2, 3)), InvalidArgument);
}

TEST(Nmse, MeanOfPerSampleRatios) {
  // ratios 1 and 0.25 average to 0.625, not the ratio of sums
  const std::vector<ComplexMatrix> truth{ComplexMatrix(1, 1, {cplx(1)}), ComplexMatrix(1, 1, {cplx(10)})};
  const std::vector<ComplexMatrix> est{ComplexMatrix(1, 1), ComplexMatrix(1, 1, {cplx(5)})};
  EXPECT_DOUBLE_EQ(mean_nmse(truth, est), 0.625);
}

TEST(BaselineLs, UnitGroupNoiselessIsExact) {
  std::mt19937_64 rng(4);
  const auto a = test::random_matrix(4, 6, rng);
  const auto xt = build_pilot(6, 6);
  const auto a0 = ls_estimate(simulate_rx(a, expand_pilot(xt, 1), 1.0, 0.0, 0).received, xt, 1, 1.0);
  EXPECT_LT(nmse(a, baseline_ls(a0, 1)), 1e-24);
}

TEST(BaselineLs, GroupConstantChannelIsExact) {
  std::mt19937_64 rng(5);
  for (std::size_t k : {2u, 4u}) {
    const auto a = expand_partial(test::random_matrix(3, 8 / k, rng), k);
    const auto xt = build_pilot(8 / k, 8 / k);
    const auto a0 =
        ls_estimate(simulate_rx(a, expand_pilot(xt, k), 2.0, 0.0, 0).received, xt, k, 2.0);
    EXPECT_LT(nmse(a, baseline_ls(a0, k)), 1e-24);
  }
}

TEST(BaselineLs, TwoColumnClosedForm) {
  // noiseless K=2: both columns become (c1 + c2) / 2, so the error energy is
  // ||c1 - c2||^2 / 2 against ||c1||^2 + ||c2||^2
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = test::random_matrix(5, 2, rng);
    const auto xt = build_pilot(1, 1);
    const auto a0 =
        ls_estimate(simulate_rx(a, expand_pilot(xt, 2), 1.0, 0.0, 0).received, xt, 2, 1.0);
    double diff = 0.0, energy = 0.0;
    for (std::size_t m = 0; m < 5; ++m) {
      diff += std::norm(a(m, 0) - a(m, 1));
      energy += std::norm(a(m, 0)) + std::norm(a(m, 1));
    }
    const double want = diff / (2.0 * energy);
    EXPECT_NEAR(nmse(a, baseline_ls(a0, 2)), want, 1e-13);
  }
}

TEST(BaselineLs, NonDecreasingInGroupSizeOnNoiselessScene) {
  ExperimentConfig c;
  c.scene.geometry = {4, 4, 4, 0.5};
  c.scene.grid_rows = 10;
  c.scene.grid_cols = 20;
  c.samples = 200;
  const Scene scene(c.scene);
  double prev = -1.0;
  for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
    GroupingConfig g;
    g.group_size = k;
    const auto samples = generate_dataset(scene, g, std::numeric_limits<double>::infinity(), 200);
    double sum = 0.0;
    for (const auto& s : samples) sum += nmse(s.a_full, baseline_ls(s.a0, k));
    const double mean = sum / 200.0;
    if (k == 1) EXPECT_LT(mean, 1e-24);
    EXPECT_GE(mean, prev) << "K=" << k;
    prev = mean;
  }
}

TEST(Config, ParseOverridesAndRoundTrip) {
  const auto c = parse_config(
      "# desk\n"
      "antennas = 8\n ris_rows=4\nris_cols = 4  # comment\n"
      "k = 4\nsnr_db = 10\nscheme = cenet\niters = 123\nextra_val_iters = 200, 400\n");
  EXPECT_EQ(c.scene.geometry.ap_antennas, 8u);
  EXPECT_EQ(c.scene.geometry.ris_elements(), 16u);
  EXPECT_EQ(c.group_size, 4u);
  EXPECT_EQ(c.snr_db, 10.0);
  EXPECT_EQ(c.scheme, Scheme::cenet);
  EXPECT_EQ(c.train.total_iters, 123u);
  EXPECT_EQ(c.train.extra_val_iters, (std::vector<std::uint64_t>{200, 400}));
  const auto again = parse_config(format_config(c));
  EXPECT_EQ(format_config(again), format_config(c));
}

TEST(Config, BadInputIsUsageError) {
  EXPECT_THROW(parse_config("nonsense = 1\n"), UsageError);
  EXPECT_THROW(parse_config("k 4\n"), UsageError);
  EXPECT_THROW(parse_config("k = four\n"), UsageError);
  EXPECT_THROW(parse_config("k = -2\n"), UsageError);
  EXPECT_THROW(parse_config("scheme = cnn\n"), UsageError);
}

TEST(Config, ShippedConfigsLoad) {
  const auto desk = load_config(RISCE_SOURCE_DIR "/configs/desk.cfg");
  EXPECT_NO_THROW(desk.validate());
  EXPECT_EQ(desk.scene.geometry.ap_antennas, 8u);
  EXPECT_EQ(desk.scene.geometry.ris_elements(), 16u);
  EXPECT_EQ(desk.scene.paths_g, 3u);
  EXPECT_EQ(desk.scene.paths_h, 3u);
  EXPECT_EQ(desk.samples, 5000u);
  EXPECT_EQ(desk.train.total_iters, 20000u);
  EXPECT_EQ(desk.snr_db, 20.0);

  const auto full = load_config(RISCE_SOURCE_DIR "/configs/full.cfg");
  EXPECT_NO_THROW(full.validate());
  EXPECT_EQ(full.scene.geometry.ris_elements(), 64u);
  EXPECT_EQ(full.samples, full.scene.user_count());
  EXPECT_EQ(full.channels, 32u);
  EXPECT_EQ(full.train.halve_every, 50000u);
}

TEST(Schemes, NamesRoundTrip) {
  for (Scheme s : {Scheme::ls, Scheme::cenet, Scheme::ienet_cenet, Scheme::ienet_cenet_no_dense})
    EXPECT_EQ(parse_scheme(scheme_name(s)), s);
}

TEST(Experiment, LsNeedsNoTrainingAndMatchesDirectEvaluation) {
  auto c = tiny_experiment();
  c.scheme = Scheme::ls;
  const auto data = prepare(c);
  const auto r = run_experiment(c, data);
  EXPECT_EQ(r.iters, 0u);
  EXPECT_TRUE(r.records.empty());
  double sum = 0.0;
  for (auto i : data.split.val) sum += nmse(data.samples[i].a_full, baseline_ls(data.samples[i].a0, 2));
  EXPECT_NEAR(r.nmse, sum / static_cast<double>(data.split.val.size()), 1e-5);
}

TEST(Experiment, SameConfigGivesIdenticalResult) {
  const auto c = tiny_experiment();
  const auto a = run_experiment(c), b = run_experiment(c);
  EXPECT_EQ(a.nmse_db, b.nmse_db);
  EXPECT_EQ(a.records, b.records);
}

TEST(Experiment, WritesResolvedConfigLogAndResult) {
  const auto dir = temp_dir("outputs");
  auto c = tiny_experiment();
  RunOptions opt;
  opt.out_dir = dir.string();
  const auto r = run_experiment(c, opt);
  const std::string tag = run_tag(c);
  const auto cfg = load_config((dir / (tag + ".cfg")).string());
  EXPECT_EQ(format_config(cfg), format_config(c));
  const auto log = read_lines(dir / (tag + ".log.csv"));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0], kLossLogHeader);
  const auto row = read_lines(dir / (tag + ".result.csv"));
  ASSERT_EQ(row.size(), 2u);
  EXPECT_EQ(row[1], format_result(r));
  EXPECT_TRUE(std::filesystem::exists(dir / (tag + ".ckpt")));
}

TEST(Sweep, RowCountIsSchemesTimesValues) {
  auto c = tiny_experiment();
  const std::vector<Scheme> schemes{Scheme::ls, Scheme::cenet, Scheme::ienet_cenet};
  const auto rows = run_sweep(SweepAxis::k, {2, 4}, c, schemes);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].k, 2u);
  EXPECT_EQ(rows[3].k, 4u);
  EXPECT_EQ(rows[4].scheme, Scheme::cenet);
  const auto snr = run_sweep(SweepAxis::snr, {10, 20}, c, {Scheme::ls});
  ASSERT_EQ(snr.size(), 2u);
  EXPECT_EQ(snr[1].snr_db, 20.0);
  EXPECT_GT(snr[0].nmse, snr[1].nmse);
  EXPECT_THROW(run_sweep(SweepAxis::k, {3}, c, {Scheme::ls}), InvalidArgument);
}

TEST(Cli, SelftestExitsZero) {
  const auto r = run_cli({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("selftest passed"), std::string::npos);
}

TEST(Cli, NoSubcommandOrUnknownFlagIsUsageError) {
  EXPECT_EQ(run_cli({}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"train", "--bogus"}).code, cli::kUsage);
}

TEST(Cli, MissingDatasetIsUsageError) {
  const auto r = run_cli({"eval", "--scheme", "LS"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("--dataset"), std::string::npos);
  EXPECT_EQ(run_cli({"generate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"eval", "--scheme", "LS", "--dataset", "/nonexistent/x.bin"}).code,
            cli::kUsage);
}

TEST(Cli, GenerateTrainEvalRoundTrip) {
  const auto dir = temp_dir("cli");
  const auto cfg = dir / "tiny.cfg";
  {
    std::ofstream f(cfg);
    f << format_config(tiny_experiment());
  }
  const auto ds = (dir / "data.bin").string();
  auto r = run_cli({"generate", "--config", cfg.string(), "--dataset", ds});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"train", "--config", cfg.string(), "--dataset", ds, "--out-dir", dir.string(),
               "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind(kResultHeader, 0), 0u);
  const auto ckpt = dir / (run_tag(tiny_experiment()) + ".ckpt");
  r = run_cli({"eval", "--dataset", ds, "--checkpoint", ckpt.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("IENet+CENet"), std::string::npos);
  // dataset with a different K than the configuration
  r = run_cli({"train", "--config", cfg.string(), "--dataset", ds, "--k", "4", "--out-dir",
               dir.string(), "--quiet"});
  EXPECT_EQ(r.code, cli::kDataFormat);
  // corrupt file
  {
    std::fstream f(ds, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  r = run_cli({"eval", "--dataset", ds, "--checkpoint", ckpt.string()});
  EXPECT_EQ(r.code, cli::kDataFormat);
}

TEST(Cli, SweepWritesCsvWithHeader) {
  const auto dir = temp_dir("sweep");
  const auto cfg = dir / "tiny.cfg";
  {
    std::ofstream f(cfg);
    f << format_config(tiny_experiment());
  }
  const auto r = run_cli({"sweep", "--config", cfg.string(), "--axis", "k", "--values", "2,4",
                          "--schemes", "LS,CENet", "--out-dir", dir.string(), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = read_lines(dir / "sweep.csv");
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "k,snr_db,scheme,nmse_db,iters,seed");
  EXPECT_EQ(lines[1].rfind("2,20,LS,", 0), 0u);
  EXPECT_EQ(lines[4].rfind("4,20,CENet,", 0), 0u);
}

TEST(Cli, DivergenceExitCode) {
  const auto dir = temp_dir("diverge");
  const auto r = run_cli({"train", "--set", "antennas=2", "--set", "ris_rows=2", "--set",
                          "ris_cols=2", "--set", "grid_rows=4", "--set", "grid_cols=5", "--set",
                          "samples=20", "--set", "channels=2", "--set", "ienet_blocks=1", "--set",
                          "cenet_blocks=1", "--set", "lr=1e30", "--iters", "50", "--out-dir",
                          dir.string(), "--quiet"});
  EXPECT_EQ(r.code, cli::kDivergence) << r.out << r.err;
}
