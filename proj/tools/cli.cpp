#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include "risce/diagnostics.hpp"
#include "risce/experiment.hpp"
#include "risce/selftest.hpp"

namespace risce::cli {
namespace {

struct CommonFlags {
  std::string config;
  std::string out_dir = "runs";
  std::string dataset;
  std::string scheme;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iters;
  std::optional<std::size_t> k;
  std::optional<double> snr_db;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "key = value configuration file");
  app->add_option("--out-dir", f.out_dir, "directory for logs, checkpoints and results");
  app->add_option("--seed", f.seed, "training seed");
  app->add_option("--k", f.k, "group size K");
  app->add_option("--snr-db", f.snr_db, "pilot SNR in dB");
  app->add_option("--iters", f.iters, "training iterations");
  app->add_option("--scheme", f.scheme, "LS, CENet, IENet+CENet or IENet+CENet-no-dense");
  app->add_option("--set", f.sets, "extra key=value override (repeatable)");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) c = load_config(f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (f.seed) c.train.seed = *f.seed;
  if (f.iters) c.train.total_iters = *f.iters;
  if (f.k) c.group_size = *f.k;
  if (f.snr_db) c.snr_db = *f.snr_db;
  if (!f.scheme.empty()) c.scheme = parse_scheme(f.scheme);
  return c;
}

/// Reads a dataset file and checks it against the configured dimensions.
std::vector<Sample> load_samples(const std::string& path, const ExperimentConfig& c) {
  if (!std::filesystem::exists(path)) throw UsageError("dataset '" + path + "' does not exist");
  Dataset ds = read_dataset(path);
  const auto& i = ds.info;
  if (i.antennas != c.scene.geometry.ap_antennas || i.elements != c.scene.geometry.ris_elements() ||
      i.group_size != c.group_size)
    throw FormatError("dataset '" + path + "' has M=" + std::to_string(i.antennas) +
                      " N=" + std::to_string(i.elements) + " K=" + std::to_string(i.group_size) +
                      ", which does not match the configuration");
  return std::move(ds.samples);
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!detail::trim(item).empty()) out.push_back(detail::parse_number<double>("--values", detail::trim(item)));
  if (out.empty()) throw UsageError("--values is empty");
  return out;
}

std::vector<Scheme> parse_schemes(const std::string& s) {
  std::vector<Scheme> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!detail::trim(item).empty()) out.push_back(parse_scheme(detail::trim(item)));
  return out;
}

void print_record(std::ostream& out, const LossRecord& r) {
  out << "  iter " << std::setw(7) << r.iter << "  lr " << std::setprecision(3) << r.lr
      << "  loss_I " << r.loss_i << "  loss_C " << r.loss_c << "  val " << std::fixed
      << std::setprecision(3) << r.val_nmse_db << " dB" << std::defaultfloat << '\n'
      << std::flush;
}

int cmd_generate(const CommonFlags& f, std::ostream& out) {
  if (f.dataset.empty()) throw UsageError("generate: --dataset output path is required");
  const auto c = resolve(f);
  c.validate();
  auto ds = make_dataset_file(c, generate_samples(c));
  write_dataset(f.dataset, ds);
  out << "wrote " << ds.samples.size() << " samples (M=" << ds.info.antennas
      << " N=" << ds.info.elements << " K=" << ds.info.group_size << " T=" << ds.info.pilot_length
      << " snr_db=" << ds.info.snr_db << ") to " << f.dataset << '\n';
  return kOk;
}

int cmd_train(const CommonFlags& f, bool quiet, std::ostream& out) {
  const auto c = resolve(f);
  c.validate();
  const PreparedData data = f.dataset.empty()
                                ? prepare(c)
                                : prepare(load_samples(f.dataset, c), c.train_ratio, c.split_seed);
  RunOptions opt;
  opt.out_dir = f.out_dir;
  if (!quiet) opt.on_record = [&out](const LossRecord& r) { print_record(out, r); };
  const auto r = run_experiment(c, data, opt);
  out << kResultHeader << '\n' << format_result(r) << '\n';
  return kOk;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, std::ostream& out) {
  if (f.dataset.empty()) throw UsageError("eval: --dataset is required");
  ExperimentConfig c = resolve(f);
  std::optional<nn::Checkpoint<float>> ckpt;
  if (!checkpoint.empty()) {
    if (!std::filesystem::exists(checkpoint))
      throw UsageError("checkpoint '" + checkpoint + "' does not exist");
    ckpt = nn::read_checkpoint<float>(checkpoint);
    const auto it = ckpt->meta.find("config");
    if (it == ckpt->meta.end()) throw FormatError("checkpoint has no stored configuration");
    c = parse_config(it->second);
  } else if (c.scheme != Scheme::ls) {
    throw UsageError("eval: --checkpoint is required for trained schemes");
  }
  const PreparedData data = prepare(load_samples(f.dataset, c), c.train_ratio, c.split_seed);
  const double ls = evaluate_ls_nmse(data.val, c.group_size, data.scale, c.train.eval_batch);
  out << "split,count,scheme,nmse_db\n";
  out << "val," << data.val.count << ",LS," << std::setprecision(17) << to_db(ls) << '\n';
  if (ckpt) {
    JointModel<float> model(c.model_config(), c.train.seed);
    model.load(ckpt->store);
    const double v = evaluate_nmse(model, data.val, data.scale, c.train.eval_batch);
    out << "val," << data.val.count << ',' << scheme_name(c.scheme) << ',' << to_db(v) << '\n';
  }
  return kOk;
}

int cmd_sweep(const CommonFlags& f, const std::string& axis, const std::string& values,
              const std::string& schemes, bool quiet, std::ostream& out) {
  if (axis.empty() || values.empty()) throw UsageError("sweep: --axis and --values are required");
  const auto c = resolve(f);
  RunOptions opt;
  opt.out_dir = f.out_dir;
  if (!quiet) opt.on_record = [&out](const LossRecord& r) { print_record(out, r); };
  const auto rows = run_sweep(parse_axis(axis), parse_values(values), c, parse_schemes(schemes), opt);
  std::filesystem::create_directories(f.out_dir);
  const auto path = (std::filesystem::path(f.out_dir) / "sweep.csv").string();
  write_results_csv(path, rows);
  out << kResultHeader << '\n';
  for (const auto& r : rows) out << format_result(r) << '\n';
  out << "wrote " << path << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  const auto report = [&](const std::string& what, const nn::GradCheckReport& r, double value,
                          const char* metric) {
    const bool pass = value < 1e-3;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << what << ": " << metric << ' ' << std::setprecision(3)
        << value << " over " << r.checked << " entries (worst " << r.worst_label << ")\n";
  };
  const auto ops = summarize(check_ops<float>(seed, 1e-2));
  report("ops float32", ops, ops.max_rel_error, "max rel error");
  const auto blocks = summarize(check_blocks<float>(seed, 1e-3));
  report("blocks float32", blocks, blocks.max_norm_error(), "max-norm rel error");
  const auto joint = summarize(check_joint_loss<float>(micro_model_config(), seed, 1e-3));
  report("joint loss float32", joint, joint.max_norm_error(), "max-norm rel error");
  const auto jd = summarize(check_joint_loss<double>(micro_model_config(), seed, 1e-5));
  report("joint loss float64", jd, jd.max_rel_error, "max rel error");
  return ok ? kOk : kFailure;
}

int cmd_selftest(std::uint64_t seed, std::size_t instances, std::ostream& out) {
  const auto r = run_identity_suite(instances, seed);
  out << std::setprecision(3) << "instances            " << r.instances << '\n'
      << "X~ X~^H = I          " << r.pilot_orthonormality << '\n'
      << "X X~^H = I (x) 1_K   " << r.pilot_cross << '\n'
      << "A = A-bar + V        " << (r.decomposition_exact ? "exact" : "NOT exact")
      << " (integer A), " << r.decomposition_rel << " (Gaussian A)\n"
      << "V leader columns     " << (r.leader_columns_zero ? "zero" : "NOT zero") << '\n'
      << "A~ reconstruction    " << r.reconstruction_rel << '\n'
      << "LS = group mean      " << r.ls_group_mean_rel << '\n';
  const bool ok = r.pass();
  out << (ok ? "selftest passed\n" : "selftest FAILED\n");
  return ok ? kOk : kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grouped-pilot RIS channel estimation: data generation, training and evaluation"};
  app.require_subcommand(1);
  CommonFlags f;
  bool quiet = false;

  auto* gen = app.add_subcommand("generate", "write a dataset file");
  add_common(gen, f);
  gen->add_option("--dataset", f.dataset, "output dataset path")->required();

  auto* train = app.add_subcommand("train", "train one scheme and report validation NMSE");
  add_common(train, f);
  train->add_option("--dataset", f.dataset, "dataset file (generated from the config if absent)");
  train->add_flag("--quiet", quiet, "do not print validation records");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and the LS baseline on a dataset");
  add_common(eval, f);
  eval->add_option("--dataset", f.dataset, "dataset file");
  eval->add_option("--checkpoint", checkpoint, "checkpoint written by train");

  std::string axis, values, schemes = "LS,CENet,IENet+CENet,IENet+CENet-no-dense";
  auto* sweep = app.add_subcommand("sweep", "sweep K, SNR or iterations over schemes");
  add_common(sweep, f);
  sweep->add_option("--axis", axis, "k, snr or iters");
  sweep->add_option("--values", values, "comma-separated values");
  sweep->add_option("--schemes", schemes, "comma-separated schemes");
  sweep->add_flag("--quiet", quiet, "do not print validation records");

  std::uint64_t check_seed = 1;
  std::size_t instances = 200;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--seed", check_seed, "seed for the random checks");
  auto* st = app.add_subcommand("selftest", "closed-form identity suite");
  st->add_option("--seed", check_seed, "seed for the random instances");
  st->add_option("--instances", instances, "number of random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(f, out);
    if (*train) return cmd_train(f, quiet, out);
    if (*eval) return cmd_eval(f, checkpoint, out);
    if (*sweep) return cmd_sweep(f, axis, values, schemes, quiet, out);
    if (*gc) return cmd_gradcheck(check_seed, out);
    if (*st) return cmd_selftest(check_seed, instances, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::usage:
      case ErrorKind::invalid_argument:
      case ErrorKind::insufficient_pilot_length:
      case ErrorKind::io: return kUsage;
      case ErrorKind::format:
      case ErrorKind::truncation: return kDataFormat;
      case ErrorKind::divergence: return kDivergence;
    }
    return kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace risce::cli
