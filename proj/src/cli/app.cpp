#include "seqpatch/cli/app.hpp"

#include "seqpatch/format.hpp"
#include "seqpatch/imaging/pgm.hpp"
#include "seqpatch/imaging/synthetic.hpp"
#include "seqpatch/oracle/oracle.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace seqpatch {

namespace fs = std::filesystem;

std::filesystem::path run_root() {
  const char* env = std::getenv("SEQPATCH_RUN_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::filesystem::path make_run_dir(const RunConfig& config) {
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config.hash()));
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &utc);
  const fs::path base = run_root() / (std::string(hash) + "-" + stamp);
  fs::path dir = base;
  for (int n = 2; fs::exists(dir); ++n) dir = base.string() + "-" + std::to_string(n);
  fs::create_directories(dir);
  return dir;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, const RunConfig& config) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("dataset directory '" + dir.string() + "' holds no .pgm images");
  std::vector<Sample> out;
  for (const auto& f : files) {
    Sample s;
    s.name = f.filename().string();
    s.hr = load_image(f);
    if (s.hr.rows() != config.geometry.image_h || s.hr.cols() != config.geometry.image_w)
      throw DimensionError("image '" + s.name + "' is " + extent_string(s.hr) + ", configured target is " +
                           std::to_string(config.geometry.image_h) + "x" + std::to_string(config.geometry.image_w));
    s.lr = degrade(s.hr, config.factor);
    out.push_back(std::move(s));
  }
  return out;
}

void attach_config(Checkpoint& ckpt, const RunConfig& config) {
  for (const auto& key : RunConfig::keys()) ckpt.set_meta("config." + key, config.get(key));
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig c = RunConfig::preset("desk");
  bool found = false;
  for (const auto& [key, value] : ckpt.metadata()) {
    if (!key.starts_with("config.")) continue;
    c.set(key.substr(7), value);
    found = true;
  }
  if (!found) throw CheckpointError("checkpoint carries no run configuration");
  c.validate();
  return c;
}

void write_metrics_header(std::ostream& out) {
  out << "epoch,mean_reward,baseline_b,val_psnr,val_ssim,coverage_mean\n";
}

void write_metrics_row(std::ostream& out, const EpochStats& s) {
  out << s.epoch << ',' << format_double(s.mean_reward) << ',' << format_double(s.baseline) << ','
      << format_double(s.val_psnr) << ',' << format_double(s.val_ssim) << ',' << format_double(s.coverage_mean)
      << '\n';
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "image,psnr,ssim,bicubic_psnr,bicubic_ssim,reference_psnr,coverage,reward\n";
  EvalRow mean;
  auto line = [&](const std::string& name, const EvalRow& r) {
    out << name << ',' << format_double(r.psnr) << ',' << format_double(r.ssim) << ','
        << format_double(r.bicubic_psnr) << ',' << format_double(r.bicubic_ssim) << ','
        << format_double(r.reference_psnr) << ',' << format_double(r.coverage) << ',' << format_double(r.reward)
        << '\n';
  };
  for (const auto& r : rows) {
    line(r.name, r);
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    mean.bicubic_psnr += r.bicubic_psnr;
    mean.bicubic_ssim += r.bicubic_ssim;
    mean.reference_psnr += r.reference_psnr;
    mean.coverage += r.coverage;
    mean.reward += r.reward;
  }
  const double n = static_cast<double>(rows.size());
  mean.psnr /= n;
  mean.ssim /= n;
  mean.bicubic_psnr /= n;
  mean.bicubic_ssim /= n;
  mean.reference_psnr /= n;
  mean.coverage /= n;
  mean.reward /= n;
  line("mean", mean);
}

void write_ablation_csv(std::ostream& out, const std::vector<std::string>& kinds, const std::vector<AblationRow>& rows) {
  out << "image,learned";
  for (const auto& k : kinds) out << ',' << k;
  out << ",bicubic\n";
  AblationRow mean;
  mean.baselines.assign(kinds.size(), 0.0);
  for (const auto& r : rows) {
    out << r.name << ',' << format_double(r.learned);
    for (double v : r.baselines) out << ',' << format_double(v);
    out << ',' << format_double(r.bicubic) << '\n';
    mean.learned += r.learned;
    for (std::size_t k = 0; k < kinds.size(); ++k) mean.baselines[k] += r.baselines[k];
    mean.bicubic += r.bicubic;
  }
  const double n = static_cast<double>(rows.size());
  out << "mean," << format_double(mean.learned / n);
  for (double v : mean.baselines) out << ',' << format_double(v / n);
  out << ',' << format_double(mean.bicubic / n) << '\n';
}

namespace {

struct CommonFlags {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  long workers = 1;
};

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig c = RunConfig::preset(f.preset);
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ConfigError("cannot read config file '" + f.config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    c = parse_config_text(ss.str(), c);
  }
  if (f.seed) c.train.seed = *f.seed;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void save_checkpoint(const Checkpoint& base, const RunConfig& config, const fs::path& path) {
  Checkpoint c = base;
  attach_config(c, config);
  c.save(path);
}

template <typename Scalar>
int train(const RunConfig& config, long workers, const std::string& resume, std::ostream& out) {
  const fs::path dir = make_run_dir(config);
  write_text(dir / "config.txt", config.canonical());
  out << "run directory: " << dir.string() << '\n' << config.canonical();

  std::vector<Sample> train_set = load_dataset(config.train_dir, config);
  std::vector<Sample> val_set;
  if (!config.val_dir.empty()) {
    val_set = load_dataset(config.val_dir, config);
  } else {
    const auto held = static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(train_set.size())));
    if (held >= train_set.size()) throw ConfigError("val_fraction leaves no training images");
    val_set.assign(train_set.end() - static_cast<std::ptrdiff_t>(held), train_set.end());
    train_set.resize(train_set.size() - held);
  }

  TrainConfig tc = config.train;
  tc.workers = workers;
  Trainer<Scalar> trainer(config.geometry, tc);
  if (!resume.empty()) {
    const Checkpoint ck = Checkpoint::load(resume);
    if (config_from_checkpoint(ck).canonical() != config.canonical())
      throw ConfigError("checkpoint '" + resume + "' was written with a different configuration");
    trainer.load_state(ck);
  }
  fs::create_directories(dir / "checkpoints");
  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  write_metrics_header(metrics);
  while (trainer.epochs_done() < config.train.epochs) {
    const EpochStats s = trainer.train_epoch(train_set, val_set);
    write_metrics_row(metrics, s);
    metrics.flush();
    out << "epoch " << s.epoch << " reward " << format_double(s.mean_reward) << " val_psnr "
        << format_double(s.val_psnr) << '\n';
    if (s.epoch % config.checkpoint_every == 0 || s.epoch == config.train.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04ld.ckpt", s.epoch);
      save_checkpoint(trainer.save_state(), config, dir / "checkpoints" / name);
    }
  }
  save_checkpoint(trainer.save_state(), config, dir / "final.ckpt");
  out << "checkpoint: " << (dir / "final.ckpt").string() << '\n';
  return 0;
}

template <typename Scalar>
std::unique_ptr<Trainer<Scalar>> restore_trainer(const Checkpoint& ck, const RunConfig& config, long workers) {
  TrainConfig tc = config.train;
  tc.workers = workers;
  auto t = std::make_unique<Trainer<Scalar>>(config.geometry, tc);
  t->load_state(ck);
  return t;
}

template <typename Scalar>
int hallucinate(const Checkpoint& ck, const RunConfig& config, const std::string& input, const std::string& output,
                const std::string& truth_path, bool dump, std::ostream& out) {
  const auto trainer = restore_trainer<Scalar>(ck, config, 1);
  const PolicyGeometry& g = config.geometry;
  const ImagePlane lr = load_image(input);
  if (lr.rows() * config.factor != g.image_h || lr.cols() * config.factor != g.image_w)
    throw DimensionError("input '" + input + "' is " + extent_string(lr) + "; a x" + std::to_string(config.factor) +
                         " upscale to the configured " + std::to_string(g.image_h) + "x" +
                         std::to_string(g.image_w) + " target needs " + std::to_string(g.image_h / config.factor) +
                         "x" + std::to_string(g.image_w / config.factor));
  std::optional<ImagePlane> truth;
  if (!truth_path.empty()) {
    truth = load_image(truth_path);
    if (truth->rows() != g.image_h || truth->cols() != g.image_w)
      throw DimensionError("truth '" + truth_path + "' is " + extent_string(*truth) + ", target is " +
                           std::to_string(g.image_h) + "x" + std::to_string(g.image_w));
  }
  const LearnedEnhancer<Scalar> enh(trainer->enhancer);
  const EpisodeSetup<Scalar> setup{trainer->policy, enh, ActionSource::greedy, config.train.steps};
  const ImagePlane ref = trainer->reference().restore(lr, g.image_h, g.image_w);
  EpisodeTrajectory traj =
      run_episode(setup, lr, truth ? &*truth : nullptr, config.train.seed, truth ? &ref : nullptr,
                  config.train.coverage_weight);
  const fs::path dir = make_run_dir(config);
  const fs::path image_path = dir / fs::path(output).filename();
  save_image(traj.final_image, image_path);
  out << "restored image: " << image_path.string() << '\n';
  if (dump) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::ofstream csv(dir / "trajectory.csv", std::ios::binary);
    write_trajectory_csv(csv, traj, traj.reward.value_or(nan), truth ? psnr(traj.final_image, *truth) : nan,
                         truth ? ssim(traj.final_image, *truth) : nan);
    out << "trajectory: " << (dir / "trajectory.csv").string() << '\n';
  }
  return 0;
}

template <typename Scalar>
int evaluate(const Checkpoint& ck, const RunConfig& config, const std::string& data_dir, long workers,
             std::ostream& out) {
  const auto trainer = restore_trainer<Scalar>(ck, config, workers);
  const auto data = load_dataset(data_dir, config);
  const auto rows = trainer->evaluate(data, ActionSource::greedy, config.train.seed);
  const fs::path dir = make_run_dir(config);
  std::ofstream csv(dir / "eval.csv", std::ios::binary);
  write_eval_csv(csv, rows);
  double p = 0, b = 0;
  for (const auto& r : rows) {
    p += r.psnr;
    b += r.bicubic_psnr;
  }
  out << "eval: " << (dir / "eval.csv").string() << "\nmean psnr " << format_double(p / static_cast<double>(rows.size()))
      << " bicubic " << format_double(b / static_cast<double>(rows.size())) << '\n';
  return 0;
}

template <typename Scalar>
int ablate(const Checkpoint& ck, const RunConfig& config, const std::string& data_dir,
           const std::vector<std::string>& kinds, long workers, std::ostream& out) {
  const auto trainer = restore_trainer<Scalar>(ck, config, workers);
  const auto data = load_dataset(data_dir, config);
  const auto learned = trainer->evaluate(data, ActionSource::greedy, config.train.seed);
  std::vector<AblationRow> rows(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    rows[i].name = learned[i].name;
    rows[i].learned = learned[i].psnr;
    rows[i].bicubic = learned[i].bicubic_psnr;
  }
  for (const auto& kind : kinds) {
    const auto res = trainer->evaluate(data, parse_action_source(kind), config.train.seed);
    for (std::size_t i = 0; i < data.size(); ++i) rows[i].baselines.push_back(res[i].psnr);
  }
  const fs::path dir = make_run_dir(config);
  std::ofstream csv(dir / "ablate.csv", std::ios::binary);
  write_ablation_csv(csv, kinds, rows);
  out << "ablation: " << (dir / "ablate.csv").string() << '\n';
  return 0;
}

template <typename Fn>
int dispatch(const RunConfig& config, Fn&& fn) {
  return config.precision == "f64" ? fn(double{}) : fn(float{});
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential patch attention for image super-resolution"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "key = value config file");
    sub->add_option("--preset", flags.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", flags.seed, "overrides the config seed");
    sub->add_option("--workers", flags.workers, "concurrent episodes; 1 is bitwise deterministic")
        ->check(CLI::PositiveNumber);
  };

  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "train policy and enhancer jointly");
  common(train_cmd);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint of the same configuration");

  std::string checkpoint, input, output = "restored.pgm", truth;
  bool dump = false;
  auto* hall_cmd = app.add_subcommand("hallucinate", "restore one LR image with the greedy policy");
  hall_cmd->add_option("checkpoint", checkpoint)->required();
  hall_cmd->add_option("input", input, "LR PGM")->required();
  hall_cmd->add_option("output", output, "file name inside the run directory");
  hall_cmd->add_option("--truth", truth, "HR PGM for reward and metrics");
  hall_cmd->add_flag("--dump-trajectory", dump, "write trajectory.csv");
  hall_cmd->add_option("--workers", flags.workers)->check(CLI::PositiveNumber);

  std::string data_dir;
  auto* eval_cmd = app.add_subcommand("eval", "per-image PSNR/SSIM of greedy episodes");
  eval_cmd->add_option("checkpoint", checkpoint)->required();
  eval_cmd->add_option("dataset", data_dir, "directory of HR PGMs")->required();
  eval_cmd->add_option("--workers", flags.workers)->check(CLI::PositiveNumber);

  std::string kind = "all";
  auto* ablate_cmd = app.add_subcommand("ablate", "learned policy against baseline policies");
  ablate_cmd->add_option("checkpoint", checkpoint)->required();
  ablate_cmd->add_option("dataset", data_dir)->required();
  ablate_cmd->add_option("--kind", kind, "random, raster, fixed_box or all")
      ->check(CLI::IsMember({"random", "raster", "fixed_box", "all"}));
  ablate_cmd->add_option("--workers", flags.workers)->check(CLI::PositiveNumber);

  std::size_t mc_episodes = 200000;
  auto* verify_cmd = app.add_subcommand("verify", "gradient, adjoint and enumeration oracle checks");
  verify_cmd->add_option("--seed", flags.seed);
  verify_cmd->add_option("--mc-episodes", mc_episodes)->check(CLI::PositiveNumber);

  std::size_t synth_count = 40;
  auto* synth_cmd = app.add_subcommand("synth", "write procedural test images");
  common(synth_cmd);
  synth_cmd->add_option("count", synth_count)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (train_cmd->parsed()) {
      const RunConfig config = resolve_config(flags);
      return dispatch(config, [&](auto s) { return train<decltype(s)>(config, flags.workers, resume, out); });
    }
    if (hall_cmd->parsed() || eval_cmd->parsed() || ablate_cmd->parsed()) {
      const Checkpoint ck = Checkpoint::load(checkpoint);
      const RunConfig config = config_from_checkpoint(ck);
      if (hall_cmd->parsed())
        return dispatch(config, [&](auto s) {
          return hallucinate<decltype(s)>(ck, config, input, output, truth, dump, out);
        });
      if (eval_cmd->parsed())
        return dispatch(config, [&](auto s) { return evaluate<decltype(s)>(ck, config, data_dir, flags.workers, out); });
      const std::vector<std::string> kinds =
          kind == "all" ? std::vector<std::string>{"random", "raster", "fixed_box"} : std::vector<std::string>{kind};
      return dispatch(config, [&](auto s) { return ablate<decltype(s)>(ck, config, data_dir, kinds, flags.workers, out); });
    }
    if (verify_cmd->parsed()) {
      RunConfig config = RunConfig::preset("desk");
      if (flags.seed) config.train.seed = *flags.seed;
      VerifyOptions opt;
      opt.seed = config.train.seed;
      opt.mc_episodes = mc_episodes;
      const auto checks = run_verification(opt, [&](const VerifyCheck& c) {
        out << (c.expected_failure ? (c.passed ? "UNEXPECTED-PASS " : "expected-fail ") : (c.passed ? "pass " : "FAIL "))
            << c.name << " measured " << format_double(c.measured) << " threshold " << format_double(c.threshold)
            << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
      });
      const fs::path dir = make_run_dir(config);
      std::ofstream csv(dir / "verify.csv", std::ios::binary);
      write_verify_report(csv, checks);
      const bool ok = verification_passed(checks);
      out << (ok ? "verification passed" : "verification FAILED") << "; report: " << (dir / "verify.csv").string()
          << '\n';
      return ok ? 0 : 1;
    }
    if (synth_cmd->parsed()) {
      const RunConfig config = resolve_config(flags);
      const fs::path dir = make_run_dir(config) / "images";
      fs::create_directories(dir);
      for (std::size_t i = 0; i < synth_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%04zu.pgm", i);
        save_image(synthetic_texture(derive_seed(config.train.seed, 0x5E7, i), config.geometry.image_h,
                                     config.geometry.image_w),
                   dir / name);
      }
      out << "images: " << dir.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace seqpatch
