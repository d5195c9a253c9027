// szeeg: command-line front end for the EEG classification pipeline.
// Subcommands: ingest, train, evaluate, ablate, psd, gradcheck.
// Exit codes: 0 success, 1 computation failure (training divergence),
// 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "szeeg/dsp.hpp"
#include "szeeg/error.hpp"
#include "szeeg/eval.hpp"
#include "szeeg/ingest.hpp"
#include "szeeg/models.hpp"
#include "szeeg/nn.hpp"
#include "szeeg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace szeeg;

namespace {

fs::path resolve_out(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("SZEEG_OUT_ROOT")) return fs::path(root) / p;
  return p;
}

struct IngestOpts {
  bool synthetic = false;
  std::string dir;
  int dataset = 1;
  int subjects = 20;
  int channels = 4;
  int samples = 1024;
  double fs = 250.0;
  double window_s = -1.0;  // <0: pick a dataset-appropriate default
  double overlap = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainCommon {
  std::string data;
  std::string model = "szhnn";
  std::string band = "none";
  std::string electrodes;
  std::string electrode_config;
  bool no_zscore = false;
  int epochs = 100;
  int batch = 32;
  double lr = 1e-4;
  double decay = 1e-4;
  double svm_c = 1.0;
  int svm_epochs = 100;
  eval::GridRow grid;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainOpts : TrainCommon {
  double val_fraction = 0.0;
};

struct EvaluateOpts : TrainCommon {
  int folds = 10;
  bool subject_aware = false;
  int jobs = 1;
};

struct AblateOpts {
  std::string data;
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

struct PsdOpts {
  std::string data;
  std::string out;
  int nfft = 256;
  double overlap = 0.5;
  std::string window = "hann";
  double lo = 4.0;
  double hi = 45.0;
};

struct GradcheckOpts {
  double eps = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 7;
};

void add_train_common(CLI::App* cmd, TrainCommon& o, bool data_required = true) {
  auto* data = cmd->add_option("--data", o.data, "segment store directory");
  if (data_required) data->required();
  cmd->add_option("--model", o.model, "szhnn | cnn | lstm | svm")
      ->check(CLI::IsMember({"szhnn", "cnn", "lstm", "svm"}));
  cmd->add_option("--band", o.band, "frequency band restriction")
      ->check(CLI::IsMember({"none", "theta", "alpha", "beta", "gamma", "all"}));
  cmd->add_option("--electrodes", o.electrodes, "named 5-electrode set");
  cmd->add_option("--electrode-config", o.electrode_config,
                  "JSON file defining electrode sets");
  cmd->add_flag("--no-zscore", o.no_zscore, "skip per-segment z-score");
  cmd->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--decay", o.decay, "learning-rate decay");
  cmd->add_option("--svm-c", o.svm_c, "SVM soft-margin C");
  cmd->add_option("--svm-epochs", o.svm_epochs, "SVM training epochs");
  cmd->add_option("--filters1", o.grid.filters1, "SzHNN conv-1 filter count");
  cmd->add_option("--kernel1", o.grid.kernel1, "SzHNN conv-1 kernel length");
  cmd->add_option("--filters2", o.grid.filters2, "SzHNN conv-2 filter count");
  cmd->add_option("--kernel2", o.grid.kernel2, "SzHNN conv-2 kernel length");
  cmd->add_option("--lstm-units", o.grid.lstm_units, "SzHNN LSTM width");
  cmd->add_option("--seed", o.seed, "RNG seed")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
}

std::optional<eval::ElectrodeSet> pick_electrodes(const std::string& name,
                                                  const std::string& config_path) {
  if (name.empty()) return std::nullopt;
  auto sets = config_path.empty() ? eval::default_electrode_sets()
                                  : eval::load_electrode_sets(config_path);
  const auto it = sets.find(name);
  if (it == sets.end())
    throw ParamError(fmt::format("unknown electrode set '{}'", name));
  return it->second;
}

void write_train_log(const fs::path& path, const models::TrainRun& run) {
  std::ofstream log(path);
  log << "epoch,train_loss,train_acc";
  if (!run.val_acc_curve.empty()) log << ",val_acc";
  log << '\n';
  for (std::size_t e = 0; e < run.loss_curve.size(); ++e) {
    log << e + 1 << ',' << fmt::format("{}", run.loss_curve[e]) << ','
        << fmt::format("{}", run.train_acc_curve[e]);
    if (!run.val_acc_curve.empty())
      log << ',' << fmt::format("{}", run.val_acc_curve[e]);
    log << '\n';
  }
}

void write_condition_files(const fs::path& dir, const eval::EvalReport& report) {
  fs::create_directories(dir);
  json j{{"model", report.model_kind},
         {"variant", report.variant},
         {"band", report.band},
         {"electrodes", report.electrode_set},
         {"dataset", report.dataset_id},
         {"folds", report.folds},
         {"subject_aware", report.subject_aware},
         {"seed", report.seed},
         {"mean_accuracy", report.mean_accuracy},
         {"fold_accuracies", report.fold_accuracies}};
  std::ofstream(dir / "report.json") << j.dump(2) << '\n';

  std::ofstream log(dir / "log.csv");
  log << "fold,epoch,train_loss,train_acc\n";
  for (std::size_t f = 0; f < report.fold_loss.size(); ++f)
    for (std::size_t e = 0; e < report.fold_loss[f].size(); ++e)
      log << f << ',' << e + 1 << ',' << fmt::format("{}", report.fold_loss[f][e])
          << ',' << fmt::format("{}", report.fold_train_acc[f][e]) << '\n';
}

int cmd_ingest(const IngestOpts& o) {
  ingest::DatasetManifest manifest;
  if (o.synthetic) {
    const double window =
        o.window_s > 0 ? o.window_s : static_cast<double>(o.samples) / o.fs;
    const auto recordings =
        ingest::synth_generate(o.subjects, o.channels, o.samples, o.fs, o.seed);
    manifest.dataset_id = 0;
    manifest.channel_names = recordings.front().channel_names;
    bool truncated = false;
    for (const ingest::Recording& rec : recordings) {
      bool too_long = false;
      for (ingest::Segment& seg : ingest::segment_recording(rec, window, o.overlap, &too_long))
        manifest.segments.push_back(std::move(seg));
      truncated |= too_long;
    }
    if (truncated)
      std::cerr << "warning: window longer than some recordings; they were skipped\n";
  } else {
    if (o.dir.empty())
      throw ParamError("ingest: pass --synthetic or --dir <dataset directory>");
    const double window = o.window_s > 0 ? o.window_s : (o.dataset == 2 ? 60.0 : 25.0);
    manifest = ingest::ingest_dataset_dir(o.dir, window, o.overlap);
    manifest.dataset_id = o.dataset;
  }
  if (manifest.segments.empty()) throw ParamError("ingest: no segments produced");

  const fs::path out = resolve_out(o.out);
  ingest::save_manifest(manifest, out);
  std::cout << fmt::format("wrote {} segments ({} x {}) to {}\n",
                           manifest.segments.size(),
                           manifest.segments.front().data.rows(),
                           manifest.segments.front().data.cols(), out.string());
  return 0;
}

int cmd_train(const TrainOpts& o) {
  ingest::DatasetManifest data = ingest::load_manifest(o.data);
  if (auto set = pick_electrodes(o.electrodes, o.electrode_config)) {
    eval::validate_electrode_set(*set, data.channel_names);
    data = ingest::select_channels(data, set->channels);
  }
  if (o.band != "none") {
    const dsp::BandDef band = dsp::band_by_name(o.band);
    for (ingest::Segment& seg : data.segments)
      seg = std::move(dsp::band_decompose(seg, {band}).at(band.name));
    data.band = o.band;
  }
  if (!o.no_zscore)
    for (ingest::Segment& seg : data.segments) seg = dsp::zscore(seg);

  const fs::path out = resolve_out(o.out);
  fs::create_directories(out);

  std::vector<const ingest::Segment*> train_set, val_set;
  if (o.val_fraction > 0.0) {
    if (o.val_fraction >= 1.0) throw ParamError("train: --val-fraction must be < 1");
    // stratified seeded holdout
    Rng rng = Rng(o.seed).fork(99);
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<const ingest::Segment*> group;
      for (const ingest::Segment& seg : data.segments)
        if (seg.label == cls) group.push_back(&seg);
      rng.shuffle(group);
      const std::size_t n_val =
          static_cast<std::size_t>(o.val_fraction * static_cast<double>(group.size()));
      for (std::size_t i = 0; i < group.size(); ++i)
        (i < n_val ? val_set : train_set).push_back(group[i]);
    }
  } else {
    for (const ingest::Segment& seg : data.segments) train_set.push_back(&seg);
  }

  if (o.model == "svm") {
    dsp::WelchOptions welch;
    if (o.band != "none") {
      // keep the features inside the band; see eval::run_condition
      const dsp::BandDef band = dsp::band_by_name(o.band);
      welch.mask_lo_hz = std::max(welch.mask_lo_hz, band.lo_hz);
      welch.mask_hi_hz = std::min(welch.mask_hi_hz, band.hi_hz);
    }
    std::vector<int> labels;
    const Matrix features = models::psd_feature_matrix(train_set, welch, &labels);
    const models::SvmModel svm =
        models::svm_train(features, labels, o.svm_c, o.svm_epochs, o.seed);
    json j{{"format", "szeeg-svm-v1"},
           {"C", svm.C},
           {"bias", svm.bias},
           {"weights", svm.weights},
           {"feature_mean", svm.feature_mean},
           {"feature_std", svm.feature_std}};
    std::ofstream(out / "svm.json") << j.dump(2) << '\n';
    const double train_acc = models::svm_accuracy(svm, features, labels);
    double val_acc = -1.0;
    if (!val_set.empty()) {
      std::vector<int> val_labels;
      const Matrix val_features =
          models::psd_feature_matrix(val_set, welch, &val_labels);
      val_acc = models::svm_accuracy(svm, val_features, val_labels);
    }
    std::cout << fmt::format("svm trained: train_acc={:.4f}", train_acc);
    if (val_acc >= 0) std::cout << fmt::format(" val_acc={:.4f}", val_acc);
    std::cout << '\n';
    return 0;
  }

  const ingest::Segment& first = *train_set.front();
  const nn::Shape shape{first.data.rows(), first.data.cols()};
  models::ModelConfig cfg =
      o.model == "szhnn"
          ? models::build_szhnn_variant(shape, o.grid.filters1, o.grid.kernel1,
                                        o.grid.filters2, o.grid.kernel2,
                                        o.grid.lstm_units)
          : models::config_for_kind(o.model, shape);
  models::TrainRun run;
  run.epochs = o.epochs;
  run.batch_size = o.batch;
  run.lr = o.lr;
  run.decay = o.decay;
  run.seed = o.seed;
  models::Model model = models::train_subset(cfg, train_set, run, val_set);
  model.save(out / "checkpoint.json");
  write_train_log(out / "log.csv", run);
  std::cout << fmt::format("{} trained {} epochs: final loss={:.6f} train_acc={:.4f}",
                           cfg.name, run.epochs, run.loss_curve.back(),
                           run.train_acc_curve.back());
  if (!run.val_acc_curve.empty())
    std::cout << fmt::format(" val_acc={:.4f}", run.val_acc_curve.back());
  std::cout << '\n';
  return 0;
}

int cmd_evaluate(const EvaluateOpts& o) {
  const ingest::DatasetManifest data = ingest::load_manifest(o.data);
  eval::ConditionSpec spec;
  spec.model_kind = o.model;
  spec.band = o.band;
  spec.electrodes = pick_electrodes(o.electrodes, o.electrode_config);
  spec.params.epochs = o.epochs;
  spec.params.batch_size = o.batch;
  spec.params.lr = o.lr;
  spec.params.decay = o.decay;
  spec.params.seed = o.seed;
  spec.grid = o.grid;
  spec.folds = o.folds;
  spec.subject_aware = o.subject_aware;
  spec.zscore = !o.no_zscore;
  spec.svm_c = o.svm_c;
  spec.svm_epochs = o.svm_epochs;
  spec.jobs = o.jobs;

  const eval::EvalReport report = eval::run_condition(spec, data);
  const fs::path out = resolve_out(o.out);
  write_condition_files(out / "conditions" / report.tag(), report);
  eval::emit_report({report}, out);
  std::cout << fmt::format("{}: mean accuracy {:.4f} over {} folds\n", report.tag(),
                           report.mean_accuracy, report.folds);
  return 0;
}

int cmd_ablate(const AblateOpts& o) {
  const ingest::DatasetManifest data = ingest::load_manifest(o.data);

  std::ifstream cfg_in(o.config);
  if (!cfg_in) throw ParamError("ablate: cannot open '" + o.config + "'");
  json cfg;
  try {
    cfg_in >> cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("ablate: bad config JSON: ") + e.what());
  }

  eval::ConditionSpec base;
  base.params.epochs = cfg.value("epochs", 100);
  base.params.batch_size = cfg.value("batch", 32);
  base.params.lr = cfg.value("lr", 1e-4);
  base.params.decay = cfg.value("decay", 1e-4);
  base.params.seed = o.seed;
  base.folds = cfg.value("folds", 10);
  base.subject_aware = cfg.value("subject_aware", false);
  base.zscore = cfg.value("zscore", true);
  base.svm_c = cfg.value("svm_c", 1.0);
  base.svm_epochs = cfg.value("svm_epochs", 100);
  base.jobs = o.jobs;

  const auto model_kinds = cfg.value("models", std::vector<std::string>{"szhnn"});
  const auto bands = cfg.value("bands", std::vector<std::string>{"none"});
  const auto set_names = cfg.value("electrode_sets", std::vector<std::string>{});
  auto sets = cfg.contains("electrode_config")
                  ? eval::load_electrode_sets(cfg.at("electrode_config").get<std::string>())
                  : eval::default_electrode_sets();

  const fs::path out = resolve_out(o.out);
  fs::create_directories(out);
  std::vector<eval::EvalReport> reports;
  // mean accuracy per (model, band) cell of the full-montage cross, for stats
  std::map<std::pair<std::string, std::string>, double> cross_acc;

  for (const std::string& kind : model_kinds) {
    for (const std::string& band : bands) {
      auto run_one = [&](std::optional<eval::ElectrodeSet> electrodes) {
        eval::ConditionSpec spec = base;
        spec.model_kind = kind;
        spec.band = band;
        spec.electrodes = std::move(electrodes);
        eval::EvalReport report = eval::run_condition(spec, data);
        write_condition_files(out / "conditions" / report.tag(), report);
        std::cout << fmt::format("{}: mean accuracy {:.4f}\n", report.tag(),
                                 report.mean_accuracy);
        if (report.electrode_set.empty())
          cross_acc[{kind, band}] = report.mean_accuracy;
        reports.push_back(std::move(report));
      };
      if (set_names.empty()) {
        run_one(std::nullopt);
      } else {
        for (const std::string& name : set_names) {
          const auto it = sets.find(name);
          if (it == sets.end())
            throw ParamError(fmt::format("ablate: unknown electrode set '{}'", name));
          run_one(it->second);
        }
      }
    }
  }

  if (cfg.contains("grid")) {
    std::vector<eval::GridRow> grid;
    for (const json& gj : cfg.at("grid")) {
      eval::GridRow row;
      row.filters1 = gj.value("filters1", 5);
      row.kernel1 = gj.value("kernel1", 15);
      row.filters2 = gj.value("filters2", 10);
      row.kernel2 = gj.value("kernel2", 10);
      row.lstm_units = gj.value("lstm_units", 32);
      grid.push_back(row);
    }
    std::vector<std::string> warnings;
    eval::ConditionSpec sweep_base = base;
    sweep_base.band = cfg.value("grid_band", std::string("none"));
    for (eval::EvalReport& report :
         eval::sweep_hyperparams(grid, sweep_base, data, &warnings)) {
      write_condition_files(out / "conditions" / report.tag(), report);
      std::cout << fmt::format("{}: mean accuracy {:.4f}\n", report.tag(),
                               report.mean_accuracy);
      reports.push_back(std::move(report));
    }
    for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
  }

  eval::emit_report(reports, out);

  // Statistics over the models x bands table of mean accuracies, when the
  // cross is large enough: two-factor ANOVA plus pairwise follow-up t-tests.
  if (model_kinds.size() >= 2 && bands.size() >= 2 && set_names.empty()) {
    Matrix table(model_kinds.size(), bands.size());
    for (std::size_t i = 0; i < model_kinds.size(); ++i)
      for (std::size_t j = 0; j < bands.size(); ++j)
        table.at(i, j) = cross_acc.at({model_kinds[i], bands[j]});

    json stats;
    const eval::AnovaResult anova = eval::anova_two_factor_no_replication(table);
    stats["anova"] = {{"f_rows", anova.f_rows},   {"f_cols", anova.f_cols},
                      {"p_rows", anova.p_rows},   {"p_cols", anova.p_cols},
                      {"ss_rows", anova.ss_rows}, {"ss_cols", anova.ss_cols},
                      {"ss_error", anova.ss_error}, {"ss_total", anova.ss_total}};
    stats["anova_rows"] = model_kinds;
    stats["anova_cols"] = bands;

    json tt = json::array();
    for (std::size_t i = 0; i < model_kinds.size(); ++i) {
      for (std::size_t j = i + 1; j < model_kinds.size(); ++j) {
        json entry{{"a", model_kinds[i]}, {"b", model_kinds[j]}};
        try {
          const auto res = eval::paired_t_test(table.row(i), table.row(j));
          entry["t"] = res.t;
          entry["p"] = res.p;
          entry["df"] = res.df;
        } catch (const ParamError& e) {
          entry["error"] = e.what();
        }
        tt.push_back(std::move(entry));
      }
    }
    stats["t_tests"] = std::move(tt);
    std::ofstream(out / "stats.json") << stats.dump(2) << '\n';
  }
  return 0;
}

int cmd_psd(const PsdOpts& o) {
  const ingest::DatasetManifest data = ingest::load_manifest(o.data);
  dsp::WelchOptions opt;
  opt.nfft = static_cast<std::size_t>(o.nfft);
  opt.overlap = o.overlap;
  if (o.window == "hann")
    opt.window = dsp::WindowKind::hann;
  else if (o.window == "rect")
    opt.window = dsp::WindowKind::rect;
  else
    throw ParamError(fmt::format("psd: unknown window '{}'", o.window));
  opt.mask_lo_hz = o.lo;
  opt.mask_hi_hz = o.hi;

  std::vector<dsp::PsdFeature> features;
  features.reserve(data.segments.size());
  for (const ingest::Segment& seg : data.segments)
    features.push_back(dsp::welch_psd(seg, opt));

  const fs::path out = resolve_out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out);
  if (!csv) throw ParamError("psd: cannot write '" + out.string() + "'");
  dsp::write_psd_csv(csv, features, data.channel_names);
  std::cout << fmt::format("wrote {} feature rows to {}\n", features.size(),
                           out.string());
  return 0;
}

int cmd_gradcheck(const GradcheckOpts& o) {
  Rng root(o.seed);
  struct Case {
    std::string name;
    nn::Sequential net;
    nn::Tensor input;
  };
  std::vector<Case> cases;

  {
    Case c{.name = "dense-only", .net = nn::Sequential(1), .input = {}};
    Rng rng = root.fork(1);
    c.net.add(std::make_unique<nn::Dense>(6, 8, nn::Activation::relu, rng));
    c.net.add(std::make_unique<nn::Dense>(8, 2, nn::Activation::none, rng));
    c.input = nn::Tensor::vec(6);
    for (double& v : c.input.values()) v = rng.normal();
    cases.push_back(std::move(c));
  }
  {
    Case c{.name = "conv-pool-dense", .net = nn::Sequential(2), .input = {}};
    Rng rng = root.fork(2);
    c.net.add(std::make_unique<nn::Conv1d>(2, 3, 5, nn::Activation::relu, rng));
    c.net.add(std::make_unique<nn::MaxPool1d>());
    c.net.add(std::make_unique<nn::Flatten>());
    c.net.add(std::make_unique<nn::Dense>(3 * 8, 2, nn::Activation::none, rng));
    c.input = nn::Tensor(2, 20);
    for (double& v : c.input.values()) v = rng.normal();
    cases.push_back(std::move(c));
  }
  {
    Case c{.name = "lstm-dense", .net = nn::Sequential(3), .input = {}};
    Rng rng = root.fork(3);
    c.net.add(std::make_unique<nn::Lstm>(3, 4, true, true, rng));
    c.net.add(std::make_unique<nn::Lstm>(4, 4, false, true, rng));
    c.net.add(std::make_unique<nn::Dense>(4, 2, nn::Activation::none, rng));
    c.input = nn::Tensor(3, 6);
    for (double& v : c.input.values()) v = rng.normal();
    cases.push_back(std::move(c));
  }
  {
    Case c{.name = "tiny-hybrid", .net = nn::Sequential(4), .input = {}};
    models::Model model = models::Model::build(models::build_szhnn({2, 40}), o.seed);
    Rng rng = root.fork(4);
    c.input = nn::Tensor(2, 40);
    for (double& v : c.input.values()) v = rng.normal();
    c.net = std::move(model.net());
    cases.push_back(std::move(c));
  }

  bool ok = true;
  for (Case& c : cases) {
    const double err = nn::gradcheck(c.net, c.input, 1, o.eps);
    const bool pass = err < o.threshold;
    ok = ok && pass;
    std::cout << fmt::format("{:16s} max relative error {:.3e} {}\n", c.name, err,
                             pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG schizophrenia-detection pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags override");

  IngestOpts ingest_opts;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a segment store");
  ingest_cmd->add_flag("--synthetic", ingest_opts.synthetic, "generate synthetic EEG");
  ingest_cmd->add_option("--dir", ingest_opts.dir, "dataset directory with index.json");
  ingest_cmd->add_option("--dataset", ingest_opts.dataset, "dataset id (1=EDF, 2=text)")
      ->check(CLI::IsMember({1, 2}));
  ingest_cmd->add_option("--subjects", ingest_opts.subjects, "subjects per class")
      ->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--channels", ingest_opts.channels, "synthetic channel count")
      ->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--samples", ingest_opts.samples, "samples per recording")
      ->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--fs", ingest_opts.fs, "sampling rate Hz")
      ->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--window", ingest_opts.window_s, "segment window seconds");
  ingest_cmd->add_option("--overlap", ingest_opts.overlap, "window overlap [0,1)");
  ingest_cmd->add_option("--seed", ingest_opts.seed, "RNG seed")->required();
  ingest_cmd->add_option("--out", ingest_opts.out, "output directory")->required();

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  add_train_common(train_cmd, train_opts);
  train_cmd->add_option("--val-fraction", train_opts.val_fraction,
                        "stratified holdout fraction");

  EvaluateOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("evaluate", "k-fold cross-validation");
  add_train_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--folds", eval_opts.folds, "fold count")
      ->check(CLI::Range(2, 1000));
  eval_cmd->add_flag("--subject-aware", eval_opts.subject_aware,
                     "keep each subject in one fold");
  eval_cmd->add_option("--jobs", eval_opts.jobs, "parallel fold workers")
      ->check(CLI::PositiveNumber);

  AblateOpts ablate_opts;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ablate_cmd->add_option("--data", ablate_opts.data, "segment store directory")
      ->required();
  ablate_cmd->add_option("--grid-config", ablate_opts.config, "ablation JSON config")
      ->required();
  ablate_cmd->add_option("--seed", ablate_opts.seed, "RNG seed")->required();
  ablate_cmd->add_option("--jobs", ablate_opts.jobs, "parallel fold workers")
      ->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--out", ablate_opts.out, "output directory")->required();

  PsdOpts psd_opts;
  auto* psd_cmd = app.add_subcommand("psd", "dump Welch log-PSD features");
  psd_cmd->add_option("--data", psd_opts.data, "segment store directory")->required();
  psd_cmd->add_option("--out", psd_opts.out, "output CSV path")->required();
  psd_cmd->add_option("--nfft", psd_opts.nfft, "FFT length")->check(CLI::PositiveNumber);
  psd_cmd->add_option("--overlap", psd_opts.overlap, "block overlap [0,1)");
  psd_cmd->add_option("--window", psd_opts.window, "hann | rect");
  psd_cmd->add_option("--lo", psd_opts.lo, "mask low edge Hz");
  psd_cmd->add_option("--hi", psd_opts.hi, "mask high edge Hz");

  GradcheckOpts gc_opts;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference backprop check");
  gc_cmd->add_option("--eps", gc_opts.eps, "finite-difference step");
  gc_cmd->add_option("--threshold", gc_opts.threshold, "max allowed relative error");
  gc_cmd->add_option("--seed", gc_opts.seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(ingest_cmd)) return cmd_ingest(ingest_opts);
    if (app.got_subcommand(train_cmd)) return cmd_train(train_opts);
    if (app.got_subcommand(eval_cmd)) return cmd_evaluate(eval_opts);
    if (app.got_subcommand(ablate_cmd)) return cmd_ablate(ablate_opts);
    if (app.got_subcommand(psd_cmd)) return cmd_psd(psd_opts);
    if (app.got_subcommand(gc_cmd)) return cmd_gradcheck(gc_opts);
  } catch (const TrainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
