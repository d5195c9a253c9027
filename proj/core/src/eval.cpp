#include "szeeg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "szeeg/dsp.hpp"
#include "szeeg/error.hpp"
#include "szeeg/rng.hpp"
#include "szeeg/stats.hpp"

namespace szeeg::eval {

namespace {

using nlohmann::json;

void check_training_splits(const ingest::DatasetManifest& data, const FoldPlan& plan) {
  for (int f = 0; f < plan.k; ++f) {
    bool has[2] = {false, false};
    bool any_test = false;
    for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
      if (plan.assignments[i] == f)
        any_test = true;
      else
        has[data.segments[i].label] = true;
    }
    if (!any_test)
      throw ParamError(fmt::format("make_folds: fold {} received no segments", f));
    if (!has[0] || !has[1])
      throw ParamError(
          fmt::format("make_folds: training split for fold {} lacks a class", f));
  }
}

}  // namespace

FoldPlan make_folds(const ingest::DatasetManifest& data, int k, std::uint64_t seed,
                    bool subject_aware) {
  const std::size_t n = data.segments.size();
  if (k < 2) throw ParamError("make_folds: k must be at least 2");
  if (n == 0) throw ParamError("make_folds: empty dataset");
  bool present[2] = {false, false};
  for (const ingest::Segment& seg : data.segments) present[seg.label] = true;
  if (!present[0] || !present[1])
    throw ParamError("make_folds: dataset must contain both classes");

  FoldPlan plan;
  plan.k = k;
  plan.stratified = true;
  plan.subject_aware = subject_aware;
  plan.assignments.assign(n, -1);

  Rng rng(seed);
  if (!subject_aware) {
    if (static_cast<std::size_t>(k) > n)
      throw ParamError(fmt::format("make_folds: k={} exceeds {} segments", k, n));
    int counter = 0;
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i)
        if (data.segments[i].label == cls) idx.push_back(i);
      rng.shuffle(idx);
      for (std::size_t i : idx) plan.assignments[i] = counter++ % k;
    }
  } else {
    // Subjects are the unit of assignment; each subject's class is taken
    // from its segments (mixed-label subjects are rejected).
    std::vector<std::string> subjects;
    std::map<std::string, int> subject_class;
    for (const ingest::Segment& seg : data.segments) {
      auto [it, fresh] = subject_class.try_emplace(seg.source_subject, seg.label);
      if (fresh)
        subjects.push_back(seg.source_subject);
      else if (it->second != seg.label)
        throw ParamError(fmt::format("make_folds: subject '{}' has mixed labels",
                                     seg.source_subject));
    }
    if (static_cast<std::size_t>(k) > subjects.size())
      throw ParamError(fmt::format("make_folds: k={} exceeds {} subjects", k,
                                   subjects.size()));
    std::map<std::string, int> subject_fold;
    int counter = 0;
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<std::string> group;
      for (const std::string& s : subjects)
        if (subject_class[s] == cls) group.push_back(s);
      rng.shuffle(group);
      for (const std::string& s : group) subject_fold[s] = counter++ % k;
    }
    for (std::size_t i = 0; i < n; ++i)
      plan.assignments[i] = subject_fold[data.segments[i].source_subject];
  }

  check_training_splits(data, plan);
  return plan;
}

std::map<std::string, ElectrodeSet> default_electrode_sets() {
  return {
      {"Frontal", {"Frontal", {"Fp1", "Fp2", "F7", "F8", "Fz"}}},
      {"Temporal-Parietal", {"Temporal-Parietal", {"T3", "T4", "T5", "T6", "Pz"}}},
      {"Central-Occipital", {"Central-Occipital", {"C3", "Cz", "C4", "O1", "O2"}}},
  };
}

std::map<std::string, ElectrodeSet> load_electrode_sets(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParamError("electrode sets: cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("electrode sets: bad JSON: ") + e.what());
  }
  std::map<std::string, ElectrodeSet> out;
  for (const auto& [name, channels] : j.items()) {
    ElectrodeSet set;
    set.name = name;
    set.channels = channels.get<std::vector<std::string>>();
    if (set.channels.size() != 5)
      throw FormatError(fmt::format("electrode sets: '{}' must list exactly 5 channels",
                                    name));
    out.emplace(name, std::move(set));
  }
  return out;
}

void validate_electrode_set(const ElectrodeSet& set,
                            const std::vector<std::string>& dataset_channels) {
  if (set.channels.size() != 5)
    throw ParamError(fmt::format("electrode set '{}' must have exactly 5 channels",
                                 set.name));
  for (const std::string& ch : set.channels)
    if (std::ranges::find(dataset_channels, ch) == dataset_channels.end())
      throw ParamError(fmt::format("electrode set '{}': channel '{}' not in dataset",
                                   set.name, ch));
}

std::string GridRow::tag() const {
  return fmt::format("f{}k{}-f{}k{}-u{}", filters1, kernel1, filters2, kernel2,
                     lstm_units);
}

std::string EvalReport::tag() const {
  std::string t = model_kind;
  if (!variant.empty()) t += "-" + variant;
  t += "_" + band;
  if (!electrode_set.empty()) t += "_" + electrode_set;
  if (subject_aware) t += "_subj";
  return t;
}

EvalReport run_condition(const ConditionSpec& spec,
                         const ingest::DatasetManifest& data) {
  if (spec.model_kind != "szhnn" && spec.model_kind != "cnn" &&
      spec.model_kind != "lstm" && spec.model_kind != "svm")
    throw ParamError(fmt::format("run_condition: unknown model kind '{}'",
                                 spec.model_kind));
  if (data.segments.empty()) throw ParamError("run_condition: empty dataset");

  ingest::DatasetManifest work = data;
  dsp::WelchOptions welch = spec.welch;
  if (spec.electrodes) {
    validate_electrode_set(*spec.electrodes, work.channel_names);
    work = ingest::select_channels(work, spec.electrodes->channels);
  }
  if (spec.band != "none") {
    const dsp::BandDef band = dsp::band_by_name(spec.band);
    for (ingest::Segment& seg : work.segments)
      seg = std::move(dsp::band_decompose(seg, {band}, spec.filter_order).at(band.name));
    work.band = spec.band;
    // filtering only attenuates; the log-PSD would resurface out-of-band
    // structure, so the SVM features must be masked to the band as well
    welch.mask_lo_hz = std::max(welch.mask_lo_hz, band.lo_hz);
    welch.mask_hi_hz = std::min(welch.mask_hi_hz, band.hi_hz);
  }
  if (spec.zscore)
    for (ingest::Segment& seg : work.segments) seg = dsp::zscore(seg);

  const FoldPlan plan =
      make_folds(work, spec.folds, spec.params.seed, spec.subject_aware);

  EvalReport report;
  report.model_kind = spec.model_kind;
  if (spec.model_kind == "szhnn") report.variant = spec.grid.tag();
  report.band = spec.band;
  report.electrode_set = spec.electrodes ? spec.electrodes->name : "";
  report.dataset_id = work.dataset_id;
  report.folds = spec.folds;
  report.subject_aware = spec.subject_aware;
  report.seed = spec.params.seed;
  report.fold_accuracies.assign(plan.k, 0.0);
  report.fold_train_acc.assign(plan.k, {});
  report.fold_loss.assign(plan.k, {});

  const nn::Shape shape{work.segments.front().data.rows(),
                        work.segments.front().data.cols()};

  auto run_fold = [&](int f) {
    std::vector<const ingest::Segment*> train, test;
    for (std::size_t i = 0; i < work.segments.size(); ++i) {
      (plan.assignments[i] == f ? test : train).push_back(&work.segments[i]);
    }
    if (spec.model_kind == "svm") {
      std::vector<int> train_labels, test_labels;
      const Matrix x_train = models::psd_feature_matrix(train, welch, &train_labels);
      const models::SvmModel svm = models::svm_train(
          x_train, train_labels, spec.svm_c, spec.svm_epochs,
          spec.params.seed + static_cast<std::uint64_t>(f));
      const Matrix x_test = models::psd_feature_matrix(test, welch, &test_labels);
      report.fold_accuracies[static_cast<std::size_t>(f)] =
          models::svm_accuracy(svm, x_test, test_labels);
      return;
    }
    models::ModelConfig cfg;
    if (spec.model_kind == "szhnn") {
      cfg = models::build_szhnn_variant(shape, spec.grid.filters1, spec.grid.kernel1,
                                        spec.grid.filters2, spec.grid.kernel2,
                                        spec.grid.lstm_units);
    } else {
      cfg = models::config_for_kind(spec.model_kind, shape);
    }
    models::TrainRun run = spec.params;
    run.seed = spec.params.seed + static_cast<std::uint64_t>(f);
    models::Model model = models::train_subset(cfg, train, run);
    report.fold_accuracies[static_cast<std::size_t>(f)] = models::accuracy(model, test);
    report.fold_train_acc[static_cast<std::size_t>(f)] = std::move(run.train_acc_curve);
    report.fold_loss[static_cast<std::size_t>(f)] = std::move(run.loss_curve);
  };

  const int jobs = std::clamp(spec.jobs, 1, plan.k);
  if (jobs <= 1) {
    for (int f = 0; f < plan.k; ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const int f = next.fetch_add(1);
        if (f >= plan.k) return;
        try {
          run_fold(f);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  report.mean_accuracy =
      std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(),
                      0.0) /
      static_cast<double>(plan.k);
  return report;
}

std::vector<EvalReport> sweep_hyperparams(const std::vector<GridRow>& grid,
                                          const ConditionSpec& base,
                                          const ingest::DatasetManifest& data,
                                          std::vector<std::string>* warnings) {
  std::vector<GridRow> unique;
  for (const GridRow& row : grid) {
    if (std::ranges::find(unique, row) != unique.end()) {
      if (warnings)
        warnings->push_back(
            fmt::format("duplicate grid row {} skipped", row.tag()));
      continue;
    }
    unique.push_back(row);
  }
  std::vector<EvalReport> reports;
  for (const GridRow& row : unique) {
    ConditionSpec spec = base;
    spec.model_kind = "szhnn";
    spec.grid = row;
    reports.push_back(run_condition(spec, data));
  }
  return reports;
}

AnovaResult anova_two_factor_no_replication(const Matrix& table) {
  const std::size_t r = table.rows();
  const std::size_t c = table.cols();
  if (r < 2 || c < 2)
    throw ShapeError("anova: need at least a 2x2 table");

  double grand = 0.0;
  for (double v : table.values()) grand += v;
  grand /= static_cast<double>(r * c);

  std::vector<double> row_mean(r, 0.0), col_mean(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      row_mean[i] += table.at(i, j);
      col_mean[j] += table.at(i, j);
    }
  for (double& m : row_mean) m /= static_cast<double>(c);
  for (double& m : col_mean) m /= static_cast<double>(r);

  AnovaResult res;
  for (double m : row_mean) res.ss_rows += (m - grand) * (m - grand);
  res.ss_rows *= static_cast<double>(c);
  for (double m : col_mean) res.ss_cols += (m - grand) * (m - grand);
  res.ss_cols *= static_cast<double>(r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double dev = table.at(i, j) - grand;
      res.ss_total += dev * dev;
      const double e = table.at(i, j) - row_mean[i] - col_mean[j] + grand;
      res.ss_error += e * e;
    }

  res.df_rows = static_cast<double>(r - 1);
  res.df_cols = static_cast<double>(c - 1);
  res.df_error = static_cast<double>((r - 1) * (c - 1));

  const double ms_error = res.ss_error / res.df_error;
  auto f_stat = [&](double ss, double df) {
    const double ms = ss / df;
    if (ms_error == 0.0) return ms == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return ms / ms_error;
  };
  res.f_rows = f_stat(res.ss_rows, res.df_rows);
  res.f_cols = f_stat(res.ss_cols, res.df_cols);
  res.p_rows = stats::f_upper_tail(res.f_rows, res.df_rows, res.df_error);
  res.p_cols = stats::f_upper_tail(res.f_cols, res.df_cols, res.df_error);
  return res;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ParamError("paired_t_test: samples must have equal length");
  const std::size_t n = a.size();
  if (n < 2) throw ParamError("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult res;
  res.df = static_cast<double>(n - 1);
  if (sd == 0.0) {
    if (mean == 0.0) return res;  // identical samples: t = 0, p = 1
    throw ParamError("paired_t_test: zero variance with nonzero mean difference");
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p = stats::student_t_p_two_sided(res.t, res.df);
  return res;
}

void emit_report(const std::vector<EvalReport>& reports,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::ofstream csv(dir / "summary.csv");
  if (!csv) throw ParamError("emit_report: cannot write to '" + dir.string() + "'");
  csv << "model,variant,band,electrodes,dataset,folds,subject_aware,seed,"
         "mean_accuracy,fold_accuracies\n";
  for (const EvalReport& r : reports) {
    csv << r.model_kind << ',' << r.variant << ',' << r.band << ','
        << r.electrode_set << ',' << r.dataset_id << ',' << r.folds << ','
        << (r.subject_aware ? 1 : 0) << ',' << r.seed << ','
        << fmt::format("{}", r.mean_accuracy) << ',';
    for (std::size_t i = 0; i < r.fold_accuracies.size(); ++i) {
      if (i) csv << ';';
      csv << fmt::format("{}", r.fold_accuracies[i]);
    }
    csv << '\n';
  }

  json arr = json::array();
  for (const EvalReport& r : reports) {
    arr.push_back({{"model", r.model_kind},
                   {"variant", r.variant},
                   {"band", r.band},
                   {"electrodes", r.electrode_set},
                   {"dataset", r.dataset_id},
                   {"folds", r.folds},
                   {"subject_aware", r.subject_aware},
                   {"seed", r.seed},
                   {"mean_accuracy", r.mean_accuracy},
                   {"fold_accuracies", r.fold_accuracies}});
  }
  std::ofstream js(dir / "summary.json");
  js << arr.dump(2) << '\n';
}

}  // namespace szeeg::eval
