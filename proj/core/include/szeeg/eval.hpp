#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "szeeg/ingest.hpp"
#include "szeeg/matrix.hpp"
#include "szeeg/models.hpp"

namespace szeeg::eval {

struct FoldPlan {
  int k = 10;
  std::vector<int> assignments;  // segment index -> fold id
  bool stratified = true;
  bool subject_aware = false;
};

// Stratified k-fold assignment. With subject_aware, every segment of a
// subject lands in one fold (no identity leakage across the split). Throws if
// any fold's training complement would miss a class.
FoldPlan make_folds(const ingest::DatasetManifest& data, int k, std::uint64_t seed,
                    bool subject_aware);

struct ElectrodeSet {
  std::string name;
  std::vector<std::string> channels;  // exactly 5
};

// Named five-channel groups, keyed by set name. The built-in defaults cover
// the 19-channel 10-20 layout; a JSON config ({"Frontal": ["Fp1", ...], ...})
// overrides them.
std::map<std::string, ElectrodeSet> default_electrode_sets();
std::map<std::string, ElectrodeSet> load_electrode_sets(const std::filesystem::path& path);
void validate_electrode_set(const ElectrodeSet& set,
                            const std::vector<std::string>& dataset_channels);

// SzHNN hyperparameters exercised by the sweep grids.
struct GridRow {
  int filters1 = 5;
  int kernel1 = 15;
  int filters2 = 10;
  int kernel2 = 10;
  int lstm_units = 32;

  bool operator==(const GridRow&) const = default;
  std::string tag() const;
};

struct ConditionSpec {
  std::string model_kind = "szhnn";  // szhnn | cnn | lstm | svm
  std::string band = "none";         // none | theta | alpha | beta | gamma | all
  std::optional<ElectrodeSet> electrodes;
  models::TrainRun params;
  GridRow grid;  // used by szhnn only
  int folds = 10;
  bool subject_aware = false;
  bool zscore = true;
  int filter_order = 4;
  double svm_c = 1.0;
  int svm_epochs = 100;
  dsp::WelchOptions welch;  // SVM feature extraction
  int jobs = 1;
};

struct EvalReport {
  std::string model_kind;
  std::string variant;  // grid tag for szhnn, empty otherwise
  std::string band;
  std::string electrode_set;  // empty = all channels
  int dataset_id = 0;
  int folds = 0;
  bool subject_aware = false;
  std::uint64_t seed = 0;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  // per-fold training curves (epoch-major), for accuracy-by-epoch plots
  std::vector<std::vector<double>> fold_train_acc;
  std::vector<std::vector<double>> fold_loss;

  std::string tag() const;
};

// Full pipeline for one condition: band filter, channel subset, z-score,
// k-fold split, per-fold training (fold seeds = seed + fold index), accuracy
// aggregation. Folds run on `jobs` threads; results are scheduling-invariant.
EvalReport run_condition(const ConditionSpec& spec,
                         const ingest::DatasetManifest& data);

// One run_condition per unique grid row; duplicates are dropped and noted in
// *warnings when given.
std::vector<EvalReport> sweep_hyperparams(const std::vector<GridRow>& grid,
                                          const ConditionSpec& base,
                                          const ingest::DatasetManifest& data,
                                          std::vector<std::string>* warnings = nullptr);

struct AnovaResult {
  double ss_rows = 0.0, ss_cols = 0.0, ss_error = 0.0, ss_total = 0.0;
  double df_rows = 0.0, df_cols = 0.0, df_error = 0.0;
  double f_rows = 0.0, f_cols = 0.0;
  double p_rows = 1.0, p_cols = 1.0;
};

// Two-factor ANOVA without replication over a [rows x cols] table of one
// observation per cell.
AnovaResult anova_two_factor_no_replication(const Matrix& table);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

// Paired two-sided Student t-test (sample sd of differences, n-1 df).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// summary.csv + summary.json under dir; fixed column order, no timestamps.
void emit_report(const std::vector<EvalReport>& reports,
                 const std::filesystem::path& dir);

}  // namespace szeeg::eval
