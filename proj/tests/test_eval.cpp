#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "szeeg/error.hpp"
#include "szeeg/eval.hpp"
#include "szeeg/rng.hpp"
#include "szeeg/stats.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace szeeg;

namespace {

ingest::Segment noise_segment(std::size_t channels, std::size_t samples, double fs,
                              int label, Rng& rng, const std::string& subject) {
  std::vector<std::vector<double>> rows(channels, std::vector<double>(samples));
  for (auto& row : rows)
    for (double& v : row) v = rng.normal();
  return testsupport::make_segment(rows, fs, label, subject);
}

// n segments, alternating labels, one subject per segment unless
// segments_per_subject says otherwise
ingest::DatasetManifest noise_manifest(std::size_t n, std::size_t channels,
                                       std::size_t samples, double fs, Rng& rng,
                                       std::size_t segments_per_subject = 1) {
  ingest::DatasetManifest m;
  for (std::size_t c = 0; c < channels; ++c)
    m.channel_names.push_back("ch" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t subject = i / segments_per_subject;
    const int label = static_cast<int>(subject % 2);
    m.segments.push_back(
        noise_segment(channels, samples, fs, label, rng, "s" + std::to_string(subject)));
    m.segments.back().segment_index = i;
  }
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix table_3x3() {
  Matrix t(3, 3);
  const double vals[9] = {93, 88, 77, 91, 86, 79, 97, 90, 80};
  std::copy(vals, vals + 9, t.values().begin());
  return t;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("make_folds balances both classes over every fold") {
  Rng rng(1);
  const auto data = noise_manifest(20, 2, 16, 128.0, rng);
  const eval::FoldPlan plan = eval::make_folds(data, 5, 42, false);

  REQUIRE(plan.assignments.size() == 20);
  std::map<int, std::map<int, int>> per_fold_class;
  for (std::size_t i = 0; i < 20; ++i) {
    const int f = plan.assignments[i];
    CHECK(f >= 0);
    CHECK(f < 5);
    per_fold_class[f][data.segments[i].label]++;
  }
  REQUIRE(per_fold_class.size() == 5);
  for (const auto& [fold, counts] : per_fold_class) {
    CHECK(counts.at(0) == 2);  // 10 per class over 5 folds
    CHECK(counts.at(1) == 2);
  }
}

TEST_CASE("make_folds with k equal to n puts one segment per fold") {
  Rng rng(2);
  const auto data = noise_manifest(10, 1, 8, 128.0, rng);
  const eval::FoldPlan plan = eval::make_folds(data, 10, 7, false);
  std::set<int> seen(plan.assignments.begin(), plan.assignments.end());
  CHECK(seen.size() == 10);
}

TEST_CASE("make_folds is deterministic per seed") {
  Rng rng(3);
  const auto data = noise_manifest(20, 1, 8, 128.0, rng);
  const auto a = eval::make_folds(data, 4, 5, false);
  const auto b = eval::make_folds(data, 4, 5, false);
  const auto c = eval::make_folds(data, 4, 6, false);
  CHECK(a.assignments == b.assignments);
  CHECK(a.assignments != c.assignments);
}

TEST_CASE("make_folds rejects degenerate inputs") {
  Rng rng(4);
  const auto data = noise_manifest(10, 1, 8, 128.0, rng);
  CHECK_THROWS_AS(eval::make_folds(data, 1, 0, false), ParamError);
  CHECK_THROWS_AS(eval::make_folds(data, 11, 0, false), ParamError);

  ingest::DatasetManifest empty;
  CHECK_THROWS_AS(eval::make_folds(empty, 2, 0, false), ParamError);

  auto one_class = data;
  for (auto& seg : one_class.segments) seg.label = 0;
  CHECK_THROWS_AS(eval::make_folds(one_class, 2, 0, false), ParamError);

  // a lone class-1 segment starves the training complement of its own fold
  auto lone = noise_manifest(11, 1, 8, 128.0, rng);
  for (std::size_t i = 0; i < 10; ++i) lone.segments[i].label = 0;
  lone.segments[10].label = 1;
  CHECK_THROWS_AS(eval::make_folds(lone, 5, 0, false), ParamError);
}

TEST_CASE("subject-aware folds never split a subject") {
  Rng rng(5);
  // 6 subjects (3 per class) x 4 segments each
  const auto data = noise_manifest(24, 1, 8, 128.0, rng, 4);
  const eval::FoldPlan plan = eval::make_folds(data, 3, 11, true);
  CHECK(plan.subject_aware);

  std::map<std::string, std::set<int>> folds_by_subject;
  for (std::size_t i = 0; i < 24; ++i)
    folds_by_subject[data.segments[i].source_subject].insert(plan.assignments[i]);
  REQUIRE(folds_by_subject.size() == 6);
  for (const auto& [subject, folds] : folds_by_subject) CHECK(folds.size() == 1);

  CHECK_THROWS_WITH_AS(eval::make_folds(data, 7, 11, true),
                       doctest::Contains("subjects"), ParamError);

  auto mixed = data;
  mixed.segments[0].label = 1 - mixed.segments[0].label;
  CHECK_THROWS_WITH_AS(eval::make_folds(mixed, 3, 11, true),
                       doctest::Contains("mixed labels"), ParamError);
}

TEST_CASE("default electrode sets cover the 10-20 groups") {
  const auto sets = eval::default_electrode_sets();
  REQUIRE(sets.size() == 3);
  REQUIRE(sets.count("Frontal") == 1);
  REQUIRE(sets.count("Temporal-Parietal") == 1);
  REQUIRE(sets.count("Central-Occipital") == 1);
  CHECK(sets.at("Frontal").channels ==
        std::vector<std::string>{"Fp1", "Fp2", "F7", "F8", "Fz"});

  const std::vector<std::string> layout = {
      "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
      "C4",  "T4",  "T5", "P3", "Pz", "P4", "T6", "O1", "O2"};
  for (const auto& [name, set] : sets)
    CHECK_NOTHROW(eval::validate_electrode_set(set, layout));

  CHECK_THROWS_WITH_AS(
      eval::validate_electrode_set(sets.at("Frontal"), {"Fp1", "Fp2"}),
      doctest::Contains("not in dataset"), ParamError);

  eval::ElectrodeSet four{"Four", {"Fp1", "Fp2", "F7", "F8"}};
  CHECK_THROWS_AS(eval::validate_electrode_set(four, layout), ParamError);
}

TEST_CASE("electrode sets load from a json config") {
  testsupport::TempDir dir;
  const auto path = dir.path / "sets.json";
  {
    std::ofstream out(path);
    out << R"({"Custom": ["A", "B", "C", "D", "E"]})";
  }
  const auto sets = eval::load_electrode_sets(path);
  REQUIRE(sets.size() == 1);
  CHECK(sets.at("Custom").channels ==
        std::vector<std::string>{"A", "B", "C", "D", "E"});

  {
    std::ofstream out(path);
    out << R"({"Short": ["A", "B"]})";
  }
  CHECK_THROWS_AS(eval::load_electrode_sets(path), FormatError);

  {
    std::ofstream out(path);
    out << "not json at all";
  }
  CHECK_THROWS_AS(eval::load_electrode_sets(path), FormatError);

  CHECK_THROWS_AS(eval::load_electrode_sets(dir.path / "missing.json"), ParamError);
}

TEST_CASE("report tags compose model, variant, band and split") {
  eval::GridRow row;
  CHECK(row.tag() == "f5k15-f10k10-u32");

  eval::EvalReport r;
  r.model_kind = "svm";
  r.band = "alpha";
  CHECK(r.tag() == "svm_alpha");

  r.model_kind = "szhnn";
  r.variant = "f2k5-f3k3-u4";
  r.band = "none";
  r.electrode_set = "Frontal";
  r.subject_aware = true;
  CHECK(r.tag() == "szhnn-f2k5-f3k3-u4_none_Frontal_subj");
}

TEST_CASE("run_condition evaluates an svm over stratified folds") {
  Rng rng(6);
  const auto data = noise_manifest(16, 2, 256, 128.0, rng);

  eval::ConditionSpec spec;
  spec.model_kind = "svm";
  spec.folds = 4;
  spec.svm_c = 5.0;
  spec.svm_epochs = 40;
  spec.params.seed = 21;
  spec.welch.nfft = 64;

  const eval::EvalReport report = eval::run_condition(spec, data);
  CHECK(report.model_kind == "svm");
  CHECK(report.variant.empty());
  CHECK(report.band == "none");
  CHECK(report.folds == 4);
  CHECK(report.seed == 21);
  REQUIRE(report.fold_accuracies.size() == 4);
  double mean = 0.0;
  for (double a : report.fold_accuracies) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    mean += a;
  }
  mean /= 4.0;
  CHECK(report.mean_accuracy == doctest::Approx(mean).epsilon(1e-12));

  const eval::EvalReport again = eval::run_condition(spec, data);
  CHECK(again.fold_accuracies == report.fold_accuracies);
}

TEST_CASE("run_condition applies band filtering and channel subsets") {
  Rng rng(7);
  auto data = noise_manifest(12, 6, 128, 128.0, rng);
  data.channel_names = {"Fp1", "Fp2", "F7", "F8", "Fz", "Extra"};

  eval::ConditionSpec spec;
  spec.model_kind = "svm";
  spec.folds = 3;
  spec.svm_epochs = 20;
  spec.band = "alpha";
  spec.electrodes = eval::default_electrode_sets().at("Frontal");
  spec.welch.nfft = 64;

  const eval::EvalReport report = eval::run_condition(spec, data);
  CHECK(report.band == "alpha");
  CHECK(report.electrode_set == "Frontal");
  CHECK(report.fold_accuracies.size() == 3);

  spec.electrodes = eval::ElectrodeSet{"Bad", {"Fp1", "Fp2", "F7", "F8", "Nope"}};
  CHECK_THROWS_AS(eval::run_condition(spec, data), ParamError);
}

TEST_CASE("run_condition rejects unknown models and empty data") {
  Rng rng(8);
  const auto data = noise_manifest(8, 1, 32, 128.0, rng);
  eval::ConditionSpec spec;
  spec.model_kind = "forest";
  CHECK_THROWS_AS(eval::run_condition(spec, data), ParamError);

  spec.model_kind = "svm";
  CHECK_THROWS_AS(eval::run_condition(spec, ingest::DatasetManifest{}), ParamError);
}

TEST_CASE("hyperparameter sweep drops duplicate rows") {
  Rng rng(9);
  const auto data = noise_manifest(8, 2, 32, 128.0, rng);

  eval::ConditionSpec base;
  base.model_kind = "szhnn";
  base.folds = 2;
  base.params.epochs = 1;
  base.params.batch_size = 4;
  base.params.lr = 1e-3;
  base.zscore = true;

  const eval::GridRow small{2, 5, 3, 3, 4};
  const eval::GridRow wider{2, 5, 3, 3, 5};
  std::vector<std::string> warnings;
  const auto reports =
      eval::sweep_hyperparams({small, wider, small}, base, data, &warnings);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].variant == "f2k5-f3k3-u4");
  CHECK(reports[1].variant == "f2k5-f3k3-u5");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("duplicate") != std::string::npos);

  const auto none = eval::sweep_hyperparams({}, base, data, nullptr);
  CHECK(none.empty());
}

TEST_CASE("anova reproduces the reference 3x3 decomposition") {
  const auto res = eval::anova_two_factor_no_replication(table_3x3());
  CHECK(res.ss_rows == doctest::Approx(22.888888888888932).epsilon(1e-9));
  CHECK(res.ss_cols == doctest::Approx(344.2222222222222).epsilon(1e-9));
  CHECK(res.ss_error == doctest::Approx(8.444444444444444).epsilon(1e-9));
  CHECK(res.ss_total == doctest::Approx(375.5555555555555).epsilon(1e-9));
  CHECK(res.df_rows == 2.0);
  CHECK(res.df_cols == 2.0);
  CHECK(res.df_error == 4.0);
  CHECK(res.f_rows == doctest::Approx(5.421052631578986).epsilon(1e-9));
  CHECK(res.f_cols == doctest::Approx(81.5263157894741).epsilon(1e-9));
  CHECK(res.p_rows == doctest::Approx(0.0726321613600918).epsilon(1e-9));
  CHECK(res.p_cols == doctest::Approx(0.0005733414490530081).epsilon(1e-9));
}

TEST_CASE("anova satisfies the sum-of-squares identity on random tables") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 2 + rng.uniform_index(4);
    const std::size_t c = 2 + rng.uniform_index(4);
    Matrix table(r, c);
    for (double& v : table.values()) v = 50.0 + 30.0 * rng.uniform();
    const auto res = eval::anova_two_factor_no_replication(table);
    CHECK(res.ss_rows + res.ss_cols + res.ss_error ==
          doctest::Approx(res.ss_total).epsilon(1e-9));
    CHECK(res.p_rows >= 0.0);
    CHECK(res.p_rows <= 1.0);
  }
}

TEST_CASE("anova edge cases") {
  // identical rows: zero row effect
  Matrix same_rows(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) same_rows.at(i, j) = 1.0 + static_cast<double>(j);
  const auto res = eval::anova_two_factor_no_replication(same_rows);
  CHECK(res.f_rows == 0.0);
  CHECK(res.p_rows == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(eval::anova_two_factor_no_replication(Matrix(1, 5)), ShapeError);
  CHECK_THROWS_AS(eval::anova_two_factor_no_replication(Matrix(5, 1)), ShapeError);
}

TEST_CASE("paired t-test reproduces the reference case") {
  const std::vector<double> a = {72, 75, 68, 80, 74, 69, 77, 71};
  const std::vector<double> b = {70, 72, 69, 75, 70, 68, 74, 70};
  const auto res = eval::paired_t_test(a, b);
  CHECK(res.df == 7.0);
  CHECK(res.t == doctest::Approx(3.334313581357268).epsilon(1e-9));
  CHECK(res.p == doctest::Approx(0.012516825966946083).epsilon(1e-9));

  // order flip negates t, keeps p
  const auto rev = eval::paired_t_test(b, a);
  CHECK(rev.t == doctest::Approx(-res.t).epsilon(1e-12));
  CHECK(rev.p == doctest::Approx(res.p).epsilon(1e-12));
}

TEST_CASE("paired t-test degenerate inputs") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const auto same = eval::paired_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);

  const std::vector<double> shifted = {2.0, 3.0, 4.0};
  CHECK_THROWS_WITH_AS(eval::paired_t_test(a, shifted),
                       doctest::Contains("zero variance"), ParamError);

  const std::vector<double> shorter = {1.0, 2.0};
  CHECK_THROWS_AS(eval::paired_t_test(a, shorter), ParamError);
  const std::vector<double> one = {1.0};
  CHECK_THROWS_AS(eval::paired_t_test(one, one), ParamError);
}

TEST_CASE("tail probabilities hit the alpha=0.05 critical values") {
  CHECK(std::abs(stats::student_t_p_two_sided(2.7764, 4.0) - 0.05) < 1e-3);
  CHECK(std::abs(stats::student_t_p_two_sided(2.2622, 9.0) - 0.05) < 1e-3);
  CHECK(std::abs(stats::f_upper_tail(6.9443, 2.0, 4.0) - 0.05) < 1e-3);
  CHECK(std::abs(stats::f_upper_tail(4.9646, 1.0, 10.0) - 0.05) < 1e-3);
  CHECK(std::abs(stats::f_upper_tail(3.3258, 5.0, 10.0) - 0.05) < 1e-3);

  CHECK(stats::student_t_p_two_sided(0.0, 5.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats::student_t_p_two_sided(-2.7764, 4.0) ==
        doctest::Approx(stats::student_t_p_two_sided(2.7764, 4.0)).epsilon(1e-12));
  CHECK(stats::f_upper_tail(0.0, 2.0, 4.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("regularized incomplete beta basics") {
  for (double x : {0.0, 0.25, 0.5, 0.75, 1.0})
    CHECK(stats::reg_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));

  const double direct = stats::reg_incomplete_beta(2.0, 3.0, 0.3);
  const double mirrored = 1.0 - stats::reg_incomplete_beta(3.0, 2.0, 0.7);
  CHECK(direct == doctest::Approx(mirrored).epsilon(1e-12));
  CHECK(stats::reg_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(stats::reg_incomplete_beta(2.0, 3.0, 1.0) == 1.0);

  CHECK_THROWS_AS(stats::reg_incomplete_beta(0.0, 1.0, 0.5), ParamError);
  CHECK_THROWS_AS(stats::reg_incomplete_beta(1.0, 1.0, 1.5), ParamError);
  CHECK_THROWS_AS(stats::student_t_p_two_sided(1.0, 0.0), ParamError);
  CHECK_THROWS_AS(stats::f_upper_tail(1.0, 0.0, 4.0), ParamError);
}

TEST_CASE("emit_report writes a fixed-layout summary") {
  testsupport::TempDir dir;

  eval::emit_report({}, dir.path / "empty");
  CHECK(slurp(dir.path / "empty" / "summary.csv") ==
        "model,variant,band,electrodes,dataset,folds,subject_aware,seed,"
        "mean_accuracy,fold_accuracies\n");
  CHECK(slurp(dir.path / "empty" / "summary.json") == "[]\n");

  eval::EvalReport r;
  r.model_kind = "svm";
  r.band = "alpha";
  r.dataset_id = 1;
  r.folds = 2;
  r.seed = 3;
  r.fold_accuracies = {0.5, 0.75};
  r.mean_accuracy = 0.625;

  eval::emit_report({r}, dir.path / "one");
  const std::string csv = slurp(dir.path / "one" / "summary.csv");
  CHECK(csv.find("svm,,alpha,,1,2,0,3,0.625,0.5;0.75\n") != std::string::npos);

  // identical inputs produce byte-identical files
  eval::emit_report({r}, dir.path / "two");
  CHECK(slurp(dir.path / "one" / "summary.csv") ==
        slurp(dir.path / "two" / "summary.csv"));
  CHECK(slurp(dir.path / "one" / "summary.json") ==
        slurp(dir.path / "two" / "summary.json"));
}

}  // TEST_SUITE
