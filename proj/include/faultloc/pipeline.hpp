#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "faultloc/dataset_io.hpp"
#include "faultloc/features.hpp"
#include "faultloc/neuralnet.hpp"

namespace faultloc::pipeline {

// ---------------------------------------------------------------------------
// Feature datasets
// ---------------------------------------------------------------------------

/// One record's raw (unscaled) feature vectors for every registered spec,
/// plus its labels.
struct FeatureRecord {
    std::string id;
    net::FaultScenario scenario;
    std::map<std::string, std::vector<double>> by_spec;
};

struct FeatureDataset {
    std::vector<FeatureRecord> records;
    double fs = 0;
    std::uint64_t source_digest = 0;
};

FeatureRecord extract_features(const emt::WaveformRecord& record);

/// Loads every record of a dataset directory and computes its features,
/// parallel across records.
FeatureDataset load_feature_dataset(const std::filesystem::path& dataset_dir);

// ---------------------------------------------------------------------------
// Locator
// ---------------------------------------------------------------------------

struct PipelineConfig {
    nn::TrainOptions lm_opts;   // distance regressors
    nn::TrainOptions scg_opts;  // classifiers
    double h_boundary_m = 4500.0;  // h1: x <= boundary, h2: x > boundary
    double max_distance_m = 11000.0;  // L, the longest route from the substation
    std::uint64_t seed = 1;
    bool single_ann = false;        // one distance net + one path net for all types
    bool class_weighting = false;   // optional inverse-frequency weighting

    PipelineConfig() {
        lm_opts.loss = nn::Loss::mse;
        scg_opts.loss = nn::Loss::cross_entropy;
    }
};

struct TrainedNet {
    std::string name;             // "Ph", "D-a", "Pa-ab-h1", "D-single", ...
    std::string spec_name;
    nn::MlpArchitecture arch;
    nn::MlpParams params;
    feats::Scaler x_scaler;
    double y_mean = 0, y_std = 1;   // target standardization (regressors)
    std::vector<int> classes;       // classifier label per output index
    std::uint64_t seed = 0;
    nn::TrainTrace trace;
    std::size_t data_size = 0;      // records seen (train+val+test of its subset)
};

struct FaultLocator {
    PipelineConfig cfg;
    std::optional<TrainedNet> phase_net;
    std::map<std::string, TrainedNet> distance_nets;  // key: "a".."abc" or "single"
    std::map<std::string, TrainedNet> path_nets;      // key: "a-h1".. or "single"
    std::vector<std::string> absent;                  // nets skipped for lack of data

    std::set<std::string> train_ids, val_ids, test_ids;
    std::uint64_t dataset_digest = 0;

    int true_group(double distance_m) const { return distance_m <= cfg.h_boundary_m ? 1 : 2; }
    std::size_t net_count() const;
};

FaultLocator train_pipeline(const FeatureDataset& ds, const PipelineConfig& cfg);

void save_locator(const FaultLocator& locator, const std::filesystem::path& dir);
FaultLocator load_locator(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct PredictionResult {
    net::PhaseSet fault_type;
    double distance_m = 0;      // clamped to [0, L]
    double distance_raw_m = 0;  // regressor output before clamping
    int group = 1;              // 1 -> h1 nets, 2 -> h2 nets
    int path_id = 0;
    std::vector<double> phase_probs;  // 7, canonical class order
    std::vector<double> path_probs;   // over path_classes
    std::vector<int> path_classes;
    std::string distance_net, path_net;
};

PredictionResult locate(const FaultLocator& locator, const FeatureRecord& record);

/// Counterfactual with oracle routing: the true fault type selects the
/// distance net and the true distance selects the path group.
PredictionResult locate_oracle_routing(const FaultLocator& locator, const FeatureRecord& record);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// |predicted - true| / L
double relative_distance_error(double predicted_m, double true_m, double l_m);

struct RecordOutcome {
    std::string id;
    net::FaultScenario truth;
    int true_group = 1;
    PredictionResult pred;
    PredictionResult oracle;
    double e_rel = 0, oracle_e_rel = 0;
    bool phase_correct = false, path_correct = false, oracle_path_correct = false;
};

struct GroupStat {
    double value = 0;       // mean e_rel or accuracy
    std::size_t count = 0;
};

struct EvaluationReport {
    std::size_t count = 0;
    double phase_accuracy = 0;
    std::vector<std::vector<std::size_t>> phase_confusion;  // 7x7, true x predicted
    std::map<std::string, GroupStat> per_type_erel;         // keyed by distance-net name
    double total_mean_erel = 0;
    std::map<std::string, GroupStat> per_pathnet_accuracy;  // keyed by path-net name
    double path_accuracy = 0;
    std::vector<std::vector<std::size_t>> path_confusion;   // 6x6, true x predicted
    double oracle_path_accuracy = 0;
    double oracle_mean_erel = 0;
    std::vector<RecordOutcome> outcomes;

    std::string render_table() const;  // per-net summary in the result-table layout
    std::string to_json() const;
};

/// Evaluates the staged pipeline over a feature dataset. Fails when the set
/// overlaps the locator's training or validation records unless the caller
/// explicitly allows it.
EvaluationReport evaluate(const FaultLocator& locator, const FeatureDataset& testset,
                          bool allow_overlap = false);

// ---------------------------------------------------------------------------
// Correlation errors, robustness, ablation
// ---------------------------------------------------------------------------

struct CorrelationStats {
    std::size_t count = 0;
    std::size_t phce_count = 0, pce_count = 0, both_count = 0;
    double phce_rate = 0, pce_rate = 0;
    GroupStat phce_leading_to_pce;
    GroupStat erel_given_phce, erel_without_phce;
    GroupStat path_acc_given_phce, path_acc_given_pce, path_acc_given_both;
    GroupStat path_acc_without_errors;
    double oracle_path_accuracy = 0;  // true type + true group routing
    double oracle_mean_erel = 0;

    std::string render_table() const;
    std::string to_json() const;
};

CorrelationStats correlation_error_analysis(const EvaluationReport& report);

/// Standard evaluation of an out-of-grid dataset (no overlap expected).
EvaluationReport robustness_eval(const FaultLocator& locator, const FeatureDataset& alt);

struct AblationResult {
    EvaluationReport multiple;
    EvaluationReport single;

    std::string render_table() const;
};

/// Trains both workflow variants on identical splits and seeds and evaluates
/// them on the shared held-out test records.
AblationResult ablation_single_vs_multiple(const FeatureDataset& ds, const PipelineConfig& cfg);

/// The deterministic global split used by train_pipeline (stratified by
/// fault type, path, group and distance bin).
nn::SplitIndices pipeline_split(const FeatureDataset& ds, const PipelineConfig& cfg);

/// Plot-data accessors: var(V_p CD8) and skn(V_p) for a faulted phase of the
/// record's own fault type, read back from the registered feature specs.
double faulted_phase_cd8_variance(const FeatureRecord& record, int phase);
double faulted_phase_skewness(const FeatureRecord& record, int phase);

}  // namespace faultloc::pipeline
