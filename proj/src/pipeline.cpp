#include "faultloc/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "faultloc/errors.hpp"
#include "faultloc/parallel.hpp"
#include "faultloc/rng.hpp"

namespace faultloc::pipeline {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

FeatureRecord extract_features(const emt::WaveformRecord& record) {
    const feats::ChannelSet cs = feats::ChannelSet::from_record(record);
    std::array<std::optional<double>, 6 * feats::kChannelCount> memo;
    auto stat_of = [&](feats::StatKind s, feats::Channel c) {
        auto& slot = memo[static_cast<std::size_t>(s) * feats::kChannelCount +
                          static_cast<std::size_t>(c)];
        if (!slot) slot = feats::compute_stat(s, cs.get(c));
        return *slot;
    };
    FeatureRecord out;
    out.id = record.scenario.id();
    out.scenario = record.scenario;
    for (const auto& name : feats::feature_spec_names()) {
        const auto& spec = feats::feature_spec(name);
        std::vector<double> vals;
        vals.reserve(spec.items.size());
        for (const auto& [s, c] : spec.items) {
            const double v = stat_of(s, c);
            if (!std::isfinite(v))
                fail_numerical("non-finite feature in spec " + name + " for record " + out.id);
            vals.push_back(v);
        }
        out.by_spec.emplace(name, std::move(vals));
    }
    return out;
}

FeatureDataset load_feature_dataset(const std::filesystem::path& dataset_dir) {
    const io::DatasetManifest manifest = io::read_dataset_manifest(dataset_dir);
    FeatureDataset ds;
    ds.fs = manifest.fs;
    ds.source_digest = manifest.digest;
    ds.records.resize(manifest.records.size());
    par::parallel_for(manifest.records.size(), [&](std::size_t i) {
        const auto rec = io::read_record(dataset_dir / manifest.records[i].file);
        ds.records[i] = extract_features(rec);
        ds.records[i].id = manifest.records[i].id;
    });
    return ds;
}

// ---------------------------------------------------------------------------
// Net tables
// ---------------------------------------------------------------------------

namespace {

int distance_hidden(const std::string& type) {
    if (type == "a" || type == "ab" || type == "bc") return 10;
    if (type == "b") return 20;
    return 30;  // c, ac, abc, single
}

int path_hidden(const std::string& type) {
    if (type == "c" || type == "bc" || type == "abc") return 30;
    return 50;  // a, b, ab, ac, single
}

std::vector<int> group_classes(int group) {
    return group == 1 ? std::vector<int>{1, 2, 3, 4} : std::vector<int>{1, 5, 6};
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int argmax(const Eigen::VectorXd& v) {
    Eigen::Index i = 0;
    v.maxCoeff(&i);
    return static_cast<int>(i);
}

struct SubsetRows {
    std::vector<std::size_t> train, val;  // indices into ds.records
};

nn::Dataset make_classifier_dataset(const FeatureDataset& ds, const std::vector<std::size_t>& rows,
                                    const feats::Scaler& scaler, const std::string& spec_name,
                                    const std::vector<int>& classes,
                                    const std::function<int(const FeatureRecord&)>& label_of,
                                    const std::vector<double>& class_weight) {
    nn::Dataset d;
    const Eigen::Index t = static_cast<Eigen::Index>(classes.size());
    d.inputs.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(scaler.mean.size()));
    d.targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), t);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& rec = ds.records[rows[k]];
        const auto x = scaler.transform(rec.by_spec.at(spec_name));
        d.inputs.row(static_cast<Eigen::Index>(k)) = to_vec(x).transpose();
        const int label = label_of(rec);
        const auto it = std::find(classes.begin(), classes.end(), label);
        if (it == classes.end()) fail_data("record label outside classifier class set");
        const auto ci = static_cast<Eigen::Index>(it - classes.begin());
        d.targets(static_cast<Eigen::Index>(k), ci) =
            class_weight.empty() ? 1.0 : class_weight[static_cast<std::size_t>(ci)];
    }
    return d;
}

nn::Dataset make_regressor_dataset(const FeatureDataset& ds, const std::vector<std::size_t>& rows,
                                   const feats::Scaler& scaler, const std::string& spec_name,
                                   double y_mean, double y_std) {
    nn::Dataset d;
    d.inputs.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(scaler.mean.size()));
    d.targets.resize(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& rec = ds.records[rows[k]];
        const auto x = scaler.transform(rec.by_spec.at(spec_name));
        d.inputs.row(static_cast<Eigen::Index>(k)) = to_vec(x).transpose();
        d.targets(static_cast<Eigen::Index>(k), 0) = (rec.scenario.distance_m - y_mean) / y_std;
    }
    return d;
}

feats::Scaler fit_scaler(const FeatureDataset& ds, const std::vector<std::size_t>& rows,
                         const std::string& spec_name) {
    std::vector<std::vector<double>> train_rows;
    train_rows.reserve(rows.size());
    for (std::size_t r : rows) train_rows.push_back(ds.records[r].by_spec.at(spec_name));
    return feats::Scaler::fit(train_rows);
}

}  // namespace

std::size_t FaultLocator::net_count() const {
    return (phase_net ? 1u : 0u) + distance_nets.size() + path_nets.size();
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

namespace {

double spec_stat_lookup(const FeatureRecord& record, feats::StatKind stat, feats::Channel ch) {
    const std::string spec_name = feats::distance_spec_name(record.scenario.faulted_phases);
    const auto& spec = feats::feature_spec(spec_name);
    for (std::size_t k = 0; k < spec.items.size(); ++k)
        if (spec.items[k].first == stat && spec.items[k].second == ch)
            return record.by_spec.at(spec_name)[k];
    fail_validation("statistic not present in spec " + spec_name);
}

}  // namespace

double faulted_phase_cd8_variance(const FeatureRecord& record, int phase) {
    return spec_stat_lookup(record, feats::StatKind::variance, feats::phase_cd8_channel(phase));
}

double faulted_phase_skewness(const FeatureRecord& record, int phase) {
    return spec_stat_lookup(record, feats::StatKind::skewness, feats::phase_time_channel(phase));
}

nn::SplitIndices pipeline_split(const FeatureDataset& ds, const PipelineConfig& cfg) {
    const std::size_t n = ds.records.size();
    std::vector<std::string> fine(n), coarse(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ds.records[i].scenario;
        const int group = s.distance_m <= cfg.h_boundary_m ? 1 : 2;
        const int km_bin = static_cast<int>(std::floor(s.distance_m / 1000.0));
        coarse[i] = s.faulted_phases.name() + "|p" + std::to_string(s.path_id) + "|h" +
                    std::to_string(group);
        fine[i] = coarse[i] + "|k" + std::to_string(km_bin);
    }
    std::map<std::string, std::size_t> fine_count;
    for (const auto& k : fine) ++fine_count[k];
    std::vector<std::string> strata(n);
    for (std::size_t i = 0; i < n; ++i)
        strata[i] = fine_count[fine[i]] >= 2 ? fine[i] : coarse[i];

    nn::SplitSpec spec;
    spec.classifier = true;  // a single-member cell cannot be split
    return nn::split_dataset(strata, spec, cfg.seed);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

FaultLocator train_pipeline(const FeatureDataset& ds, const PipelineConfig& cfg) {
    if (ds.records.size() < 10) fail_validation("training needs at least 10 records");
    const nn::SplitIndices split = pipeline_split(ds, cfg);

    FaultLocator locator;
    locator.cfg = cfg;
    locator.dataset_digest = ds.source_digest;
    for (std::size_t i : split.train) locator.train_ids.insert(ds.records[i].id);
    for (std::size_t i : split.val) locator.val_ids.insert(ds.records[i].id);
    for (std::size_t i : split.test) locator.test_ids.insert(ds.records[i].id);

    std::vector<char> in_train(ds.records.size(), 0), in_val(ds.records.size(), 0);
    for (std::size_t i : split.train) in_train[i] = 1;
    for (std::size_t i : split.val) in_val[i] = 1;

    struct NetJob {
        std::string key;       // map key
        std::string name;      // display name
        std::string spec;
        bool classifier = false;
        int hidden = 10;
        std::vector<int> classes;
        std::function<int(const FeatureRecord&)> label_of;
        std::vector<std::size_t> train_rows, val_rows;
        std::size_t data_size = 0;
        bool is_phase = false;
        bool is_distance = false;
    };
    std::vector<NetJob> jobs;

    auto subset_rows = [&](const std::function<bool(const FeatureRecord&)>& pred) {
        SubsetRows r;
        std::size_t total = 0;
        for (std::size_t i = 0; i < ds.records.size(); ++i) {
            if (!pred(ds.records[i])) continue;
            ++total;
            if (in_train[i]) r.train.push_back(i);
            else if (in_val[i]) r.val.push_back(i);
        }
        return std::pair<SubsetRows, std::size_t>(std::move(r), total);
    };

    // phase classifier over everything
    {
        auto [rows, total] = subset_rows([](const FeatureRecord&) { return true; });
        NetJob j;
        j.key = "Ph";
        j.name = "Ph";
        j.spec = feats::phase_spec_name();
        j.classifier = true;
        j.is_phase = true;
        j.hidden = 10;
        j.classes = {0, 1, 2, 3, 4, 5, 6};
        j.label_of = [](const FeatureRecord& r) { return r.scenario.faulted_phases.class_index(); };
        j.train_rows = rows.train;
        j.val_rows = rows.val;
        j.data_size = total;
        jobs.push_back(std::move(j));
    }

    if (!cfg.single_ann) {
        for (const auto& type : net::PhaseSet::all_combinations()) {
            const std::string tname = type.name();
            auto [rows, total] = subset_rows([&](const FeatureRecord& r) {
                return r.scenario.faulted_phases == type;
            });
            if (total == 0) {
                locator.absent.push_back("D-" + tname);
                locator.absent.push_back("Pa-" + tname + "-h1");
                locator.absent.push_back("Pa-" + tname + "-h2");
                continue;
            }
            {
                NetJob j;
                j.key = tname;
                j.name = "D-" + tname;
                j.spec = feats::distance_spec_name(type);
                j.is_distance = true;
                j.hidden = distance_hidden(tname);
                j.train_rows = rows.train;
                j.val_rows = rows.val;
                j.data_size = total;
                jobs.push_back(std::move(j));
            }
            for (int g : {1, 2}) {
                auto [prows, ptotal] = subset_rows([&](const FeatureRecord& r) {
                    const int tg = r.scenario.distance_m <= cfg.h_boundary_m ? 1 : 2;
                    return r.scenario.faulted_phases == type && tg == g;
                });
                const std::string pname = "Pa-" + tname + "-h" + std::to_string(g);
                if (ptotal == 0 || prows.train.empty()) {
                    locator.absent.push_back(pname);
                    continue;
                }
                // classes restricted to paths the net will actually see in training
                std::set<int> present;
                for (std::size_t r : prows.train) present.insert(ds.records[r].scenario.path_id);
                std::vector<int> classes;
                for (int c : group_classes(g))
                    if (present.count(c)) classes.push_back(c);
                if (classes.empty()) {
                    locator.absent.push_back(pname);
                    continue;
                }
                NetJob j;
                j.key = tname + "-h" + std::to_string(g);
                j.name = pname;
                j.spec = feats::path_spec_name(type, g);
                j.classifier = true;
                j.hidden = path_hidden(tname);
                j.classes = classes;
                j.label_of = [](const FeatureRecord& r) { return r.scenario.path_id; };
                j.train_rows = prows.train;
                j.val_rows = prows.val;
                j.data_size = ptotal;
                jobs.push_back(std::move(j));
            }
        }
    } else {
        auto [rows, total] = subset_rows([](const FeatureRecord&) { return true; });
        {
            NetJob j;
            j.key = "single";
            j.name = "D-single";
            j.spec = "Ofd-ABC";
            j.is_distance = true;
            j.hidden = distance_hidden("single");
            j.train_rows = rows.train;
            j.val_rows = rows.val;
            j.data_size = total;
            jobs.push_back(std::move(j));
        }
        {
            std::set<int> present;
            for (std::size_t r : rows.train) present.insert(ds.records[r].scenario.path_id);
            NetJob j;
            j.key = "single";
            j.name = "Pa-single";
            j.spec = "Ofp-ABC-H1";  // the H1/H2 feature lists coincide for abc
            j.classifier = true;
            j.hidden = path_hidden("single");
            j.classes.assign(present.begin(), present.end());
            j.label_of = [](const FeatureRecord& r) { return r.scenario.path_id; };
            j.train_rows = rows.train;
            j.val_rows = rows.val;
            j.data_size = total;
            jobs.push_back(std::move(j));
        }
    }

    for (const auto& j : jobs)
        if (j.train_rows.empty())
            fail_data("starved cell: net " + j.name + " has no training records");

    // the trainings are independent; run them in parallel
    std::vector<TrainedNet> trained(jobs.size());
    std::vector<std::string> train_errors(jobs.size());
    par::parallel_for(jobs.size(), [&](std::size_t ji) {
        try {
            const NetJob& j = jobs[ji];
            TrainedNet tn;
            tn.name = j.name;
            tn.spec_name = j.spec;
            tn.seed = rng::derive_seed(cfg.seed, j.name);
            tn.data_size = j.data_size;
            tn.x_scaler = fit_scaler(ds, j.train_rows, j.spec);
            tn.arch.input = static_cast<int>(tn.x_scaler.mean.size());
            tn.arch.hidden = j.hidden;

            nn::TrainOptions opts = j.classifier ? cfg.scg_opts : cfg.lm_opts;
            opts.seed = tn.seed;

            if (j.classifier) {
                tn.classes = j.classes;
                tn.arch.output = static_cast<int>(j.classes.size());
                tn.arch.out_act = nn::OutputActivation::softmax;
                std::vector<double> weights;
                if (cfg.class_weighting) {
                    std::vector<std::size_t> counts(j.classes.size(), 0);
                    for (std::size_t r : j.train_rows) {
                        const int label = j.label_of(ds.records[r]);
                        const auto it = std::find(j.classes.begin(), j.classes.end(), label);
                        ++counts[static_cast<std::size_t>(it - j.classes.begin())];
                    }
                    for (std::size_t c = 0; c < j.classes.size(); ++c)
                        weights.push_back(counts[c] ? static_cast<double>(j.train_rows.size()) /
                                                          (static_cast<double>(j.classes.size()) *
                                                           static_cast<double>(counts[c]))
                                                    : 1.0);
                }
                const nn::Dataset train = make_classifier_dataset(ds, j.train_rows, tn.x_scaler,
                                                                  j.spec, j.classes, j.label_of,
                                                                  weights);
                const nn::Dataset val = make_classifier_dataset(ds, j.val_rows, tn.x_scaler,
                                                                j.spec, j.classes, j.label_of, {});
                const nn::TrainResult res = nn::train_scg(tn.arch, train, val, opts);
                tn.params = res.params;
                tn.trace = res.trace;
            } else {
                tn.arch.output = 1;
                tn.arch.out_act = nn::OutputActivation::identity;
                double mean = 0, sq = 0;
                for (std::size_t r : j.train_rows) mean += ds.records[r].scenario.distance_m;
                mean /= static_cast<double>(j.train_rows.size());
                for (std::size_t r : j.train_rows) {
                    const double d = ds.records[r].scenario.distance_m - mean;
                    sq += d * d;
                }
                double stddev = std::sqrt(sq / static_cast<double>(j.train_rows.size()));
                if (stddev <= 0) stddev = 1.0;
                tn.y_mean = mean;
                tn.y_std = stddev;
                const nn::Dataset train =
                    make_regressor_dataset(ds, j.train_rows, tn.x_scaler, j.spec, mean, stddev);
                const nn::Dataset val =
                    make_regressor_dataset(ds, j.val_rows, tn.x_scaler, j.spec, mean, stddev);
                const nn::TrainResult res = nn::train_lm(tn.arch, train, val, opts);
                tn.params = res.params;
                tn.trace = res.trace;
            }
            trained[ji] = std::move(tn);
        } catch (const std::exception& e) {
            train_errors[ji] = e.what();
        }
    });
    for (std::size_t ji = 0; ji < jobs.size(); ++ji)
        if (!train_errors[ji].empty())
            fail_data("training " + jobs[ji].name + " failed: " + train_errors[ji]);

    for (std::size_t ji = 0; ji < jobs.size(); ++ji) {
        const NetJob& j = jobs[ji];
        if (j.is_phase)
            locator.phase_net = std::move(trained[ji]);
        else if (j.is_distance)
            locator.distance_nets.emplace(j.key, std::move(trained[ji]));
        else
            locator.path_nets.emplace(j.key, std::move(trained[ji]));
    }
    return locator;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd net_output(const TrainedNet& net, const FeatureRecord& rec) {
    const auto it = rec.by_spec.find(net.spec_name);
    if (it == rec.by_spec.end())
        fail_data("record " + rec.id + " lacks features for spec " + net.spec_name);
    const auto x = net.x_scaler.transform(it->second);
    return nn::forward(net.params, net.arch, to_vec(x));
}

const TrainedNet& pick_net(const std::map<std::string, TrainedNet>& nets, const std::string& key,
                           const std::string& what) {
    const auto it = nets.find(key);
    if (it == nets.end()) fail_data("no trained " + what + " net for '" + key + "'");
    return it->second;
}

PredictionResult locate_impl(const FaultLocator& locator, const FeatureRecord& record,
                             bool oracle_routing) {
    if (!locator.phase_net) fail_data("locator has no phase net");
    PredictionResult out;

    const Eigen::VectorXd phase_probs = net_output(*locator.phase_net, record);
    out.phase_probs.assign(phase_probs.data(), phase_probs.data() + phase_probs.size());
    const int phase_cls = locator.phase_net->classes[static_cast<std::size_t>(argmax(phase_probs))];
    out.fault_type = oracle_routing ? record.scenario.faulted_phases
                                    : net::PhaseSet::from_class_index(phase_cls);

    const bool single = locator.cfg.single_ann;
    const std::string dkey = single ? "single" : out.fault_type.name();
    const TrainedNet& dnet = pick_net(locator.distance_nets, dkey, "distance");
    const Eigen::VectorXd y = net_output(dnet, record);
    out.distance_raw_m = y(0) * dnet.y_std + dnet.y_mean;
    out.distance_m = std::clamp(out.distance_raw_m, 0.0, locator.cfg.max_distance_m);
    out.distance_net = dnet.name;

    const double routing_distance = oracle_routing ? record.scenario.distance_m : out.distance_m;
    out.group = routing_distance <= locator.cfg.h_boundary_m ? 1 : 2;

    const std::string pkey = single ? "single" : out.fault_type.name() + "-h" + std::to_string(out.group);
    const TrainedNet& pnet = pick_net(locator.path_nets, pkey, "path");
    const Eigen::VectorXd path_probs = net_output(pnet, record);
    out.path_probs.assign(path_probs.data(), path_probs.data() + path_probs.size());
    out.path_classes = pnet.classes;
    out.path_id = pnet.classes[static_cast<std::size_t>(argmax(path_probs))];
    out.path_net = pnet.name;
    return out;
}

}  // namespace

PredictionResult locate(const FaultLocator& locator, const FeatureRecord& record) {
    return locate_impl(locator, record, false);
}

PredictionResult locate_oracle_routing(const FaultLocator& locator, const FeatureRecord& record) {
    return locate_impl(locator, record, true);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double relative_distance_error(double predicted_m, double true_m, double l_m) {
    if (l_m <= 0) fail_validation("normalization length must be > 0");
    return std::abs(predicted_m - true_m) / l_m;
}

EvaluationReport evaluate(const FaultLocator& locator, const FeatureDataset& testset,
                          bool allow_overlap) {
    if (testset.records.empty()) fail_data("empty test set");
    if (!allow_overlap) {
        std::size_t shared = 0;
        for (const auto& r : testset.records)
            if (locator.train_ids.count(r.id) || locator.val_ids.count(r.id)) ++shared;
        if (shared > 0)
            fail_data("train/test overlap: " + std::to_string(shared) +
                      " record(s) were used to fit this locator; evaluate on the held-out "
                      "split or a disjoint dataset");
    }

    EvaluationReport rep;
    rep.count = testset.records.size();
    rep.outcomes.resize(rep.count);
    const double l_m = locator.cfg.max_distance_m;

    par::parallel_for(rep.count, [&](std::size_t i) {
        const FeatureRecord& rec = testset.records[i];
        RecordOutcome& oc = rep.outcomes[i];
        oc.id = rec.id;
        oc.truth = rec.scenario;
        oc.true_group = locator.true_group(rec.scenario.distance_m);
        oc.pred = locate(locator, rec);
        oc.oracle = locate_oracle_routing(locator, rec);
        oc.e_rel = relative_distance_error(oc.pred.distance_m, rec.scenario.distance_m, l_m);
        oc.oracle_e_rel =
            relative_distance_error(oc.oracle.distance_m, rec.scenario.distance_m, l_m);
        oc.phase_correct = oc.pred.fault_type == rec.scenario.faulted_phases;
        oc.path_correct = oc.pred.path_id == rec.scenario.path_id;
        oc.oracle_path_correct = oc.oracle.path_id == rec.scenario.path_id;
    });

    rep.phase_confusion.assign(7, std::vector<std::size_t>(7, 0));
    rep.path_confusion.assign(6, std::vector<std::size_t>(6, 0));
    std::size_t phase_ok = 0, path_ok = 0, oracle_path_ok = 0;
    double erel_sum = 0, oracle_erel_sum = 0;
    std::map<std::string, std::pair<double, std::size_t>> type_acc;
    std::map<std::string, std::pair<std::size_t, std::size_t>> pathnet_acc;
    for (const auto& oc : rep.outcomes) {
        phase_ok += oc.phase_correct;
        path_ok += oc.path_correct;
        oracle_path_ok += oc.oracle_path_correct;
        erel_sum += oc.e_rel;
        oracle_erel_sum += oc.oracle_e_rel;
        rep.phase_confusion[static_cast<std::size_t>(oc.truth.faulted_phases.class_index())]
                           [static_cast<std::size_t>(oc.pred.fault_type.class_index())]++;
        rep.path_confusion[static_cast<std::size_t>(oc.truth.path_id - 1)]
                          [static_cast<std::size_t>(oc.pred.path_id - 1)]++;
        auto& ta = type_acc[oc.pred.distance_net];
        ta.first += oc.e_rel;
        ta.second += 1;
        auto& pa = pathnet_acc[oc.pred.path_net];
        pa.first += oc.path_correct ? 1u : 0u;
        pa.second += 1;
    }
    const double n = static_cast<double>(rep.count);
    rep.phase_accuracy = static_cast<double>(phase_ok) / n;
    rep.path_accuracy = static_cast<double>(path_ok) / n;
    rep.oracle_path_accuracy = static_cast<double>(oracle_path_ok) / n;
    rep.total_mean_erel = erel_sum / n;
    rep.oracle_mean_erel = oracle_erel_sum / n;
    for (const auto& [k, v] : type_acc)
        rep.per_type_erel[k] = {v.first / static_cast<double>(v.second), v.second};
    for (const auto& [k, v] : pathnet_acc)
        rep.per_pathnet_accuracy[k] = {static_cast<double>(v.first) / static_cast<double>(v.second),
                                       v.second};
    return rep;
}

EvaluationReport robustness_eval(const FaultLocator& locator, const FeatureDataset& alt) {
    return evaluate(locator, alt, false);
}

// ---------------------------------------------------------------------------
// Correlation error analysis
// ---------------------------------------------------------------------------

CorrelationStats correlation_error_analysis(const EvaluationReport& report) {
    CorrelationStats cs;
    cs.count = report.count;
    std::size_t phce_and_pce = 0;
    double erel_phce = 0, erel_nophce = 0;
    std::size_t nophce = 0;
    std::size_t pacc_phce = 0, pacc_pce = 0, pacc_both = 0, pacc_clean = 0, clean = 0;
    for (const auto& oc : report.outcomes) {
        const bool phce = !oc.phase_correct;
        const bool pce = oc.pred.group != oc.true_group;
        cs.phce_count += phce;
        cs.pce_count += pce;
        if (phce && pce) {
            ++cs.both_count;
            ++phce_and_pce;
            pacc_both += oc.path_correct;
        }
        if (phce) {
            erel_phce += oc.e_rel;
            pacc_phce += oc.path_correct;
        } else {
            erel_nophce += oc.e_rel;
            ++nophce;
        }
        if (pce) pacc_pce += oc.path_correct;
        if (!phce && !pce) {
            ++clean;
            pacc_clean += oc.path_correct;
        }
    }
    const double n = static_cast<double>(cs.count);
    cs.phce_rate = static_cast<double>(cs.phce_count) / n;
    cs.pce_rate = static_cast<double>(cs.pce_count) / n;
    auto ratio = [](std::size_t num, std::size_t den) {
        return GroupStat{den ? static_cast<double>(num) / static_cast<double>(den) : 0.0, den};
    };
    cs.phce_leading_to_pce = ratio(phce_and_pce, cs.phce_count);
    cs.erel_given_phce =
        GroupStat{cs.phce_count ? erel_phce / static_cast<double>(cs.phce_count) : 0.0,
                  cs.phce_count};
    cs.erel_without_phce = GroupStat{nophce ? erel_nophce / static_cast<double>(nophce) : 0.0, nophce};
    cs.path_acc_given_phce = ratio(pacc_phce, cs.phce_count);
    cs.path_acc_given_pce = ratio(pacc_pce, cs.pce_count);
    cs.path_acc_given_both = ratio(pacc_both, cs.both_count);
    cs.path_acc_without_errors = ratio(pacc_clean, clean);
    cs.oracle_path_accuracy = report.oracle_path_accuracy;
    cs.oracle_mean_erel = report.oracle_mean_erel;
    return cs;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

AblationResult ablation_single_vs_multiple(const FeatureDataset& ds, const PipelineConfig& cfg) {
    PipelineConfig multi_cfg = cfg;
    multi_cfg.single_ann = false;
    PipelineConfig single_cfg = cfg;
    single_cfg.single_ann = true;

    const FaultLocator multi = train_pipeline(ds, multi_cfg);
    const FaultLocator single = train_pipeline(ds, single_cfg);

    FeatureDataset test;
    test.fs = ds.fs;
    test.source_digest = ds.source_digest;
    for (const auto& r : ds.records)
        if (multi.test_ids.count(r.id)) test.records.push_back(r);

    AblationResult out;
    out.multiple = evaluate(multi, test);
    out.single = evaluate(single, test);
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {
std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v * 100.0 << "%";
    return os.str();
}
}  // namespace

std::string EvaluationReport::render_table() const {
    std::ostringstream os;
    os << std::left;
    os << std::setw(14) << "ANN" << std::setw(16) << "Classification" << std::setw(14)
       << "Mean e_rel" << "Total\n";
    os << std::string(52, '-') << '\n';
    os << "Faulted Phase Classification\n";
    os << std::setw(14) << "Ph" << std::setw(16) << pct(phase_accuracy) << std::setw(14) << "n/a"
       << pct(phase_accuracy) << '\n';
    os << "Fault Distance Regression\n";
    for (const auto& [name, st] : per_type_erel)
        os << std::setw(14) << name << std::setw(16) << "n/a" << std::setw(14) << pct(st.value)
           << '\n';
    os << std::setw(14) << "(total)" << std::setw(16) << "" << std::setw(14) << ""
       << pct(total_mean_erel) << '\n';
    os << "Faulted Path Classification\n";
    for (const auto& [name, st] : per_pathnet_accuracy)
        os << std::setw(14) << name << std::setw(16) << pct(st.value) << std::setw(14) << "n/a"
           << '\n';
    os << std::setw(14) << "(total)" << std::setw(16) << "" << std::setw(14) << ""
       << pct(path_accuracy) << '\n';
    return os.str();
}

std::string EvaluationReport::to_json() const {
    json j;
    j["count"] = count;
    j["phase_accuracy"] = phase_accuracy;
    j["total_mean_erel"] = total_mean_erel;
    j["path_accuracy"] = path_accuracy;
    j["oracle_path_accuracy"] = oracle_path_accuracy;
    j["oracle_mean_erel"] = oracle_mean_erel;
    j["per_type_erel"] = json::object();
    for (const auto& [k, v] : per_type_erel)
        j["per_type_erel"][k] = {{"mean_erel", v.value}, {"count", v.count}};
    j["per_pathnet_accuracy"] = json::object();
    for (const auto& [k, v] : per_pathnet_accuracy)
        j["per_pathnet_accuracy"][k] = {{"accuracy", v.value}, {"count", v.count}};
    j["phase_confusion"] = phase_confusion;
    j["path_confusion"] = path_confusion;
    return j.dump(1);
}

std::string CorrelationStats::render_table() const {
    std::ostringstream os;
    auto line = [&os](const std::string& label, const std::string& value) {
        os << std::left << std::setw(52) << label << value << '\n';
    };
    line("Dataset samples", std::to_string(count));
    line("% of PhCE", pct(phce_rate));
    line("% of PCE", pct(pce_rate));
    line("% of PhCE leading to PCE / cases",
         pct(phce_leading_to_pce.value) + " / " + std::to_string(phce_leading_to_pce.count));
    line("Mean e_rel in case of PhCE / cases",
         pct(erel_given_phce.value) + " / " + std::to_string(erel_given_phce.count));
    line("Potential mean e_rel without PhCE / cases",
         pct(erel_without_phce.value) + " / " + std::to_string(erel_without_phce.count));
    line("Faulted path accuracy in case of PhCE / cases",
         pct(path_acc_given_phce.value) + " / " + std::to_string(path_acc_given_phce.count));
    line("Faulted path accuracy in case of PCE / cases",
         pct(path_acc_given_pce.value) + " / " + std::to_string(path_acc_given_pce.count));
    line("Faulted path accuracy with both / cases",
         pct(path_acc_given_both.value) + " / " + std::to_string(path_acc_given_both.count));
    line("Potential path accuracy without correlation errors / cases",
         pct(path_acc_without_errors.value) + " / " + std::to_string(path_acc_without_errors.count));
    line("Oracle-routing path accuracy", pct(oracle_path_accuracy));
    line("Oracle-routing mean e_rel", pct(oracle_mean_erel));
    return os.str();
}

std::string CorrelationStats::to_json() const {
    json j;
    j["count"] = count;
    j["phce_rate"] = phce_rate;
    j["pce_rate"] = pce_rate;
    j["phce_count"] = phce_count;
    j["pce_count"] = pce_count;
    j["both_count"] = both_count;
    j["phce_leading_to_pce"] = {{"value", phce_leading_to_pce.value},
                                {"count", phce_leading_to_pce.count}};
    j["erel_given_phce"] = {{"value", erel_given_phce.value}, {"count", erel_given_phce.count}};
    j["erel_without_phce"] = {{"value", erel_without_phce.value},
                              {"count", erel_without_phce.count}};
    j["path_acc_given_phce"] = {{"value", path_acc_given_phce.value},
                                {"count", path_acc_given_phce.count}};
    j["path_acc_given_pce"] = {{"value", path_acc_given_pce.value},
                               {"count", path_acc_given_pce.count}};
    j["path_acc_given_both"] = {{"value", path_acc_given_both.value},
                                {"count", path_acc_given_both.count}};
    j["path_acc_without_errors"] = {{"value", path_acc_without_errors.value},
                                    {"count", path_acc_without_errors.count}};
    j["oracle_path_accuracy"] = oracle_path_accuracy;
    j["oracle_mean_erel"] = oracle_mean_erel;
    return j.dump(1);
}

std::string AblationResult::render_table() const {
    std::ostringstream os;
    os << std::left << std::setw(34) << "Prediction Type" << std::setw(16) << "Multiple ANN"
       << "Single ANN\n";
    os << std::string(60, '-') << '\n';
    os << std::setw(34) << "Faulted Phase Total Classification" << std::setw(16)
       << pct(multiple.phase_accuracy) << pct(single.phase_accuracy) << '\n';
    os << std::setw(34) << "Fault Distance Total Mean e_rel" << std::setw(16)
       << pct(multiple.total_mean_erel) << pct(single.total_mean_erel) << '\n';
    os << std::setw(34) << "Faulted Path Total Classification" << std::setw(16)
       << pct(multiple.path_accuracy) << pct(single.path_accuracy) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kNetMagic = 0x4e4e4c46;  // "FLNN"
constexpr std::uint32_t kNetVersion = 1;

void put_str(std::ostream& os, const std::string& s) {
    const std::uint32_t n = static_cast<std::uint32_t>(s.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_str(std::istream& is) {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || n > (1u << 20)) fail_data("corrupt model file (string)");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) fail_data("corrupt model file (string body)");
    return s;
}

template <typename T>
void put_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) fail_data("corrupt model file (scalar)");
    return v;
}

void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    put_pod<std::uint64_t>(os, n);
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> take_doubles(std::istream& is) {
    const std::uint64_t n = take_pod<std::uint64_t>(is);
    if (n > (1ull << 28)) fail_data("corrupt model file (array)");
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) fail_data("corrupt model file (array body)");
    return v;
}

void save_net(const TrainedNet& net, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) fail_data("cannot write model file " + file.string());
    put_pod(os, kNetMagic);
    put_pod(os, kNetVersion);
    put_str(os, net.name);
    put_str(os, net.spec_name);
    put_pod<std::int32_t>(os, net.arch.input);
    put_pod<std::int32_t>(os, net.arch.hidden);
    put_pod<std::int32_t>(os, net.arch.output);
    put_pod<std::uint8_t>(os, net.arch.out_act == nn::OutputActivation::softmax ? 1 : 0);
    put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(net.classes.size()));
    for (int c : net.classes) put_pod<std::int32_t>(os, c);
    put_doubles(os, net.x_scaler.mean.data(), net.x_scaler.mean.size());
    put_doubles(os, net.x_scaler.sigma.data(), net.x_scaler.sigma.size());
    put_pod(os, net.y_mean);
    put_pod(os, net.y_std);
    const Eigen::VectorXd theta = net.params.flatten();
    put_doubles(os, theta.data(), static_cast<std::size_t>(theta.size()));
    put_pod(os, net.seed);
    put_pod(os, net.trace.digest());
    put_pod<std::uint64_t>(os, net.data_size);
    put_str(os, net.trace.stop_reason);
    put_pod<std::int32_t>(os, net.trace.best_epoch);
    put_pod<double>(os, net.trace.train_loss.empty() ? 0.0 : net.trace.train_loss.back());
    put_pod<double>(os, net.trace.val_loss.empty() ? 0.0 : net.trace.val_loss.back());
    if (!os) fail_data("short write on model file " + file.string());
}

TrainedNet load_net(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) fail_data("cannot open model file " + file.string());
    if (take_pod<std::uint32_t>(is) != kNetMagic) fail_data("not a model file: " + file.string());
    if (take_pod<std::uint32_t>(is) != kNetVersion)
        fail_data("unsupported model version in " + file.string());
    TrainedNet net;
    net.name = take_str(is);
    net.spec_name = take_str(is);
    net.arch.input = take_pod<std::int32_t>(is);
    net.arch.hidden = take_pod<std::int32_t>(is);
    net.arch.output = take_pod<std::int32_t>(is);
    net.arch.out_act = take_pod<std::uint8_t>(is) ? nn::OutputActivation::softmax
                                                  : nn::OutputActivation::identity;
    const std::uint32_t ncls = take_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < ncls; ++i) net.classes.push_back(take_pod<std::int32_t>(is));
    net.x_scaler.mean = take_doubles(is);
    net.x_scaler.sigma = take_doubles(is);
    net.y_mean = take_pod<double>(is);
    net.y_std = take_pod<double>(is);
    const std::vector<double> theta = take_doubles(is);
    net.params = nn::MlpParams::unflatten(
        net.arch, Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                    static_cast<Eigen::Index>(theta.size())));
    net.seed = take_pod<std::uint64_t>(is);
    take_pod<std::uint64_t>(is);  // trace digest, informational
    net.data_size = take_pod<std::uint64_t>(is);
    net.trace.stop_reason = take_str(is);
    net.trace.best_epoch = take_pod<std::int32_t>(is);
    take_pod<double>(is);
    take_pod<double>(is);
    return net;
}

std::string net_filename(const std::string& name) {
    std::string f = "net_";
    for (char c : name) f += (c == '/' ? '_' : c);
    return f + ".flnn";
}

}  // namespace

void save_locator(const FaultLocator& locator, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json j;
    j["schema"] = "faultloc-locator/1";
    j["mode"] = locator.cfg.single_ann ? "single-ann" : "multiple-ann";
    j["seed"] = locator.cfg.seed;
    j["h_boundary_m"] = locator.cfg.h_boundary_m;
    j["max_distance_m"] = locator.cfg.max_distance_m;
    j["class_weighting"] = locator.cfg.class_weighting;
    j["dataset_digest"] = locator.dataset_digest;
    j["created_at"] = io::current_timestamp();
    j["absent"] = locator.absent;
    j["nets"] = json::object();
    auto save_one = [&](const std::string& kind, const std::string& key, const TrainedNet& net) {
        const std::string file = net_filename(net.name);
        save_net(net, dir / file);
        j["nets"][kind + ":" + key] = file;
    };
    if (locator.phase_net) save_one("phase", "Ph", *locator.phase_net);
    for (const auto& [k, v] : locator.distance_nets) save_one("distance", k, v);
    for (const auto& [k, v] : locator.path_nets) save_one("path", k, v);
    j["train_ids"] = std::vector<std::string>(locator.train_ids.begin(), locator.train_ids.end());
    j["val_ids"] = std::vector<std::string>(locator.val_ids.begin(), locator.val_ids.end());
    j["test_ids"] = std::vector<std::string>(locator.test_ids.begin(), locator.test_ids.end());
    std::ofstream os(dir / "locator.json");
    if (!os) fail_data("cannot write locator manifest in " + dir.string());
    os << j.dump(1) << '\n';
}

FaultLocator load_locator(const std::filesystem::path& dir) {
    std::ifstream is(dir / "locator.json");
    if (!is) fail_data("no locator manifest in " + dir.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        fail_data(std::string("locator manifest parse error: ") + e.what());
    }
    FaultLocator loc;
    try {
        if (j.at("schema") != "faultloc-locator/1") fail_data("unsupported locator schema");
        loc.cfg.single_ann = j.at("mode") == "single-ann";
        loc.cfg.seed = j.at("seed");
        loc.cfg.h_boundary_m = j.at("h_boundary_m");
        loc.cfg.max_distance_m = j.at("max_distance_m");
        loc.cfg.class_weighting = j.value("class_weighting", false);
        loc.dataset_digest = j.at("dataset_digest");
        for (const auto& a : j.at("absent")) loc.absent.push_back(a);
        for (const auto& [key, file] : j.at("nets").items()) {
            const auto colon = key.find(':');
            const std::string kind = key.substr(0, colon);
            const std::string net_key = key.substr(colon + 1);
            TrainedNet net = load_net(dir / file.get<std::string>());
            if (kind == "phase")
                loc.phase_net = std::move(net);
            else if (kind == "distance")
                loc.distance_nets.emplace(net_key, std::move(net));
            else if (kind == "path")
                loc.path_nets.emplace(net_key, std::move(net));
            else
                fail_data("unknown net kind '" + kind + "' in locator manifest");
        }
        for (const auto& s : j.at("train_ids")) loc.train_ids.insert(s.get<std::string>());
        for (const auto& s : j.at("val_ids")) loc.val_ids.insert(s.get<std::string>());
        for (const auto& s : j.at("test_ids")) loc.test_ids.insert(s.get<std::string>());
    } catch (const json::exception& e) {
        fail_data(std::string("locator manifest field error: ") + e.what());
    }
    return loc;
}

}  // namespace faultloc::pipeline
