#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "faultloc/wavelet.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "faultloc/dataset_io.hpp"
#include "faultloc/errors.hpp"
#include "faultloc/parallel.hpp"
#include "faultloc/pipeline.hpp"
#include "faultloc/presets.hpp"
#include "faultloc/rng.hpp"
#include "faultloc/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace faultloc;

namespace {

fs::path resolve_out(const std::string& out, const std::string& fallback_name) {
    if (!out.empty()) return out;
    if (const char* root = std::getenv("FAULTLOC_DATA_DIR")) return fs::path(root) / fallback_name;
    fail_usage("no output directory: pass --out or set FAULTLOC_DATA_DIR");
}

void write_run_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                        const std::vector<std::string>& inputs, std::uint64_t config_digest) {
    json j;
    j["schema"] = "faultloc-run/1";
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["config_digest"] = config_digest;
    j["created_at"] = io::current_timestamp();
    std::ofstream os(dir / "run_manifest.json");
    os << j.dump(1) << '\n';
}

net::NetworkModel load_model(const std::string& config) {
    return config.empty() ? net::default_network() : net::load_network(config);
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string config, out, robustness;
    bool desk = false, paper = false, dry_run = false;
    std::uint64_t seed = 1;
    std::vector<double> dg, zf, angles;
    double spacing = -1, fs = -1, duration = -1, load_scale = -1;
};

int cmd_generate(const GenerateArgs& a) {
    if (a.desk && a.paper) fail_usage("--desk-scale and --paper-scale are mutually exclusive");
    const net::NetworkModel model = load_model(a.config);
    presets::Preset preset = a.paper ? presets::paper_preset() : presets::desk_preset();
    if (!a.robustness.empty()) {
        if (a.robustness == "dataset1")
            preset = presets::robustness_dataset1(preset);
        else if (a.robustness == "dataset2")
            preset = presets::robustness_dataset2(preset);
        else
            fail_usage("--robustness expects dataset1 or dataset2");
    }
    if (!a.dg.empty()) preset.grid.dg_levels = a.dg;
    if (!a.zf.empty()) preset.grid.impedances_ohm = a.zf;
    if (!a.angles.empty()) preset.grid.angles_deg = a.angles;
    if (!a.zf.empty() || !a.angles.empty())
        preset.grid.zf_angle_pairs.clear();  // explicit axes replace pair recipes
    if (a.spacing > 0) preset.grid.spacing_m = a.spacing;
    if (a.load_scale > 0) preset.grid.load_scale = a.load_scale;
    if (a.fs > 0) preset.sim.sampling_frequency_hz = a.fs;
    if (a.duration > 0) preset.sim.duration_s = a.duration;
    if (preset.grid.impedances_ohm.empty() && preset.grid.zf_angle_pairs.empty())
        fail_usage("fault impedance list must be non-empty");
    if (preset.grid.angles_deg.empty() && preset.grid.zf_angle_pairs.empty())
        fail_usage("inception angle list must be non-empty");
    preset.sim.validate();

    const auto locations = net::enumerate_fault_locations(model, preset.grid.spacing_m);
    const auto scenarios = preset.grid.expand(model);
    std::cout << "preset: " << preset.name << "\n"
              << "scenarios: " << preset.grid.scenario_count() << "\n"
              << "locations: " << locations.size() << "\n"
              << "records: " << scenarios.size() << "\n";
    if (a.dry_run) return 0;

    const fs::path out = resolve_out(a.out, "dataset-" + preset.name);
    fs::create_directories(out);

    io::DatasetManifest manifest;
    manifest.seed = a.seed;
    manifest.fs = preset.sim.sampling_frequency_hz;
    manifest.duration_s = preset.sim.duration_s;
    manifest.sections_per_km = preset.sim.sections_per_km;
    manifest.grid_description = preset.grid.describe();
    manifest.created_at = io::current_timestamp();
    manifest.digest = io::dataset_digest(scenarios, preset.sim);
    manifest.records.resize(scenarios.size());

    std::vector<std::string> errors(scenarios.size());
    par::parallel_for(scenarios.size(), [&](std::size_t i) {
        try {
            const auto rec = emt::simulate_fault(model, scenarios[i], preset.sim);
            const std::string id = scenarios[i].id();
            const std::string file = id + ".flwf";
            io::write_record(rec, out / file);
            manifest.records[i] = {id, file, scenarios[i]};
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            fail_numerical("simulation of " + scenarios[i].id() + " failed: " + errors[i]);

    io::write_dataset_manifest(manifest, out);
    write_run_manifest(out, "generate", a.seed, {a.config.empty() ? "<default-network>" : a.config},
                       manifest.digest);
    std::cout << "wrote " << scenarios.size() << " records to " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string dataset, out, mode = "multiple-ann";
    std::uint64_t seed = 1;
    bool class_weighting = false;
};

int cmd_train(const TrainArgs& a) {
    const fs::path out = resolve_out(a.out, "locator");
    pipeline::PipelineConfig cfg;
    cfg.seed = a.seed;
    cfg.class_weighting = a.class_weighting;
    if (a.mode == "single-ann")
        cfg.single_ann = true;
    else if (a.mode != "multiple-ann")
        fail_usage("--mode expects multiple-ann or single-ann");

    std::cout << "loading dataset " << a.dataset << "\n";
    const pipeline::FeatureDataset ds = pipeline::load_feature_dataset(a.dataset);
    std::cout << "extracted features for " << ds.records.size() << " records\n";

    pipeline::FaultLocator locator;
    try {
        locator = pipeline::train_pipeline(ds, cfg);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::data)
            throw Error(ErrorKind::data,
                        std::string(e.what()) +
                            " (hint: generate at least 2 records per fault-type/path/group cell)");
        throw;
    }

    fs::create_directories(out);
    pipeline::save_locator(locator, out);
    write_run_manifest(out, "train", a.seed, {a.dataset}, locator.dataset_digest);

    std::cout << "trained " << locator.net_count() << " networks (mode " << a.mode << ")\n";
    auto show = [](const pipeline::TrainedNet& n) {
        std::cout << "  " << n.name << ": data=" << n.data_size << " P=" << n.arch.input
                  << " Q=" << n.arch.hidden << " T=" << n.arch.output
                  << " stop=" << n.trace.stop_reason << " best_epoch=" << n.trace.best_epoch
                  << "\n";
    };
    if (locator.phase_net) show(*locator.phase_net);
    for (const auto& [k, v] : locator.distance_nets) show(v);
    for (const auto& [k, v] : locator.path_nets) show(v);
    for (const auto& absent : locator.absent) std::cout << "  " << absent << ": absent (no data)\n";
    std::cout << "locator written to " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string locator, dataset, out, split = "auto";
};

void write_tsv_confusion(const fs::path& file, const std::vector<std::vector<std::size_t>>& m,
                         const std::vector<std::string>& labels) {
    std::ofstream os(file);
    os << "true\\pred";
    for (const auto& l : labels) os << '\t' << l;
    os << '\n';
    for (std::size_t r = 0; r < m.size(); ++r) {
        os << labels[r];
        for (std::size_t c = 0; c < m[r].size(); ++c) os << '\t' << m[r][c];
        os << '\n';
    }
}

void write_plot_data(const fs::path& dir, const pipeline::FeatureDataset& ds,
                     const pipeline::EvaluationReport& rep) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "erel_vs_distance.tsv");
        os << "id\ttype\tpath\ttrue_distance_m\tpredicted_m\te_rel\n";
        for (const auto& oc : rep.outcomes)
            os << oc.id << '\t' << oc.truth.faulted_phases.name() << '\t' << oc.truth.path_id
               << '\t' << oc.truth.distance_m << '\t' << oc.pred.distance_m << '\t' << oc.e_rel
               << '\n';
    }
    std::map<std::string, const pipeline::FeatureRecord*> by_id;
    for (const auto& r : ds.records) by_id[r.id] = &r;
    {
        std::ofstream os(dir / "cd8_variance_vs_distance.tsv");
        os << "id\ttype\tphase\tpath\ttrue_distance_m\tvar_cd8\n";
        for (const auto& oc : rep.outcomes) {
            const auto* rec = by_id.at(oc.id);
            for (int p = 0; p < 3; ++p) {
                if (!oc.truth.faulted_phases.has(p)) continue;
                os << oc.id << '\t' << oc.truth.faulted_phases.name() << '\t'
                   << static_cast<char>('a' + p) << '\t' << oc.truth.path_id << '\t'
                   << oc.truth.distance_m << '\t'
                   << pipeline::faulted_phase_cd8_variance(*rec, p) << '\n';
            }
        }
    }
    {
        std::ofstream os(dir / "skewness_by_path.tsv");
        os << "id\ttype\tphase\tpath\ttrue_distance_m\tskn_v\n";
        for (const auto& oc : rep.outcomes) {
            const auto* rec = by_id.at(oc.id);
            for (int p = 0; p < 3; ++p) {
                if (!oc.truth.faulted_phases.has(p)) continue;
                os << oc.id << '\t' << oc.truth.faulted_phases.name() << '\t'
                   << static_cast<char>('a' + p) << '\t' << oc.truth.path_id << '\t'
                   << oc.truth.distance_m << '\t'
                   << pipeline::faulted_phase_skewness(*rec, p) << '\n';
            }
        }
    }
}

int cmd_evaluate(const EvaluateArgs& a) {
    const fs::path out = resolve_out(a.out, "report");
    const pipeline::FaultLocator locator = pipeline::load_locator(a.locator);
    const pipeline::FeatureDataset ds = pipeline::load_feature_dataset(a.dataset);

    pipeline::FeatureDataset eval;
    eval.fs = ds.fs;
    eval.source_digest = ds.source_digest;
    bool overlap = false;
    for (const auto& r : ds.records)
        if (locator.train_ids.count(r.id) || locator.val_ids.count(r.id)) overlap = true;

    if (a.split == "test" || (a.split == "auto" && overlap)) {
        for (const auto& r : ds.records)
            if (locator.test_ids.count(r.id)) eval.records.push_back(r);
        if (eval.records.empty())
            fail_data("dataset has no held-out records for this locator (split=" + a.split + ")");
    } else if (a.split == "all" || a.split == "auto") {
        eval.records = ds.records;
    } else {
        fail_usage("--split expects auto, test or all");
    }

    const pipeline::EvaluationReport rep = pipeline::evaluate(locator, eval);
    const pipeline::CorrelationStats corr = pipeline::correlation_error_analysis(rep);

    fs::create_directories(out);
    {
        std::ofstream os(out / "report.json");
        os << rep.to_json() << '\n';
    }
    {
        std::ofstream os(out / "report.txt");
        os << rep.render_table();
    }
    {
        std::ofstream os(out / "correlation.json");
        os << corr.to_json() << '\n';
    }
    {
        std::ofstream os(out / "correlation.txt");
        os << corr.render_table();
    }
    write_tsv_confusion(out / "confusion_phase.tsv", rep.phase_confusion,
                        {"a", "b", "c", "ab", "ac", "bc", "abc"});
    write_tsv_confusion(out / "confusion_path.tsv", rep.path_confusion,
                        {"1", "2", "3", "4", "5", "6"});
    write_plot_data(out / "plots", ds, rep);
    write_run_manifest(out, "evaluate", locator.cfg.seed, {a.locator, a.dataset},
                       ds.source_digest);

    std::cout << rep.render_table() << "\n" << corr.render_table();
    std::cout << "report written to " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string locator, waveform, dump_coeffs;
};

int cmd_predict(const PredictArgs& a) {
    const pipeline::FaultLocator locator = pipeline::load_locator(a.locator);
    const emt::WaveformRecord rec = io::read_record(a.waveform);

    const auto t0 = std::chrono::steady_clock::now();
    const pipeline::FeatureRecord features = pipeline::extract_features(rec);
    const pipeline::PredictionResult pred = pipeline::locate(locator, features);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    std::cout << "fault_type: " << pred.fault_type.name() << "\n";
    std::cout << "distance_m: " << pred.distance_m << "\n";
    std::cout << "path: " << pred.path_id << "\n";
    std::cout << "group: h" << pred.group << "\n";
    std::cout << "phase_probs:";
    for (std::size_t i = 0; i < pred.phase_probs.size(); ++i)
        std::cout << ' ' << net::PhaseSet::from_class_index(static_cast<int>(i)).name() << '='
                  << pred.phase_probs[i];
    std::cout << "\npath_probs:";
    for (std::size_t i = 0; i < pred.path_probs.size(); ++i)
        std::cout << " p" << pred.path_classes[i] << '=' << pred.path_probs[i];
    std::cout << "\nnets: " << pred.distance_net << ", " << pred.path_net << "\n";
    std::cout << "inference_ms: " << ms << "\n";

    if (!a.dump_coeffs.empty()) {
        std::ofstream os(a.dump_coeffs);
        os << "channel\tlevel\tindex\tvalue\n";
        for (int ch = 0; ch < 6; ++ch) {
            const auto dec = dwt::dwt_multilevel(rec.channel(ch), dwt::db4(), 8, rec.fs);
            const std::array<std::string, 6> names = {"Va", "Vb", "Vc", "V0", "V1", "V2"};
            for (int level = 1; level <= dec.levels; ++level) {
                const auto& cd = dec.detail(level);
                for (std::size_t i = 0; i < cd.size(); ++i)
                    os << names[static_cast<std::size_t>(ch)] << "\tCD" << level << '\t' << i
                       << '\t' << cd[i] << '\n';
            }
            for (std::size_t i = 0; i < dec.approx.size(); ++i)
                os << names[static_cast<std::size_t>(ch)] << "\tCA" << dec.levels << '\t' << i
                   << '\t' << dec.approx[i] << '\n';
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string dataset, out;
    std::uint64_t seed = 1;
};

int cmd_ablate(const AblateArgs& a) {
    const fs::path out = resolve_out(a.out, "ablation");
    pipeline::PipelineConfig cfg;
    cfg.seed = a.seed;
    const pipeline::FeatureDataset ds = pipeline::load_feature_dataset(a.dataset);
    const pipeline::AblationResult res = pipeline::ablation_single_vs_multiple(ds, cfg);
    fs::create_directories(out);
    {
        std::ofstream os(out / "ablation.txt");
        os << res.render_table();
    }
    {
        json j;
        j["multiple"] = json::parse(res.multiple.to_json());
        j["single"] = json::parse(res.single.to_json());
        std::ofstream os(out / "ablation.json");
        os << j.dump(1) << '\n';
    }
    write_run_manifest(out, "ablate", a.seed, {a.dataset}, ds.source_digest);
    std::cout << res.render_table();
    std::cout << "ablation written to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"faultloc: data-driven ground-fault localization for a radial 20 kV feeder"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    int jobs = 0;
    app.add_option("--jobs", jobs, "worker threads (0 = hardware default, 1 = serial)");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "simulate a fault scenario grid into a dataset");
    gen->add_option("--config", ga.config, "network config file (default: built-in feeder)");
    gen->add_option("--out", ga.out, "output dataset directory");
    gen->add_flag("--desk-scale", ga.desk, "reduced preset: fs 41.875 kHz, 532 records");
    gen->add_flag("--paper-scale", ga.paper, "full preset: fs 0.67 MHz, 6384 records");
    gen->add_option("--robustness", ga.robustness, "dataset1 (new scenarios) or dataset2 (+30% load)");
    gen->add_flag("--dry-run", ga.dry_run, "print counts and exit");
    gen->add_option("--seed", ga.seed, "generation seed (recorded in the manifest)");
    gen->add_option("--dg", ga.dg, "DG penetration levels (fractions)");
    gen->add_option("--zf", ga.zf, "fault impedances (ohm)")->expected(0, -1);
    gen->add_option("--angles", ga.angles, "inception angles (deg)")->expected(0, -1);
    gen->add_option("--spacing", ga.spacing, "fault location spacing (m)");
    gen->add_option("--fs", ga.fs, "sampling frequency (Hz)");
    gen->add_option("--duration", ga.duration, "window length (s)");
    gen->add_option("--load-scale", ga.load_scale, "scale all loads by this factor");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train the staged locator on a dataset");
    tr->add_option("--dataset", ta.dataset, "dataset directory")->required();
    tr->add_option("--out", ta.out, "locator output directory");
    tr->add_option("--mode", ta.mode, "multiple-ann | single-ann");
    tr->add_option("--seed", ta.seed, "training seed");
    tr->add_flag("--class-weighting", ta.class_weighting, "inverse-frequency class weights");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "evaluate a locator on a dataset");
    ev->add_option("--locator", ea.locator, "locator directory")->required();
    ev->add_option("--dataset", ea.dataset, "dataset directory")->required();
    ev->add_option("--out", ea.out, "report output directory");
    ev->add_option("--split", ea.split, "auto | test | all");

    PredictArgs pa;
    auto* pr = app.add_subcommand("predict", "locate a fault from one waveform file");
    pr->add_option("--locator", pa.locator, "locator directory")->required();
    pr->add_option("waveform", pa.waveform, "waveform record file")->required();
    pr->add_option("--dump-coeffs", pa.dump_coeffs, "write DWT coefficients to this TSV file");

    AblateArgs aa;
    auto* ab = app.add_subcommand("ablate", "compare multiple-ANN vs single-ANN workflows");
    ab->add_option("--dataset", aa.dataset, "dataset directory")->required();
    ab->add_option("--out", aa.out, "output directory");
    ab->add_option("--seed", aa.seed, "training seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        par::set_jobs(jobs);
        if (*gen) return cmd_generate(ga);
        if (*tr) return cmd_train(ta);
        if (*ev) return cmd_evaluate(ea);
        if (*pr) return cmd_predict(pa);
        if (*ab) return cmd_ablate(aa);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
