#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "faultloc/emtsim.hpp"
#include "faultloc/neuralnet.hpp"
#include "faultloc/parallel.hpp"
#include "faultloc/rng.hpp"
#include "faultloc/wavelet.hpp"

// Timing harness for the data-parallel kernels: each workload runs once with
// the worker pool forced to one thread and once with the OpenMP default, and
// the outputs are compared bit for bit.

using namespace faultloc;
using clock_type = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn) {
    const auto t0 = clock_type::now();
    fn();
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-28s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n", name, serial_s,
                parallel_s, serial_s / parallel_s, identical ? "bit-identical" : "MISMATCH");
}

std::vector<std::vector<double>> random_signals(std::size_t count, std::size_t len,
                                                std::uint64_t seed) {
    std::vector<std::vector<double>> sigs(count, std::vector<double>(len));
    rng::Splitmix r(seed);
    for (auto& s : sigs)
        for (auto& v : s) v = r.normal();
    return sigs;
}

void bench_dwt() {
    const auto sigs = random_signals(512, 16384, 7);
    auto run = [&](int jobs) {
        par::set_jobs(jobs);
        std::vector<double> energies(sigs.size());
        par::parallel_for(sigs.size(), [&](std::size_t i) {
            const auto dec = dwt::dwt_multilevel(sigs[i], dwt::db4(), 8);
            energies[i] = dwt::wavelet_energy(dec.detail(8));
        });
        return energies;
    };
    std::vector<double> out_serial, out_parallel;
    const double ts = time_of([&] { out_serial = run(1); });
    const double tp = time_of([&] { out_parallel = run(0); });
    report("dwt batch (512 x 16k)", ts, tp, bits_equal(out_serial, out_parallel));
}

void bench_gradient() {
    nn::MlpArchitecture arch{45, 30, 1, nn::OutputActivation::identity};
    const nn::MlpParams params = nn::init_params(arch, 11);
    rng::Splitmix r(13);
    Eigen::MatrixXd x(8192, 45), y(8192, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = r.normal();
        y(i, 0) = r.normal();
    }
    auto run = [&](int jobs) {
        par::set_jobs(jobs);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(arch.param_count());
        for (int rep = 0; rep < 50; ++rep)
            g += nn::batch_gradient(params, arch, x, y, nn::Loss::mse);
        return std::vector<double>(g.data(), g.data() + g.size());
    };
    std::vector<double> out_serial, out_parallel;
    const double ts = time_of([&] { out_serial = run(1); });
    const double tp = time_of([&] { out_parallel = run(0); });
    report("mlp gradient (8192 x 50)", ts, tp, bits_equal(out_serial, out_parallel));
}

void bench_simulation() {
    const net::NetworkModel model = net::default_network();
    emt::SimConfig cfg;
    cfg.sampling_frequency_hz = 0.67e6 / 16.0;
    std::vector<net::FaultScenario> scenarios;
    for (int k = 0; k < 28; ++k) {
        net::FaultScenario s;
        s.dg_penetration = 0.10;
        s.faulted_phases = net::PhaseSet::all_combinations()[static_cast<std::size_t>(k % 7)];
        s.fault_impedance_ohm = 0.1 + 0.05 * k;
        s.inception_angle_deg = 90.0;
        s.path_id = 1;
        s.distance_m = 500.0 * (1 + k % 20);
        scenarios.push_back(s);
    }
    auto run = [&](int jobs) {
        par::set_jobs(jobs);
        std::vector<double> sums(scenarios.size());
        par::parallel_for(scenarios.size(), [&](std::size_t i) {
            const auto rec = emt::simulate_fault(model, scenarios[i], cfg);
            double acc = 0;
            for (double v : rec.va) acc += v * v;
            sums[i] = acc;
        });
        return sums;
    };
    std::vector<double> out_serial, out_parallel;
    const double ts = time_of([&] { out_serial = run(1); });
    const double tp = time_of([&] { out_parallel = run(0); });
    report("emt batch (28 runs)", ts, tp, bits_equal(out_serial, out_parallel));
}

}  // namespace

int main() {
    std::printf("faultloc kernel benchmark (serial reference vs OpenMP)\n\n");
    bench_dwt();
    bench_gradient();
    bench_simulation();
    par::set_jobs(0);
    return 0;
}
