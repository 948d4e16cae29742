#include <doctest.h>

#include <cmath>
#include <cstring>

#include "faultloc/emtsim.hpp"
#include "faultloc/errors.hpp"
#include "faultloc/features.hpp"
#include "faultloc/rng.hpp"

using namespace faultloc;
using feats::StatKind;

namespace {

std::vector<double> randoms(std::size_t n, std::uint64_t seed) {
    rng::Splitmix r(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = r.normal();
    return x;
}

emt::WaveformRecord fault_record(const std::string& phases, double dist_m, double zf = 0.1,
                                 bool full_rate = false, double duration_s = 0.1) {
    static const net::NetworkModel model = net::default_network();
    emt::SimConfig cfg;
    cfg.duration_s = duration_s;
    if (!full_rate) cfg.sampling_frequency_hz = 0.67e6 / 16.0;
    net::FaultScenario s;
    s.dg_penetration = 0.10;
    s.faulted_phases.mask = phases.empty() ? 0 : net::PhaseSet::from_name(phases).mask;
    s.fault_impedance_ohm = zf;
    s.inception_angle_deg = 90.0;
    s.path_id = 1;
    s.distance_m = dist_m;
    return emt::simulate_fault(model, s, cfg);
}

}  // namespace

TEST_CASE("population statistics") {
    SUBCASE("variance of constant data is zero") {
        CHECK(feats::compute_stat(StatKind::variance, std::vector<double>{1, 1, 1, 1}) == 0.0);
    }
    SUBCASE("skewness of a symmetric sample is zero") {
        CHECK(std::abs(feats::compute_stat(StatKind::skewness,
                                           std::vector<double>{-2, -1, 1, 2})) < 1e-12);
    }
    SUBCASE("third central moment by hand") {
        // mean 1; deviations -1,-1,2; cubes -1,-1,8; mean 2
        CHECK(feats::compute_stat(StatKind::mom3, std::vector<double>{0, 0, 3}) ==
              doctest::Approx(2.0));
    }
    SUBCASE("energy is the sum of squares") {
        CHECK(feats::compute_stat(StatKind::energy, std::vector<double>{3, 4}) == 25.0);
        CHECK(feats::compute_stat(StatKind::energy, std::vector<double>{0, 0}) == 0.0);
    }
    SUBCASE("std squared equals variance") {
        const auto x = randoms(257, 3);
        const double sd = feats::compute_stat(StatKind::std_dev, x);
        const double var = feats::compute_stat(StatKind::variance, x);
        CHECK(std::abs(sd * sd - var) / var < 1e-10);
    }
    SUBCASE("scale covariance") {
        const auto x = randoms(401, 4);
        std::vector<double> y(x.size());
        const double k = -3.7;
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = k * x[i];
        CHECK(feats::compute_stat(StatKind::std_dev, y) ==
              doctest::Approx(std::abs(k) * feats::compute_stat(StatKind::std_dev, x))
                  .epsilon(1e-9));
        CHECK(feats::compute_stat(StatKind::variance, y) ==
              doctest::Approx(k * k * feats::compute_stat(StatKind::variance, x)).epsilon(1e-9));
        CHECK(feats::compute_stat(StatKind::mom3, y) ==
              doctest::Approx(k * k * k * feats::compute_stat(StatKind::mom3, x)).epsilon(1e-9));
        CHECK(feats::compute_stat(StatKind::skewness, y) ==
              doctest::Approx(-feats::compute_stat(StatKind::skewness, x)).epsilon(1e-9));
    }
    SUBCASE("degenerate skewness is an error") {
        CHECK_THROWS_AS(feats::compute_stat(StatKind::skewness, std::vector<double>{5, 5, 5}),
                        Error);
    }
    SUBCASE("too few samples") {
        CHECK_THROWS_AS(feats::compute_stat(StatKind::variance, std::vector<double>{1.0}), Error);
        CHECK_NOTHROW(feats::compute_stat(StatKind::mode, std::vector<double>{1.0}));
    }
}

TEST_CASE("histogram mode estimator") {
    SUBCASE("single value and constant data") {
        CHECK(feats::compute_stat(StatKind::mode, std::vector<double>{2.5}) == 2.5);
        CHECK(feats::compute_stat(StatKind::mode, std::vector<double>{7, 7, 7}) == 7.0);
    }
    SUBCASE("finds the heavy cluster") {
        std::vector<double> x;
        rng::Splitmix r(9);
        for (int i = 0; i < 900; ++i) x.push_back(5.0 + 0.05 * r.normal());
        for (int i = 0; i < 100; ++i) x.push_back(-4.0 + 0.05 * r.normal());
        CHECK(feats::compute_stat(StatKind::mode, x) == doctest::Approx(5.0).epsilon(0.05));
    }
    SUBCASE("ties break toward the bin nearest zero") {
        // two equally-populated clusters at -0.1 and 10; the bin holding the
        // near-zero cluster wins the tie
        std::vector<double> x;
        rng::Splitmix r(12);
        for (int i = 0; i < 100; ++i) x.push_back(-0.1 + 1e-3 * r.normal());
        for (int i = 0; i < 100; ++i) x.push_back(10.0 + 1e-3 * r.normal());
        CHECK(feats::compute_stat(StatKind::mode, x) < 4.0);
    }
}

TEST_CASE("channel sets from waveform records") {
    SUBCASE("unfaulted record has balanced level-8 energies") {
        // a long window: with only ~16 level-8 coefficients per 0.1 s the
        // per-phase sampling offsets dominate; symmetry shows as the window
        // grows
        const auto rec = fault_record("", 500.0, 0.1, false, /*duration_s=*/0.8);
        const auto cs = feats::ChannelSet::from_record(rec);
        const double ea = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VaCD8));
        const double eb = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VbCD8));
        const double ec = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VcCD8));
        CHECK(std::abs(ea - eb) / ea < 0.05);
        CHECK(std::abs(ea - ec) / ea < 0.05);
    }
    SUBCASE("a-to-ground fault concentrates energy on the faulted phase") {
        const auto rec = fault_record("a", 2000.0, 0.1, /*full_rate=*/true);
        const auto cs = feats::ChannelSet::from_record(rec);
        const double ea = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VaCD8));
        const double eb = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VbCD8));
        const double ec = feats::compute_stat(StatKind::energy, cs.get(feats::Channel::VcCD8));
        CHECK(ea > eb);
        CHECK(ea > ec);
    }
    SUBCASE("level-8 coefficient count is about N/256") {
        const auto rec = fault_record("a", 500.0);
        const auto cs = feats::ChannelSet::from_record(rec);
        const double expect = static_cast<double>(rec.samples()) / 256.0;
        CHECK(std::abs(static_cast<double>(cs.get(feats::Channel::VaCD8).size()) - expect) <= 2.0);
    }
    SUBCASE("channel naming round-trips") {
        for (int i = 0; i < feats::kChannelCount; ++i) {
            const auto c = static_cast<feats::Channel>(i);
            CHECK(feats::channel_from_name(feats::channel_name(c)) == c);
        }
        CHECK_THROWS_AS(feats::channel_from_name("nope"), Error);
    }
}

TEST_CASE("feature spec registry") {
    SUBCASE("published vector lengths") {
        CHECK(feats::feature_spec("Tfp").size() == 15);
        CHECK(feats::feature_spec("Ofd-a").size() == 9);
        CHECK(feats::feature_spec("Ofd-b").size() == 9);
        CHECK(feats::feature_spec("Ofd-c").size() == 9);
        CHECK(feats::feature_spec("Ofd-ab").size() == 16);
        CHECK(feats::feature_spec("Ofd-ac").size() == 16);
        CHECK(feats::feature_spec("Ofd-bc").size() == 16);
        CHECK(feats::feature_spec("Ofd-ABC").size() == 45);
        for (const auto& g : {"H1", "H2"}) {
            CHECK(feats::feature_spec(std::string("Ofp-a-") + g).size() == 8);
            CHECK(feats::feature_spec(std::string("Ofp-ab-") + g).size() == 22);
            CHECK(feats::feature_spec(std::string("Ofp-ABC-") + g).size() == 26);
        }
        CHECK(feats::feature_spec_names().size() == 22);
    }
    SUBCASE("spec selection by fault type") {
        CHECK(feats::distance_spec_name(net::PhaseSet::from_name("b")) == "Ofd-b");
        CHECK(feats::distance_spec_name(net::PhaseSet::from_name("ac")) == "Ofd-ac");
        CHECK(feats::distance_spec_name(net::PhaseSet::from_name("abc")) == "Ofd-ABC");
        CHECK(feats::path_spec_name(net::PhaseSet::from_name("bc"), 2) == "Ofp-bc-H2");
        CHECK(feats::path_spec_name(net::PhaseSet::from_name("abc"), 1) == "Ofp-ABC-H1");
    }
    SUBCASE("the Tfp row is ordered std(V) std(CD8) std(CA8) E(CD8) E(CA8)") {
        const auto& spec = feats::feature_spec("Tfp");
        CHECK(spec.items[0] == std::pair{StatKind::std_dev, feats::Channel::Va});
        CHECK(spec.items[3] == std::pair{StatKind::std_dev, feats::Channel::VaCD8});
        CHECK(spec.items[6] == std::pair{StatKind::std_dev, feats::Channel::VaCA8});
        CHECK(spec.items[9] == std::pair{StatKind::energy, feats::Channel::VaCD8});
        CHECK(spec.items[12] == std::pair{StatKind::energy, feats::Channel::VaCA8});
    }
    SUBCASE("degenerate specs are rejected") {
        feats::FeatureSpec empty;
        empty.name = "empty";
        CHECK_THROWS_AS(empty.validate(), Error);
        feats::FeatureSpec dup;
        dup.name = "dup";
        dup.items = {{StatKind::variance, feats::Channel::Va},
                     {StatKind::variance, feats::Channel::Va}};
        CHECK_THROWS_AS(dup.validate(), Error);
    }
    SUBCASE("unknown spec name") { CHECK_THROWS_AS(feats::feature_spec("Xyz"), Error); }
}

TEST_CASE("assemble_features evaluates in order and checks finiteness") {
    const auto rec = fault_record("ab", 3000.0);
    const auto cs = feats::ChannelSet::from_record(rec);
    const auto fv = feats::assemble_features(cs, feats::feature_spec("Ofd-ab"));
    REQUIRE(fv.values.size() == 16);
    CHECK(fv.spec == "Ofd-ab");
    // first two slots are the CD8 variances of phases a and b
    CHECK(fv.values[0] ==
          doctest::Approx(feats::compute_stat(StatKind::variance,
                                              cs.get(feats::Channel::VaCD8))));
    CHECK(fv.values[1] ==
          doctest::Approx(feats::compute_stat(StatKind::variance,
                                              cs.get(feats::Channel::VbCD8))));
    for (double v : fv.values) CHECK(std::isfinite(v));
}

TEST_CASE("feature determinism is bitwise") {
    const auto rec = fault_record("c", 4500.0);
    const auto cs1 = feats::ChannelSet::from_record(rec);
    const auto cs2 = feats::ChannelSet::from_record(rec);
    const auto f1 = feats::assemble_features(cs1, feats::feature_spec("Ofd-c"));
    const auto f2 = feats::assemble_features(cs2, feats::feature_spec("Ofd-c"));
    CHECK(std::memcmp(f1.values.data(), f2.values.data(), f1.values.size() * sizeof(double)) ==
          0);
}

TEST_CASE("scaler standardizes and silences constant columns") {
    std::vector<std::vector<double>> rows = {{1.0, 5.0, 3.0}, {3.0, 5.0, 7.0}, {5.0, 5.0, 11.0}};
    const auto sc = feats::Scaler::fit(rows);
    const auto z = sc.transform(rows[0]);
    CHECK(z[0] == doctest::Approx(-std::sqrt(1.5)));
    CHECK(z[1] == 0.0);  // constant feature maps to zero
    const auto z2 = sc.transform(std::vector<double>{3.0, 99.0, 7.0});
    CHECK(z2[0] == doctest::Approx(0.0));
    CHECK(z2[1] == 0.0);
    CHECK_THROWS_AS(sc.transform(std::vector<double>{1.0}), Error);
}
