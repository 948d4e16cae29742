#include <doctest.h>

#include <filesystem>

#include "faultloc/errors.hpp"
#include "faultloc/netmodel.hpp"
#include "faultloc/presets.hpp"
#include "oracles.hpp"

using namespace faultloc;

TEST_CASE("default network matches the feeder tables") {
    const auto m = net::default_network();
    CHECK(m.buses.size() == 11);
    CHECK(m.lines.size() == 10);
    CHECK(m.loads.size() == 6);
    CHECK(m.total_load_p_mw() == doctest::Approx(37.2));
    CHECK(m.total_load_q_kvar() == doctest::Approx(195.0));
    CHECK(m.total_line_length_km() == doctest::Approx(19.0));
    CHECK(m.line_params.series_inductance_h_per_km > 5e-4);
    CHECK(m.line_params.series_inductance_h_per_km < 2e-3);
    CHECK(m.line_params.shunt_capacitance_f_per_km > 5e-9);
    CHECK(m.line_params.shunt_capacitance_f_per_km < 2e-8);
}

TEST_CASE("corrupted load sum is rejected") {
    auto m = net::default_network();
    m.loads[0].p_mw = 0.3;  // total P becomes 30 MW
    CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("total load P"), Error);
}

TEST_CASE("missing section breaks the tree check") {
    auto m = net::default_network();
    m.lines.pop_back();
    CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("path geometry reaches the published termini") {
    const auto m = net::default_network();
    net::PathTable paths(m);
    CHECK(paths.path(1).route_length_km == doctest::Approx(10.0));
    CHECK(paths.path(2).route_length_km == doctest::Approx(4.0));
    CHECK(paths.path(3).route_length_km == doctest::Approx(3.0));
    CHECK(paths.path(4).route_length_km == doctest::Approx(4.5));
    CHECK(paths.path(5).route_length_km == doctest::Approx(7.0));
    // sections 1-2, 2-5, 5-7, 7-9 plus the 3 km lateral: 11 km terminus
    CHECK(paths.path(6).route_length_km == doctest::Approx(11.0));
    CHECK(paths.max_route_km() == doctest::Approx(11.0));
}

TEST_CASE("fault locations at 500 m spacing") {
    const auto m = net::default_network();
    const auto locs = net::enumerate_fault_locations(m, 500.0);
    CHECK(locs.size() == 38);

    // sorted by (path, distance)
    for (std::size_t i = 1; i < locs.size(); ++i) {
        const bool ordered = locs[i - 1].path_id < locs[i].path_id ||
                             (locs[i - 1].path_id == locs[i].path_id &&
                              locs[i - 1].distance_m < locs[i].distance_m);
        CHECK(ordered);
    }

    // group membership mirrors the h1/h2 split used by the path classifiers
    std::size_t h1 = 0, h2 = 0;
    std::map<int, int> per_path;
    for (const auto& l : locs) {
        (l.distance_m <= 4500.0 ? h1 : h2)++;
        per_path[l.path_id]++;
    }
    CHECK(h1 == 17);
    CHECK(h2 == 21);
    CHECK(per_path[1] == 20);
    CHECK(per_path[2] == 4);
    CHECK(per_path[3] == 2);
    CHECK(per_path[4] == 2);
    CHECK(per_path[5] == 4);
    CHECK(per_path[6] == 6);
}

TEST_CASE("fault location spacing edge cases") {
    const auto m = net::default_network();
    CHECK(net::enumerate_fault_locations(m, 1000.0).size() == 19);
    CHECK(net::enumerate_fault_locations(m, 19000.0).size() == 1);
    CHECK(net::enumerate_fault_locations(m, 19001.0).empty());
    CHECK_THROWS_AS(net::enumerate_fault_locations(m, 0.0), Error);
}

TEST_CASE("enumeration agrees with the brute-force walk") {
    const auto m = net::default_network();
    for (double spacing : {250.0, 500.0, 750.0, 1000.0, 3000.0}) {
        const auto got = net::enumerate_fault_locations(m, spacing);
        const auto want = oracles::walk_locations(m, spacing);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].path_id == want[i].path_id);
            CHECK(got[i].distance_m == doctest::Approx(want[i].distance_m).epsilon(1e-12));
        }
    }
}

TEST_CASE("scenario grid cardinalities") {
    const auto m = net::default_network();
    const auto locs = net::enumerate_fault_locations(m, 500.0);

    const auto paper = presets::paper_preset();
    CHECK(paper.grid.scenario_count() == 168);
    CHECK(paper.grid.expand(m).size() == 6384);

    const auto one = net::scenario_grid({0.1}, {net::PhaseSet::from_name("a")}, {0.1}, {90.0},
                                        {locs.front()});
    CHECK(one.size() == 1);

    const auto rob1 = presets::robustness_dataset1(paper);
    CHECK(rob1.grid.expand(m).size() == 532);

    const auto desk = presets::desk_preset();
    CHECK(desk.grid.expand(m).size() == 532);
    const auto rob2 = presets::robustness_dataset2(desk);
    const auto rob2_scenarios = rob2.grid.expand(m);
    CHECK(rob2_scenarios.size() == 532);
    for (const auto& s : rob2_scenarios) CHECK(s.load_scale == doctest::Approx(1.3));

    CHECK_THROWS_AS(net::scenario_grid({}, {net::PhaseSet::from_name("a")}, {0.1}, {90.0}, locs),
                    Error);
}

TEST_CASE("grid cardinality equals product of axes times locations") {
    const auto m = net::default_network();
    const auto locs = net::enumerate_fault_locations(m, 2000.0);
    const auto grid = net::scenario_grid({0.1, 0.3, 0.5}, net::PhaseSet::all_combinations(),
                                         {0.1, 1.0}, {45.0, 90.0}, locs);
    CHECK(grid.size() == 3 * 7 * 2 * 2 * locs.size());
}

TEST_CASE("network serialization round-trips") {
    const auto m = net::default_network();
    const auto text = net::serialize_network(m);
    const auto back = net::parse_network(text);
    CHECK(m == back);

    const auto tmp = std::filesystem::temp_directory_path() / "faultloc_net_roundtrip.json";
    net::save_network(m, tmp);
    CHECK(net::load_network(tmp) == m);
    std::filesystem::remove(tmp);
}

TEST_CASE("canonical config file matches the built-in network") {
    const std::filesystem::path cfg =
        std::filesystem::path(FAULTLOC_SOURCE_DIR) / "configs" / "network_default.json";
    REQUIRE(std::filesystem::exists(cfg));
    CHECK(net::load_network(cfg) == net::default_network());
}

TEST_CASE("parse errors carry the data error kind") {
    CHECK_THROWS_AS(net::parse_network("{not json"), Error);
    try {
        net::parse_network("{}");
        FAIL("should have thrown");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("scenario validation") {
    const auto m = net::default_network();
    net::PathTable paths(m);
    net::FaultScenario s;
    s.faulted_phases = net::PhaseSet::from_name("ab");
    s.path_id = 2;
    s.distance_m = 3999.0;
    CHECK_NOTHROW(s.validate(m, paths));
    s.distance_m = 4200.0;  // path 2 route ends at 4 km
    CHECK_THROWS_AS(s.validate(m, paths), Error);
    s.distance_m = 500.0;
    s.fault_impedance_ohm = 0.0;
    CHECK_THROWS_AS(s.validate(m, paths), Error);
}

TEST_CASE("phase set bookkeeping") {
    CHECK(net::PhaseSet::from_name("abc").count() == 3);
    CHECK(net::PhaseSet::from_name("ac").name() == "ac");
    CHECK(net::PhaseSet::all_combinations().size() == 7);
    for (int i = 0; i < 7; ++i)
        CHECK(net::PhaseSet::from_class_index(i).class_index() == i);
    CHECK_THROWS_AS(net::PhaseSet::from_name(""), Error);
    CHECK_THROWS_AS(net::PhaseSet::from_name("xyz"), Error);
}
