#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "faultloc/errors.hpp"
#include "faultloc/neuralnet.hpp"
#include "faultloc/rng.hpp"
#include "oracles.hpp"

using namespace faultloc;

namespace {

nn::MlpParams random_params(const nn::MlpArchitecture& arch, std::uint64_t seed) {
    rng::Splitmix r(seed);
    nn::MlpParams p = nn::init_params(arch, seed);
    for (Eigen::Index i = 0; i < p.w_hidden.size(); ++i) p.w_hidden.data()[i] = r.uniform(-1, 1);
    for (Eigen::Index i = 0; i < p.b_hidden.size(); ++i) p.b_hidden(i) = r.uniform(-1, 1);
    for (Eigen::Index i = 0; i < p.w_out.size(); ++i) p.w_out.data()[i] = r.uniform(-1, 1);
    for (Eigen::Index i = 0; i < p.b_out.size(); ++i) p.b_out(i) = r.uniform(-1, 1);
    return p;
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int classes) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i)
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return y;
}

}  // namespace

TEST_CASE("forward pass basics") {
    SUBCASE("all-zero parameters give zero identity output") {
        nn::MlpArchitecture arch{4, 3, 1, nn::OutputActivation::identity};
        nn::MlpParams p = nn::init_params(arch, 1);
        p.w_hidden.setZero();
        p.w_out.setZero();
        const Eigen::VectorXd out = nn::forward(p, arch, Eigen::VectorXd::Ones(4));
        CHECK(out(0) == 0.0);
    }
    SUBCASE("all-zero parameters give the uniform softmax") {
        nn::MlpArchitecture arch{4, 3, 7, nn::OutputActivation::softmax};
        nn::MlpParams p = nn::init_params(arch, 1);
        p.w_hidden.setZero();
        p.w_out.setZero();
        const Eigen::VectorXd out = nn::forward(p, arch, Eigen::VectorXd::Random(4));
        for (int t = 0; t < 7; ++t) CHECK(out(t) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    }
    SUBCASE("softmax outputs are positive and sum to one") {
        nn::MlpArchitecture arch{5, 4, 7, nn::OutputActivation::softmax};
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto p = random_params(arch, seed);
            rng::Splitmix r(seed + 100);
            Eigen::VectorXd x(5);
            for (int i = 0; i < 5; ++i) x(i) = 3.0 * r.normal();
            const Eigen::VectorXd out = nn::forward(p, arch, x);
            double sum = 0;
            for (int t = 0; t < 7; ++t) {
                CHECK(out(t) > 0.0);
                CHECK(out(t) < 1.0);
                sum += out(t);
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
    SUBCASE("dimension mismatch is rejected") {
        nn::MlpArchitecture arch{4, 3, 1, nn::OutputActivation::identity};
        const auto p = nn::init_params(arch, 1);
        CHECK_THROWS_AS(nn::forward(p, arch, Eigen::VectorXd::Ones(5)), Error);
    }
}

TEST_CASE("flatten and unflatten round-trip exactly") {
    nn::MlpArchitecture arch{6, 5, 3, nn::OutputActivation::softmax};
    const auto p = random_params(arch, 3);
    const Eigen::VectorXd theta = p.flatten();
    REQUIRE(theta.size() == arch.param_count());
    const auto q = nn::MlpParams::unflatten(arch, theta);
    CHECK((q.w_hidden - p.w_hidden).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q.b_hidden - p.b_hidden).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q.w_out - p.w_out).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q.b_out - p.b_out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backprop matches central finite differences") {
    rng::Splitmix pick(2024);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int p_in = 1 + static_cast<int>(pick.bounded(5));
        const int q = 1 + static_cast<int>(pick.bounded(5));
        const bool softmax = pick.next_double() < 0.5;
        const int t = softmax ? 2 + static_cast<int>(pick.bounded(4)) : 1;
        nn::MlpArchitecture arch{p_in, q, t,
                                 softmax ? nn::OutputActivation::softmax
                                         : nn::OutputActivation::identity};
        const nn::Loss loss = softmax ? nn::Loss::cross_entropy : nn::Loss::mse;
        const auto params = random_params(arch, 500 + static_cast<std::uint64_t>(trial));

        const int m = 1 + static_cast<int>(pick.bounded(8));
        Eigen::MatrixXd x(m, p_in);
        Eigen::MatrixXd y(m, t);
        rng::Splitmix rd(900 + static_cast<std::uint64_t>(trial));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p_in; ++j) x(i, j) = rd.normal();
        if (softmax) {
            std::vector<int> labels(static_cast<std::size_t>(m));
            for (auto& l : labels) l = static_cast<int>(rd.bounded(static_cast<std::uint64_t>(t)));
            y = one_hot(labels, t);
        } else {
            for (int i = 0; i < m; ++i) y(i, 0) = rd.normal();
        }

        const Eigen::VectorXd grad = nn::batch_gradient(params, arch, x, y, loss);
        const Eigen::VectorXd fd = oracles::central_difference(
            [&](const Eigen::VectorXd& theta) {
                return nn::batch_loss(nn::MlpParams::unflatten(arch, theta), arch, x, y, loss);
            },
            params.flatten(), 1e-6);
        const double scale = std::max(1e-4, std::max(grad.cwiseAbs().maxCoeff(),
                                                     fd.cwiseAbs().maxCoeff()));
        for (Eigen::Index i = 0; i < grad.size(); ++i) {
            const double denom = std::max({std::abs(grad(i)), std::abs(fd(i)), 1e-4 * scale});
            CHECK(std::abs(grad(i) - fd(i)) / denom < 1e-5);
        }
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("gradient vanishes at perfect predictions") {
    SUBCASE("stationary point of a one-sample quadratic fit") {
        nn::MlpArchitecture arch{1, 1, 1, nn::OutputActivation::identity};
        nn::MlpParams p = nn::init_params(arch, 7);
        Eigen::MatrixXd x(1, 1), y(1, 1);
        x(0, 0) = 0.3;
        const Eigen::VectorXd out = nn::forward(p, arch, x.row(0).transpose());
        y(0, 0) = out(0);  // target set exactly at the network output
        const Eigen::VectorXd g = nn::batch_gradient(p, arch, x, y, nn::Loss::mse);
        CHECK(g.norm() < 1e-8);
    }
    SUBCASE("cross-entropy output-layer gradient at a one-hot hit") {
        nn::MlpArchitecture arch{2, 3, 2, nn::OutputActivation::softmax};
        nn::MlpParams p = nn::init_params(arch, 8);
        p.b_out(0) = 40.0;  // saturate the softmax onto class 0
        Eigen::MatrixXd x(1, 2);
        x << 0.1, -0.2;
        const Eigen::MatrixXd y = one_hot({0}, 2);
        const Eigen::VectorXd g = nn::batch_gradient(p, arch, x, y, nn::Loss::cross_entropy);
        // output-layer block sits at the tail of the flattened vector
        const Eigen::Index head = arch.hidden * arch.input + arch.hidden;
        CHECK(g.tail(g.size() - head).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("levenberg-marquardt training") {
    SUBCASE("linear target reaches the closed-form optimum") {
        const int m = 64;
        Eigen::MatrixXd x(m, 1), y(m, 1);
        std::vector<double> xs, ys;
        for (int i = 0; i < m; ++i) {
            x(i, 0) = -1.0 + 2.0 * i / (m - 1);
            y(i, 0) = 0.3 * x(i, 0) + 0.1;
            xs.push_back(x(i, 0));
            ys.push_back(y(i, 0));
        }
        CHECK(oracles::linear_fit_mse(xs, ys) < 1e-25);  // data is exactly linear
        nn::MlpArchitecture arch{1, 1, 1, nn::OutputActivation::identity};
        nn::TrainOptions opts;
        opts.seed = 11;
        opts.max_epochs = 500;
        opts.patience = 100;
        const auto res = nn::train_lm(arch, {x, y}, {}, opts);
        CHECK(nn::batch_loss(res.params, arch, x, y, nn::Loss::mse) < 1e-6);
    }
    SUBCASE("one sample interpolates exactly") {
        Eigen::MatrixXd x(1, 2), y(1, 1);
        x << 0.4, -0.3;
        y << 1.7;
        nn::MlpArchitecture arch{2, 3, 1, nn::OutputActivation::identity};
        nn::TrainOptions opts;
        opts.seed = 5;
        const auto res = nn::train_lm(arch, {x, y}, {}, opts);
        const Eigen::VectorXd out = nn::forward(res.params, arch, x.row(0).transpose());
        CHECK(std::abs(out(0) - 1.7) < 1e-8);
    }
    SUBCASE("sine regression fixture") {
        const int m = 200;
        Eigen::MatrixXd x(m, 1), y(m, 1);
        for (int i = 0; i < m; ++i) {
            x(i, 0) = static_cast<double>(i) / (m - 1);
            y(i, 0) = std::sin(2.0 * M_PI * x(i, 0));
        }
        // deterministic interleaved split: 150 train, 25 val, 25 test
        Eigen::MatrixXd xt(150, 1), yt(150, 1), xv(25, 1), yv(25, 1), xe(25, 1), ye(25, 1);
        int it = 0, iv = 0, ie = 0;
        for (int i = 0; i < m; ++i) {
            if (i % 8 == 3) {
                xv(iv, 0) = x(i, 0);
                yv(iv++, 0) = y(i, 0);
            } else if (i % 8 == 7) {
                xe(ie, 0) = x(i, 0);
                ye(ie++, 0) = y(i, 0);
            } else {
                xt(it, 0) = x(i, 0);
                yt(it++, 0) = y(i, 0);
            }
        }
        nn::MlpArchitecture arch{1, 10, 1, nn::OutputActivation::identity};
        nn::TrainOptions opts;
        opts.seed = 21;
        opts.max_epochs = 500;
        const auto res = nn::train_lm(arch, {xt, yt}, {xv, yv}, opts);
        CHECK(nn::batch_loss(res.params, arch, xe, ye, nn::Loss::mse) < 1e-3);
        CHECK(static_cast<int>(res.trace.train_loss.size()) <= 500);
    }
    SUBCASE("accepted steps never increase the training loss") {
        const int m = 40;
        Eigen::MatrixXd x(m, 2), y(m, 1);
        rng::Splitmix r(3);
        for (int i = 0; i < m; ++i) {
            x(i, 0) = r.normal();
            x(i, 1) = r.normal();
            y(i, 0) = std::tanh(x(i, 0)) - 0.5 * x(i, 1) + 0.05 * r.normal();
        }
        nn::MlpArchitecture arch{2, 4, 1, nn::OutputActivation::identity};
        nn::TrainOptions opts;
        opts.seed = 17;
        opts.max_epochs = 60;
        const auto res = nn::train_lm(arch, {x, y}, {}, opts);
        for (std::size_t e = 1; e < res.trace.train_loss.size(); ++e)
            CHECK(res.trace.train_loss[e] <= res.trace.train_loss[e - 1]);
    }
    SUBCASE("wrong configuration is rejected") {
        nn::MlpArchitecture arch{2, 3, 2, nn::OutputActivation::softmax};
        nn::TrainOptions opts;
        Eigen::MatrixXd x(2, 2), y(2, 2);
        CHECK_THROWS_AS(nn::train_lm(arch, {x, y}, {}, opts), Error);
    }
}

TEST_CASE("scaled conjugate gradient training") {
    nn::TrainOptions opts;
    opts.loss = nn::Loss::cross_entropy;
    SUBCASE("separable blobs reach 100% within 200 epochs for 10/10 seeds") {
        // two clusters with a wide margin; separability certified independently
        std::vector<std::array<double, 2>> pts;
        std::vector<int> labels;
        rng::Splitmix r(55);
        for (int i = 0; i < 40; ++i) {
            const bool cls = i % 2 == 0;
            const double cx = cls ? 2.0 : -2.0;
            pts.push_back({cx + 0.5 * r.normal(), 0.5 * r.normal()});
            labels.push_back(cls ? 1 : 0);
        }
        REQUIRE(oracles::separable_2d(pts, labels));
        Eigen::MatrixXd x(40, 2);
        std::vector<int> yl;
        for (int i = 0; i < 40; ++i) {
            x(i, 0) = pts[static_cast<std::size_t>(i)][0];
            x(i, 1) = pts[static_cast<std::size_t>(i)][1];
            yl.push_back(labels[static_cast<std::size_t>(i)]);
        }
        const Eigen::MatrixXd y = one_hot(yl, 2);
        nn::MlpArchitecture arch{2, 10, 2, nn::OutputActivation::softmax};
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            nn::TrainOptions o = opts;
            o.seed = seed;
            o.max_epochs = 200;
            o.patience = 200;
            const auto res = nn::train_scg(arch, {x, y}, {}, o);
            const Eigen::MatrixXd probs = nn::forward_batch(res.params, arch, x);
            int correct = 0;
            for (int i = 0; i < 40; ++i) {
                Eigen::Index am;
                probs.row(i).maxCoeff(&am);
                correct += (static_cast<int>(am) == yl[static_cast<std::size_t>(i)]);
            }
            CHECK(correct == 40);
        }
    }
    SUBCASE("single-class data trains to near-zero cross-entropy") {
        Eigen::MatrixXd x(12, 2);
        rng::Splitmix r(6);
        for (int i = 0; i < 12; ++i) {
            x(i, 0) = r.normal();
            x(i, 1) = r.normal();
        }
        const Eigen::MatrixXd y = one_hot(std::vector<int>(12, 0), 3);
        nn::MlpArchitecture arch{2, 4, 3, nn::OutputActivation::softmax};
        nn::TrainOptions o = opts;
        o.seed = 2;
        o.max_epochs = 500;
        o.patience = 500;
        const auto res = nn::train_scg(arch, {x, y}, {}, o);
        CHECK(nn::batch_loss(res.params, arch, x, y, nn::Loss::cross_entropy) < 1e-3);
    }
    SUBCASE("XOR solves for at least 8 of 10 seeds") {
        Eigen::MatrixXd x(4, 2);
        x << 0, 0, 0, 1, 1, 0, 1, 1;
        const Eigen::MatrixXd y = one_hot({0, 1, 1, 0}, 2);
        nn::MlpArchitecture arch{2, 4, 2, nn::OutputActivation::softmax};
        int solved = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            nn::TrainOptions o = opts;
            o.seed = seed;
            o.max_epochs = 2000;
            o.patience = 2000;
            const auto res = nn::train_scg(arch, {x, y}, {}, o);
            const Eigen::MatrixXd probs = nn::forward_batch(res.params, arch, x);
            bool all = true;
            const int want[4] = {0, 1, 1, 0};
            for (int i = 0; i < 4; ++i) {
                Eigen::Index am;
                probs.row(i).maxCoeff(&am);
                all = all && (static_cast<int>(am) == want[i]);
            }
            solved += all;
        }
        CHECK(solved >= 8);
    }
    SUBCASE("cross-entropy never increases on accepted steps") {
        Eigen::MatrixXd x(30, 3);
        rng::Splitmix r(77);
        std::vector<int> yl;
        for (int i = 0; i < 30; ++i) {
            for (int j = 0; j < 3; ++j) x(i, j) = r.normal();
            yl.push_back(static_cast<int>(r.bounded(3)));
        }
        const Eigen::MatrixXd y = one_hot(yl, 3);
        nn::MlpArchitecture arch{3, 6, 3, nn::OutputActivation::softmax};
        nn::TrainOptions o = opts;
        o.seed = 4;
        o.max_epochs = 300;
        o.patience = 300;
        const auto res = nn::train_scg(arch, {x, y}, {}, o);
        for (std::size_t e = 1; e < res.trace.train_loss.size(); ++e)
            CHECK(res.trace.train_loss[e] <= res.trace.train_loss[e - 1] + 1e-12);
    }
}

TEST_CASE("training reproducibility is bitwise") {
    Eigen::MatrixXd x(24, 2), y(24, 1);
    rng::Splitmix r(31);
    for (int i = 0; i < 24; ++i) {
        x(i, 0) = r.normal();
        x(i, 1) = r.normal();
        y(i, 0) = x(i, 0) * x(i, 1);
    }
    nn::MlpArchitecture arch{2, 5, 1, nn::OutputActivation::identity};
    nn::TrainOptions opts;
    opts.seed = 9;
    opts.max_epochs = 50;
    const auto a = nn::train_lm(arch, {x, y}, {}, opts);
    const auto b = nn::train_lm(arch, {x, y}, {}, opts);
    CHECK((a.params.flatten() - b.params.flatten()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.trace.digest() == b.trace.digest());
}

TEST_CASE("stratified dataset split") {
    SUBCASE("7-class split of 6384 records") {
        std::vector<std::string> strata;
        for (int c = 0; c < 7; ++c)
            for (int i = 0; i < 912; ++i) strata.push_back("class" + std::to_string(c));
        nn::SplitSpec spec;
        spec.classifier = true;
        const auto s = nn::split_dataset(strata, spec, 42);
        CHECK(s.train.size() + s.val.size() + s.test.size() == 6384);
        CHECK(std::abs(static_cast<int>(s.train.size()) - 4469) <= 3);
        // per-class train share within 1% of 70%
        std::map<std::string, int> per_class;
        for (std::size_t i : s.train) per_class[strata[i]]++;
        for (const auto& [k, n] : per_class)
            CHECK(std::abs(n / 912.0 - 0.70) < 0.01);
    }
    SUBCASE("10 identical labels split 7/2/1") {
        const std::vector<std::string> strata(10, "only");
        nn::SplitSpec spec;
        const auto s = nn::split_dataset(strata, spec, 1);
        CHECK(s.train.size() == 7);
        CHECK(s.val.size() == 2);
        CHECK(s.test.size() == 1);
    }
    SUBCASE("same seed gives identical partitions") {
        std::vector<std::string> strata;
        for (int i = 0; i < 50; ++i) strata.push_back("g" + std::to_string(i % 5));
        nn::SplitSpec spec;
        const auto a = nn::split_dataset(strata, spec, 7);
        const auto b = nn::split_dataset(strata, spec, 7);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);
        const auto c = nn::split_dataset(strata, spec, 8);
        CHECK(a.train != c.train);
    }
    SUBCASE("partitions are disjoint and exhaustive") {
        std::vector<std::string> strata;
        for (int i = 0; i < 97; ++i) strata.push_back("g" + std::to_string(i % 4));
        nn::SplitSpec spec;
        const auto s = nn::split_dataset(strata, spec, 3);
        std::set<std::size_t> all;
        for (std::size_t i : s.train) all.insert(i);
        for (std::size_t i : s.val) all.insert(i);
        for (std::size_t i : s.test) all.insert(i);
        CHECK(all.size() == 97);
        CHECK(s.train.size() + s.val.size() + s.test.size() == 97);
    }
    SUBCASE("single-member class errors for classifiers") {
        std::vector<std::string> strata(12, "big");
        strata.push_back("lonely");
        nn::SplitSpec spec;
        spec.classifier = true;
        CHECK_THROWS_AS(nn::split_dataset(strata, spec, 1), Error);
        spec.classifier = false;
        CHECK_NOTHROW(nn::split_dataset(strata, spec, 1));
    }
    SUBCASE("fewer than 10 records is an error") {
        CHECK_THROWS_AS(nn::split_dataset(std::vector<std::string>(9, "x"), nn::SplitSpec{}, 1),
                        Error);
    }
}
