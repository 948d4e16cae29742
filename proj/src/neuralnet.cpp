#include "faultloc/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include "faultloc/errors.hpp"
#include "faultloc/parallel.hpp"
#include "faultloc/rng.hpp"

namespace faultloc::nn {

void MlpArchitecture::validate() const {
    if (input < 1 || hidden < 1 || output < 1)
        fail_validation("network sizes must be >= 1");
    if (out_act == OutputActivation::identity && output != 1)
        fail_validation("regression networks are single-output");
}

Eigen::VectorXd MlpParams::flatten() const {
    const Eigen::Index n = w_hidden.size() + b_hidden.size() + w_out.size() + b_out.size();
    Eigen::VectorXd theta(n);
    Eigen::Index at = 0;
    for (Eigen::Index q = 0; q < w_hidden.rows(); ++q)
        for (Eigen::Index p = 0; p < w_hidden.cols(); ++p) theta(at++) = w_hidden(q, p);
    for (Eigen::Index q = 0; q < b_hidden.size(); ++q) theta(at++) = b_hidden(q);
    for (Eigen::Index t = 0; t < w_out.rows(); ++t)
        for (Eigen::Index q = 0; q < w_out.cols(); ++q) theta(at++) = w_out(t, q);
    for (Eigen::Index t = 0; t < b_out.size(); ++t) theta(at++) = b_out(t);
    return theta;
}

MlpParams MlpParams::unflatten(const MlpArchitecture& arch, const Eigen::VectorXd& theta) {
    if (theta.size() != arch.param_count()) fail_validation("parameter vector length mismatch");
    MlpParams p;
    p.w_hidden.resize(arch.hidden, arch.input);
    p.b_hidden.resize(arch.hidden);
    p.w_out.resize(arch.output, arch.hidden);
    p.b_out.resize(arch.output);
    Eigen::Index at = 0;
    for (Eigen::Index q = 0; q < arch.hidden; ++q)
        for (Eigen::Index i = 0; i < arch.input; ++i) p.w_hidden(q, i) = theta(at++);
    for (Eigen::Index q = 0; q < arch.hidden; ++q) p.b_hidden(q) = theta(at++);
    for (Eigen::Index t = 0; t < arch.output; ++t)
        for (Eigen::Index q = 0; q < arch.hidden; ++q) p.w_out(t, q) = theta(at++);
    for (Eigen::Index t = 0; t < arch.output; ++t) p.b_out(t) = theta(at++);
    return p;
}

MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    rng::Splitmix r(seed);
    MlpParams p;
    p.w_hidden.resize(arch.hidden, arch.input);
    const double wh = 1.0 / std::sqrt(static_cast<double>(arch.input));
    for (Eigen::Index q = 0; q < arch.hidden; ++q)
        for (Eigen::Index i = 0; i < arch.input; ++i) p.w_hidden(q, i) = r.uniform(-wh, wh);
    p.b_hidden = Eigen::VectorXd::Zero(arch.hidden);
    p.w_out.resize(arch.output, arch.hidden);
    const double wo = 1.0 / std::sqrt(static_cast<double>(arch.hidden));
    for (Eigen::Index t = 0; t < arch.output; ++t)
        for (Eigen::Index q = 0; q < arch.hidden; ++q) p.w_out(t, q) = r.uniform(-wo, wo);
    p.b_out = Eigen::VectorXd::Zero(arch.output);
    return p;
}

namespace {

Eigen::MatrixXd hidden_activations(const MlpParams& p, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z1 = x * p.w_hidden.transpose();
    z1.rowwise() += p.b_hidden.transpose();
    return z1.array().tanh().matrix();
}

Eigen::MatrixXd output_preactivations(const MlpParams& p, const Eigen::MatrixXd& a1) {
    Eigen::MatrixXd z2 = a1 * p.w_out.transpose();
    z2.rowwise() += p.b_out.transpose();
    return z2;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd p(z.rows(), z.cols());
    for (Eigen::Index m = 0; m < z.rows(); ++m) {
        const double mx = z.row(m).maxCoeff();
        Eigen::ArrayXd e = (z.row(m).array() - mx).exp();
        p.row(m) = (e / e.sum()).matrix();
    }
    return p;
}

double loss_from_preact(const Eigen::MatrixXd& z2, const Eigen::MatrixXd& y, Loss loss) {
    const double m = static_cast<double>(z2.rows());
    if (loss == Loss::mse)
        return (z2 - y).squaredNorm() / (m * static_cast<double>(z2.cols()));
    double ce = 0;  // stable: sum_i (logsumexp(z_i) - z_i . y_i) for unit-mass targets
    for (Eigen::Index i = 0; i < z2.rows(); ++i) {
        const double mx = z2.row(i).maxCoeff();
        const double lse = mx + std::log((z2.row(i).array() - mx).exp().sum());
        ce += lse * y.row(i).sum() - z2.row(i).dot(y.row(i));
    }
    return ce / m;
}

}  // namespace

Eigen::VectorXd forward(const MlpParams& params, const MlpArchitecture& arch,
                        const Eigen::VectorXd& input) {
    if (input.size() != arch.input) fail_validation("forward: input dimension mismatch");
    Eigen::MatrixXd x = input.transpose();
    Eigen::MatrixXd out = forward_batch(params, arch, x);
    return out.row(0).transpose();
}

Eigen::MatrixXd forward_batch(const MlpParams& params, const MlpArchitecture& arch,
                              const Eigen::MatrixXd& inputs) {
    if (inputs.cols() != arch.input) fail_validation("forward: input dimension mismatch");
    const Eigen::MatrixXd a1 = hidden_activations(params, inputs);
    Eigen::MatrixXd z2 = output_preactivations(params, a1);
    if (arch.out_act == OutputActivation::softmax) return softmax_rows(z2);
    return z2;
}

double batch_loss(const MlpParams& params, const MlpArchitecture& arch,
                  const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Loss loss) {
    if (inputs.rows() != targets.rows()) fail_validation("loss: batch size mismatch");
    if (targets.cols() != arch.output) fail_validation("loss: target dimension mismatch");
    const Eigen::MatrixXd a1 = hidden_activations(params, inputs);
    return loss_from_preact(output_preactivations(params, a1), targets, loss);
}

Eigen::VectorXd batch_gradient(const MlpParams& params, const MlpArchitecture& arch,
                               const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                               Loss loss, bool force_serial) {
    if (inputs.rows() == 0) fail_validation("gradient: empty batch");
    if (inputs.rows() != targets.rows()) fail_validation("gradient: batch size mismatch");
    if (inputs.cols() != arch.input || targets.cols() != arch.output)
        fail_validation("gradient: dimension mismatch");
    const std::size_t m = static_cast<std::size_t>(inputs.rows());

    struct Acc {
        Eigen::MatrixXd gwh, gwo;
        Eigen::VectorXd gbh, gbo;
    };
    auto make = [&] {
        Acc a;
        a.gwh = Eigen::MatrixXd::Zero(arch.hidden, arch.input);
        a.gbh = Eigen::VectorXd::Zero(arch.hidden);
        a.gwo = Eigen::MatrixXd::Zero(arch.output, arch.hidden);
        a.gbo = Eigen::VectorXd::Zero(arch.output);
        return a;
    };
    const std::size_t nblocks = (m + par::kReduceBlock - 1) / par::kReduceBlock;
    std::vector<Acc> partial;
    partial.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) partial.push_back(make());

    par::parallel_for(nblocks, [&](std::size_t b) {
        const std::size_t lo = b * par::kReduceBlock;
        const std::size_t rows = std::min(m, lo + par::kReduceBlock) - lo;
        const Eigen::MatrixXd xb = inputs.middleRows(static_cast<Eigen::Index>(lo),
                                                     static_cast<Eigen::Index>(rows));
        const Eigen::MatrixXd yb = targets.middleRows(static_cast<Eigen::Index>(lo),
                                                      static_cast<Eigen::Index>(rows));
        const Eigen::MatrixXd a1 = hidden_activations(params, xb);
        const Eigen::MatrixXd z2 = output_preactivations(params, a1);
        Eigen::MatrixXd delta2;  // d(batch sum of loss)/dz2, normalization applied later
        if (loss == Loss::mse) {
            delta2 = 2.0 * (z2 - yb);
        } else {
            // supports weighted targets: row mass scales the softmax term
            const Eigen::VectorXd mass = yb.rowwise().sum();
            delta2 = (softmax_rows(z2).array().colwise() * mass.array()).matrix() - yb;
        }
        Acc& acc = partial[b];
        acc.gwo = delta2.transpose() * a1;
        acc.gbo = delta2.colwise().sum().transpose();
        const Eigen::MatrixXd delta1 =
            ((delta2 * params.w_out).array() * (1.0 - a1.array().square())).matrix();
        acc.gwh = delta1.transpose() * xb;
        acc.gbh = delta1.colwise().sum().transpose();
    }, force_serial);

    Acc total = make();
    for (std::size_t b = 0; b < nblocks; ++b) {
        total.gwh += partial[b].gwh;
        total.gbh += partial[b].gbh;
        total.gwo += partial[b].gwo;
        total.gbo += partial[b].gbo;
    }
    const double norm = loss == Loss::mse
                            ? 1.0 / (static_cast<double>(m) * static_cast<double>(arch.output))
                            : 1.0 / static_cast<double>(m);
    MlpParams g;
    g.w_hidden = total.gwh * norm;
    g.b_hidden = total.gbh * norm;
    g.w_out = total.gwo * norm;
    g.b_out = total.gbo * norm;
    return g.flatten();
}

std::uint64_t TrainTrace::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::vector<double>& v) {
        for (double d : v) {
            std::uint64_t bits;
            static_assert(sizeof bits == sizeof d);
            std::memcpy(&bits, &d, sizeof bits);
            for (int k = 0; k < 8; ++k) {
                h ^= (bits >> (8 * k)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    };
    mix(train_loss);
    mix(val_loss);
    return h;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

namespace {

// Residual Jacobian for the single-output regression network.
void lm_jacobian(const MlpParams& p, const MlpArchitecture& arch, const Eigen::MatrixXd& x,
                 const Eigen::MatrixXd& y, Eigen::MatrixXd& jac, Eigen::VectorXd& res) {
    const Eigen::Index m = x.rows();
    const Eigen::Index np = arch.param_count();
    const Eigen::MatrixXd a1 = hidden_activations(p, x);
    const Eigen::MatrixXd z2 = output_preactivations(p, a1);
    res = z2.col(0) - y.col(0);
    jac.resize(m, np);
    const Eigen::Index q = arch.hidden, pi = arch.input;
    par::parallel_for(static_cast<std::size_t>(m), [&](std::size_t sm) {
        const Eigen::Index i = static_cast<Eigen::Index>(sm);
        // d yhat / d hidden pre-activation
        const Eigen::ArrayXd d = p.w_out.row(0).transpose().array() *
                                 (1.0 - a1.row(i).transpose().array().square());
        Eigen::Index at = 0;
        for (Eigen::Index h = 0; h < q; ++h)
            for (Eigen::Index c = 0; c < pi; ++c) jac(i, at++) = d(h) * x(i, c);
        for (Eigen::Index h = 0; h < q; ++h) jac(i, at++) = d(h);
        for (Eigen::Index h = 0; h < q; ++h) jac(i, at++) = a1(i, h);
        jac(i, at++) = 1.0;
    });
}

double mean_sq(const Eigen::VectorXd& r) {
    return r.squaredNorm() / static_cast<double>(r.size());
}

}  // namespace

TrainResult train_lm(const MlpArchitecture& arch, const Dataset& train, const Dataset& val,
                     const TrainOptions& opts) {
    arch.validate();
    if (arch.out_act != OutputActivation::identity || opts.loss != Loss::mse)
        fail_validation("train_lm expects an identity-output network with mse loss");
    if (train.size() == 0) fail_validation("train_lm: empty training set");

    MlpParams params = init_params(arch, opts.seed);
    Eigen::VectorXd theta = params.flatten();
    const Eigen::Index np = arch.param_count();
    const Eigen::Index m = train.inputs.rows();
    const bool use_dual = m < np;  // push-through identity on the normal equations

    double lambda = opts.lm_lambda_init;
    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    lm_jacobian(params, arch, train.inputs, train.targets, jac, res);
    double train_loss = mean_sq(res);

    TrainTrace trace;
    const bool has_val = val.size() > 0;
    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta = theta;
    int stall = 0;

    auto record_epoch = [&](double tl) {
        trace.train_loss.push_back(tl);
        const double vl = has_val
                              ? batch_loss(MlpParams::unflatten(arch, theta), arch, val.inputs,
                                           val.targets, Loss::mse)
                              : tl;
        trace.val_loss.push_back(vl);
        if (vl < best_val - 1e-15) {
            best_val = vl;
            best_theta = theta;
            trace.best_epoch = static_cast<int>(trace.val_loss.size()) - 1;
            stall = 0;
        } else {
            ++stall;
        }
    };

    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        const Eigen::VectorXd jtr = jac.transpose() * res;
        bool accepted = false;
        Eigen::MatrixXd normal;  // JtJ or JJt, reused across lambda retries
        if (use_dual)
            normal = jac * jac.transpose();
        else
            normal = jac.transpose() * jac;

        while (!accepted) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal().array() += lambda;
            Eigen::LLT<Eigen::MatrixXd> llt(damped);
            if (llt.info() != Eigen::Success) {
                lambda *= opts.lm_lambda_up;
                if (lambda > opts.lm_lambda_max)
                    fail_numerical("LM normal equations singular with damping exhausted");
                continue;
            }
            Eigen::VectorXd step;
            if (use_dual)
                step = -jac.transpose() * llt.solve(res);
            else
                step = -llt.solve(jtr);

            const Eigen::VectorXd theta_try = theta + step;
            const MlpParams p_try = MlpParams::unflatten(arch, theta_try);
            Eigen::MatrixXd jac_try;
            Eigen::VectorXd res_try;
            lm_jacobian(p_try, arch, train.inputs, train.targets, jac_try, res_try);
            const double loss_try = mean_sq(res_try);
            if (loss_try < train_loss) {
                theta = theta_try;
                params = p_try;
                jac = std::move(jac_try);
                res = std::move(res_try);
                train_loss = loss_try;
                lambda = std::max(lambda / opts.lm_lambda_down, 1e-300);
                accepted = true;
            } else {
                lambda *= opts.lm_lambda_up;
                if (lambda > opts.lm_lambda_max) break;
            }
        }
        if (!accepted) {
            trace.stop_reason = "lambda_max";
            break;
        }
        record_epoch(train_loss);
        if (stall > opts.patience) {
            trace.stop_reason = "patience";
            break;
        }
        if (train_loss < 1e-25) {
            trace.stop_reason = "converged";
            break;
        }
    }
    if (trace.stop_reason.empty()) trace.stop_reason = "max_epochs";

    TrainResult out;
    out.params = MlpParams::unflatten(arch, has_val ? best_theta : theta);
    out.trace = std::move(trace);
    return out;
}

// ---------------------------------------------------------------------------
// Scaled conjugate gradient (Moller)
// ---------------------------------------------------------------------------

TrainResult train_scg(const MlpArchitecture& arch, const Dataset& train, const Dataset& val,
                      const TrainOptions& opts) {
    arch.validate();
    if (opts.loss != Loss::cross_entropy || arch.out_act != OutputActivation::softmax)
        fail_validation("train_scg expects a softmax network with cross-entropy loss");
    if (train.size() == 0) fail_validation("train_scg: empty training set");

    const Eigen::Index np = arch.param_count();
    Eigen::VectorXd w = init_params(arch, opts.seed).flatten();

    auto loss_at = [&](const Eigen::VectorXd& theta) {
        return batch_loss(MlpParams::unflatten(arch, theta), arch, train.inputs, train.targets,
                          Loss::cross_entropy);
    };
    auto grad_at = [&](const Eigen::VectorXd& theta) {
        return batch_gradient(MlpParams::unflatten(arch, theta), arch, train.inputs,
                              train.targets, Loss::cross_entropy);
    };

    double lambda = opts.scg_lambda_init;
    double lambda_bar = 0.0;
    bool success = true;
    double loss = loss_at(w);
    Eigen::VectorXd grad = grad_at(w);
    Eigen::VectorXd r = -grad;
    Eigen::VectorXd p = r;
    double delta = 0.0;

    TrainTrace trace;
    const bool has_val = val.size() > 0;
    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_w = w;
    int stall = 0;

    for (int k = 1; k <= opts.max_epochs; ++k) {
        const double p_norm2 = p.squaredNorm();
        if (!(p_norm2 > 0)) {
            trace.stop_reason = "converged";
            break;
        }
        if (success) {
            const double sigma_k = opts.scg_sigma / std::sqrt(p_norm2);
            const Eigen::VectorXd grad_shift = grad_at(w + sigma_k * p);
            delta = p.dot((grad_shift - grad) / sigma_k);
        }
        delta += (lambda - lambda_bar) * p_norm2;
        if (delta <= 0) {  // make the Hessian surrogate positive definite
            lambda_bar = 2.0 * (lambda - delta / p_norm2);
            delta = -delta + lambda * p_norm2;
            lambda = lambda_bar;
        }
        const double mu = p.dot(r);
        const double alpha = mu / delta;
        const Eigen::VectorXd w_try = w + alpha * p;
        const double loss_try = loss_at(w_try);
        const double big_delta = 2.0 * delta * (loss - loss_try) / (mu * mu);

        if (big_delta >= 0) {
            w = w_try;
            loss = loss_try;
            grad = grad_at(w);
            const Eigen::VectorXd r_new = -grad;
            lambda_bar = 0;
            success = true;
            if (k % static_cast<int>(np) == 0) {
                p = r_new;  // restart
            } else {
                const double beta = (r_new.squaredNorm() - r_new.dot(r)) / mu;
                p = r_new + beta * p;
            }
            r = r_new;
            if (big_delta >= 0.75) lambda = std::max(lambda * 0.25, 1e-300);
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if (big_delta < 0.25) lambda += delta * (1.0 - big_delta) / p_norm2;
        if (lambda > 1e100) {
            trace.stop_reason = "lambda_overflow";
            break;
        }

        trace.train_loss.push_back(loss);
        const double vl = has_val ? batch_loss(MlpParams::unflatten(arch, w), arch, val.inputs,
                                               val.targets, Loss::cross_entropy)
                                  : loss;
        trace.val_loss.push_back(vl);
        if (vl < best_val - 1e-15) {
            best_val = vl;
            best_w = w;
            trace.best_epoch = static_cast<int>(trace.val_loss.size()) - 1;
            stall = 0;
        } else if (++stall > opts.patience) {
            trace.stop_reason = "patience";
            break;
        }
        if (r.norm() < opts.grad_tol) {
            trace.stop_reason = "converged";
            break;
        }
    }
    if (trace.stop_reason.empty()) trace.stop_reason = "max_epochs";

    TrainResult out;
    out.params = MlpParams::unflatten(arch, has_val ? best_w : w);
    out.trace = std::move(trace);
    return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

SplitIndices split_dataset(const std::vector<std::string>& strata, const SplitSpec& spec,
                           std::uint64_t seed) {
    if (strata.size() < 10) fail_validation("split: need at least 10 records");
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);

    SplitIndices out;
    for (auto& [key, idx] : groups) {
        if (spec.classifier && idx.size() < 2)
            fail_data("stratified split: class '" + key + "' has a single member");
        rng::Splitmix r(rng::derive_seed(seed, key));
        rng::shuffle(idx, r);
        const double n = static_cast<double>(idx.size());
        const std::size_t n_tr = static_cast<std::size_t>(std::floor(spec.train_fraction * n));
        const double rest_half = (1.0 - spec.train_fraction) / 2.0;
        const std::size_t n_val = static_cast<std::size_t>(std::floor(rest_half * n + 0.5));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (k < n_tr)
                out.train.push_back(idx[k]);
            else if (k < n_tr + n_val)
                out.val.push_back(idx[k]);
            else
                out.test.push_back(idx[k]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace faultloc::nn
