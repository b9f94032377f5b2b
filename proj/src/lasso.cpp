#include <Eigen/Dense>

#include <cmath>

#include "rowserve/lime.hpp"

namespace rowserve::lime {

namespace {

// Sweep-change threshold. 1e-9 proved too loose: the residual coefficient
// error after stopping is a small multiple of the last change, which broke the
// 1e-9 agreement with the normal-equations solution on exhaustive mask sets.
constexpr double kTol = 1e-13;
constexpr int kMaxSweeps = 10000;

double soft_threshold(double a, double b) {
    if (a > b) return a - b;
    if (a < -b) return a + b;
    return 0.0;
}

Eigen::MatrixXd mask_matrix(const std::vector<Mask>& X) {
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto d = static_cast<Eigen::Index>(X.empty() ? 0 : X[0].size());
    Eigen::MatrixXd M(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            M(i, j) = X[static_cast<size_t>(i)][static_cast<size_t>(j)] ? 1.0 : 0.0;
        }
    }
    return M;
}

}  // namespace

double default_l1_penalty(const std::vector<Mask>& X, const std::vector<double>& y,
                          const std::vector<double>& w) {
    Eigen::MatrixXd M = mask_matrix(X);
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
    double wsum = wv.sum();
    if (wsum <= 0 || M.cols() == 0) return 0.0;
    Eigen::VectorXd corr = M.transpose() * (wv.array() * yv.array()).matrix();
    return 0.01 * corr.cwiseAbs().maxCoeff() / wsum;
}

LassoFit fit_weighted_lasso(const std::vector<Mask>& X, const std::vector<double>& y,
                            const std::vector<double>& w, double l1_penalty) {
    const size_t n = X.size();
    if (n == 0 || y.size() != n || w.size() != n) {
        throw Error("lasso: X, y, w must agree and be non-empty");
    }
    const size_t d = X[0].size();
    for (const auto& m : X) {
        if (m.size() != d) throw Error("lasso: ragged mask matrix");
    }
    double wsum = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(w[i]) || w[i] < 0) {
            throw Error("lasso: non-finite input or negative weight");
        }
        wsum += w[i];
    }
    if (wsum <= 0) throw Error("lasso: weights must not all be zero");
    if (l1_penalty < 0 || !std::isfinite(l1_penalty)) {
        throw Error("lasso: penalty must be finite and non-negative");
    }

    Eigen::MatrixXd M = mask_matrix(X);
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
    Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(n));

    // z_j = sum_i w_i x_ij^2; for 0/1 masks this is the weighted on-count
    Eigen::VectorXd z(M.cols());
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        z(j) = (wv.array() * M.col(j).array().square()).sum();
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(M.cols());
    double intercept = (wv.array() * yv.array()).sum() / wsum;
    Eigen::VectorXd residual = yv - Eigen::VectorXd::Constant(yv.size(), intercept);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_change = 0;

        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            if (z(j) == 0.0) {
                if (beta(j) != 0.0) {
                    residual += M.col(j) * beta(j);
                    max_change = std::max(max_change, std::abs(beta(j)));
                    beta(j) = 0.0;
                }
                continue;
            }
            // rho_j = sum_i w_i x_ij (residual_i + x_ij beta_j)
            double rho = (wv.array() * M.col(j).array() * residual.array()).sum() +
                         z(j) * beta(j);
            double updated = soft_threshold(rho, l1_penalty / 2.0) / z(j);
            double change = updated - beta(j);
            if (change != 0.0) {
                residual -= M.col(j) * change;
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(change));
            }
        }

        // intercept unpenalized: weighted mean of the partial residual
        double new_intercept =
            intercept + (wv.array() * residual.array()).sum() / wsum;
        double ichange = new_intercept - intercept;
        if (ichange != 0.0) {
            residual.array() -= ichange;
            intercept = new_intercept;
            max_change = std::max(max_change, std::abs(ichange));
        }

        if (max_change < kTol) break;
    }

    LassoFit fit;
    fit.intercept = intercept;
    fit.weights.assign(beta.data(), beta.data() + beta.size());
    return fit;
}

}  // namespace rowserve::lime
