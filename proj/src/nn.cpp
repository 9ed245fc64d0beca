#include "tmft/nn.hpp"

#include <cmath>

namespace tmft {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double dgelu(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& xhat,
               Vec& rstd) {
    const Eigen::Index n = x.rows(), m = x.cols();
    xhat.resize(n, m);
    rstd.resize(n);
    Mat y(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = x.row(i).mean();
        double var = (x.row(i).array() - mu).square().mean();
        double r = 1.0 / std::sqrt(var + eps);
        rstd(i) = r;
        xhat.row(i) = (x.row(i).array() - mu) * r;
        y.row(i) = xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    }
    return y;
}

Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, const Mat& gamma,
                        Mat& dgamma, Mat& dbeta) {
    const Eigen::Index n = dy.rows(), m = dy.cols();
    dgamma.row(0) += (dy.cwiseProduct(xhat)).colwise().sum();
    dbeta.row(0) += dy.colwise().sum();
    Mat dx(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd dxh = dy.row(i).cwiseProduct(gamma.row(0));
        double m1 = dxh.mean();
        double m2 = dxh.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) = rstd(i) * (dxh.array() - m1 - xhat.row(i).array() * m2);
    }
    return dx;
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Mat mask(rows, cols);
    std::bernoulli_distribution keep(1.0 - p);
    double scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = keep(rng) ? scale : 0.0;
    return mask;
}

void softmax_rows(Mat& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
    }
}

}  // namespace tmft
