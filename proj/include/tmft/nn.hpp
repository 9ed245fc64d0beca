#pragma once

#include "tmft/common.hpp"

namespace tmft {

double gelu(double x);
double dgelu(double x);

// Rowwise layer norm; fills xhat and rstd for the backward pass.
Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, double eps, Mat& xhat,
               Vec& rstd);
// Returns dx; accumulates into dgamma/dbeta.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& rstd, const Mat& gamma,
                        Mat& dgamma, Mat& dbeta);

// Inverted dropout: entries are 0 or 1/(1-p).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

void softmax_rows(Mat& s);

}  // namespace tmft
