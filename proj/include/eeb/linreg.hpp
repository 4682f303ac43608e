#pragma once

#include <cstddef>

#include "eeb/matrix.hpp"
#include "eeb/model.hpp"
#include "eeb/windowing.hpp"

namespace eeb {

struct LinearFit {
  Vector coefficients;  // [intercept, slopes...] when X carries a leading ones column
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

// Least squares b = argmin ||X b - y||^2. Rank-deficient designs yield the
// minimum-norm solution with `rank_deficient` set.
LinearFit fit_linear_regression_closed_form(const RowMatrix& X, const Vector& y);

struct GradientDescentOptions {
  std::size_t max_iterations = 200000;
  double tolerance = 1e-12;  // stop when ||gradient||_inf falls below
};

// Full-batch gradient descent on the same objective, step 1 / Lipschitz constant.
// Independent route used to cross-check the closed form.
LinearFit fit_linear_regression_gradient_descent(const RowMatrix& X, const Vector& y,
                                                 const GradientDescentOptions& options = {});

// Design matrix [1, x_last_step] over every window of `data`.
RowMatrix linreg_design(const WindowedDataset& data);
Vector window_targets(const WindowedDataset& data);

// Solves the closed form on `data` and writes it into a LinReg model's parameters.
LinearFit fit_linreg_model(ModelInstance& model, const WindowedDataset& data);

}  // namespace eeb
