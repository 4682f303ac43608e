#include "eeb/linreg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "eeb/errors.hpp"

namespace eeb {

LinearFit fit_linear_regression_closed_form(const RowMatrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw ContractError("design matrix and target length differ");
  if (X.rows() == 0 || X.cols() == 0) throw DomainError("empty design matrix");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  LinearFit fit;
  fit.coefficients = cod.solve(y);
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < X.cols();
  return fit;
}

LinearFit fit_linear_regression_gradient_descent(const RowMatrix& X, const Vector& y,
                                                 const GradientDescentOptions& options) {
  if (X.rows() != y.size()) throw ContractError("design matrix and target length differ");
  if (X.rows() == 0 || X.cols() == 0) throw DomainError("empty design matrix");
  const double n = static_cast<double>(X.rows());
  const Eigen::MatrixXd gram = (X.transpose() * X) / n;
  const Vector xty = (X.transpose() * y) / n;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
  if (!(lipschitz > 0.0)) throw DomainError("design matrix is identically zero");

  LinearFit fit;
  fit.coefficients = Vector::Zero(X.cols());
  const double step = 1.0 / lipschitz;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Vector grad = gram * fit.coefficients - xty;
    if (grad.lpNorm<Eigen::Infinity>() < options.tolerance) break;
    fit.coefficients -= step * grad;
  }
  fit.rank = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(X).rank();
  fit.rank_deficient = fit.rank < X.cols();
  return fit;
}

RowMatrix linreg_design(const WindowedDataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto c = static_cast<Eigen::Index>(data.n_channels());
  RowMatrix X(n, c + 1);
  X.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto f = data.features(static_cast<std::size_t>(i));
    X.row(i).tail(c) = f.row(f.rows() - 1);
  }
  return X;
}

Vector window_targets(const WindowedDataset& data) {
  Vector y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y(static_cast<Eigen::Index>(i)) = data.windows[i].target;
  return y;
}

LinearFit fit_linreg_model(ModelInstance& model, const WindowedDataset& data) {
  if (model.spec().family != ModelFamily::linreg) throw ContractError("closed-form fit needs a linreg model");
  if (data.n_channels() != model.n_channels()) throw ContractError("dataset channel count differs from model");
  if (data.empty()) throw ConfigError("no training windows for the linear regression");
  auto fit = fit_linear_regression_closed_form(linreg_design(data), window_targets(data));
  auto w = model.parameter("linear.weight").mutable_data();
  auto b = model.parameter("linear.bias").mutable_data();
  b[0] = fit.coefficients(0);
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = fit.coefficients(static_cast<Eigen::Index>(j + 1));
  return fit;
}

}  // namespace eeb
