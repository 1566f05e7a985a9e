#include "hybridscope/linear.hpp"

namespace hybridscope {

namespace {
constexpr double kSparseDensity = 0.1;
}

Linear::Linear(Eigen::MatrixXd weight) : weight_(std::move(weight)) {
  const Eigen::Index total = weight_.size();
  if (total == 0) return;
  const Eigen::Index nnz = (weight_.array() != 0.0).count();
  if (static_cast<double>(nnz) <= kSparseDensity * static_cast<double>(total)) {
    sparse_ = weight_.sparseView();
    sparse_.makeCompressed();
    use_sparse_ = true;
  }
}

Eigen::VectorXd Linear::apply(const Eigen::VectorXd& x) const {
  if (use_sparse_) return sparse_ * x;
  return weight_ * x;
}

RowMatrix Linear::apply_rows(const RowMatrix& x) const {
  if (use_sparse_) {
    RowMatrix out = (sparse_ * x.transpose()).transpose();
    return out;
  }
  RowMatrix out = x * weight_.transpose();
  return out;
}

bool Linear::zero_rows(Eigen::Index begin, Eigen::Index count) const {
  return (weight_.middleRows(begin, count).array() == 0.0).all();
}

bool Linear::zero_cols(Eigen::Index begin, Eigen::Index count) const {
  return (weight_.middleCols(begin, count).array() == 0.0).all();
}

}  // namespace hybridscope
