#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hybridscope {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// y = W x with W stored out x in. Matrices that are mostly zeros (the
/// hand-built retriever) are executed through a sparse copy.
class Linear {
 public:
  Linear() = default;
  explicit Linear(Eigen::MatrixXd weight);

  const Eigen::MatrixXd& weight() const { return weight_; }
  Eigen::Index rows() const { return weight_.rows(); }
  Eigen::Index cols() const { return weight_.cols(); }
  bool sparse() const { return use_sparse_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// Row-wise application: x is n x in, result is n x out.
  RowMatrix apply_rows(const RowMatrix& x) const;

  /// True when rows [begin, begin + count) are all exactly zero.
  bool zero_rows(Eigen::Index begin, Eigen::Index count) const;
  /// True when columns [begin, begin + count) are all exactly zero.
  bool zero_cols(Eigen::Index begin, Eigen::Index count) const;

 private:
  Eigen::MatrixXd weight_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_;
  bool use_sparse_ = false;
};

}  // namespace hybridscope
