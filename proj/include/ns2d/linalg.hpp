#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <string>
#include <vector>

#include "ns2d/geometry.hpp"

namespace ns2d::linalg {

using Vector = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

/// Sparse matrix built from triplet lists (duplicates summed on compression).
class SparseMatrix {
  public:
    SparseMatrix() = default;
    SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {}
    explicit SparseMatrix(Eigen::SparseMatrix<double> m)
        : rows_(static_cast<int>(m.rows())), cols_(static_cast<int>(m.cols())),
          matrix_(std::move(m)), compressed_(true) {
        matrix_.makeCompressed();
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    void add(int row, int col, double value) { triplets_.emplace_back(row, col, value); }
    void add_triplets(const std::vector<Triplet>& t) {
        triplets_.insert(triplets_.end(), t.begin(), t.end());
    }

    void compress();
    bool is_compressed() const { return compressed_; }

    Vector multiply(const Vector& x) const;
    SparseMatrix transpose() const;

    const Eigen::SparseMatrix<double>& eigen() const;
    Eigen::SparseMatrix<double>& eigen();

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Triplet> triplets_;
    Eigen::SparseMatrix<double> matrix_;
    bool compressed_ = false;
};

/// Sparse LU with partial pivoting; reusable for repeated solves.
class LuFactorization {
  public:
    explicit LuFactorization(const SparseMatrix& a);
    Vector solve(const Vector& b) const;
    long nonzeros_factored() const { return fill_; }

  private:
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
    long fill_ = 0;
};

/// One-shot solve of a square system.
Vector solve(const SparseMatrix& a, const Vector& b);

struct GenEigResult {
    double lambda = 0.0;
    Vector eigenvector; // M-normalized
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Largest eigenvalue of the symmetric pencil K v = Lambda M v, K and M
/// positive semidefinite. ker M is handled by pinning one DOF (pass
/// pin_dof >= 0) before factorizing M; Lanczos in the M inner product with
/// full reorthogonalization.
GenEigResult max_generalized_eig(const SparseMatrix& k, const SparseMatrix& m, int pin_dof = -1,
                                 double tol = 1e-8, int max_subspace = 160, int max_restarts = 8);

/// Coordinate-format text export/import: one "row col value" line per entry,
/// 17 significant digits.
void export_coordinate(const SparseMatrix& a, const std::string& path);
SparseMatrix import_coordinate(const std::string& path);

} // namespace ns2d::linalg
