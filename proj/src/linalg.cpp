#include "ns2d/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace ns2d::linalg {

void SparseMatrix::compress() {
    matrix_.resize(rows_, cols_);
    matrix_.setFromTriplets(triplets_.begin(), triplets_.end());
    matrix_.makeCompressed();
    triplets_.clear();
    triplets_.shrink_to_fit();
    compressed_ = true;
}

const Eigen::SparseMatrix<double>& SparseMatrix::eigen() const {
    if (!compressed_) throw NumericalError("SparseMatrix: compress() before use");
    return matrix_;
}

Eigen::SparseMatrix<double>& SparseMatrix::eigen() {
    if (!compressed_) throw NumericalError("SparseMatrix: compress() before use");
    return matrix_;
}

Vector SparseMatrix::multiply(const Vector& x) const { return eigen() * x; }

SparseMatrix SparseMatrix::transpose() const {
    return SparseMatrix(Eigen::SparseMatrix<double>(eigen().transpose()));
}

LuFactorization::LuFactorization(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw NumericalError("LU: matrix must be square");
    lu_.analyzePattern(a.eigen());
    lu_.factorize(a.eigen());
    if (lu_.info() != Eigen::Success)
        throw NumericalError("LU factorization failed (singular pivot): " +
                             lu_.lastErrorMessage());
    fill_ = lu_.nnzL() + lu_.nnzU();
}

Vector LuFactorization::solve(const Vector& b) const {
    Vector x = lu_.solve(b);
    if (lu_.info() != Eigen::Success) throw NumericalError("LU solve failed");
    return x;
}

Vector solve(const SparseMatrix& a, const Vector& b) { return LuFactorization(a).solve(b); }

namespace {

Eigen::SparseMatrix<double> pin_dof(const Eigen::SparseMatrix<double>& m, int pin) {
    if (pin < 0) return m;
    Eigen::SparseMatrix<double> out = m;
    for (int k = 0; k < out.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(out, k); it; ++it)
            if (it.row() == pin || it.col() == pin) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
    out.prune(0.0);
    return out;
}

} // namespace

GenEigResult max_generalized_eig(const SparseMatrix& k, const SparseMatrix& m, int pin,
                                 double tol, int max_subspace, int max_restarts) {
    const auto& kmat = k.eigen();
    const Eigen::SparseMatrix<double> mmat = pin_dof(m.eigen(), pin);
    const int n = static_cast<int>(kmat.rows());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mfac;
    mfac.compute(mmat);
    if (mfac.info() != Eigen::Success)
        throw NumericalError("max_generalized_eig: M factorization failed (pin a DOF in ker M)");

    std::mt19937 rng(12345);
    std::normal_distribution<double> dist;
    Vector start(n);
    for (int i = 0; i < n; ++i) start[i] = dist(rng);
    if (pin >= 0) start[pin] = 0.0;
    // project the start vector into range(M^{-1}K) so ker K components vanish
    start = mfac.solve(kmat * start);

    GenEigResult best;
    int total_iters = 0;
    for (int restart = 0; restart <= max_restarts; ++restart) {
        std::vector<Vector> q;      // M-orthonormal Lanczos basis
        std::vector<Vector> mq;     // M * q_j, cached
        std::vector<double> alpha, beta;

        Vector v = start;
        Vector mv = mmat * v;
        double nrm = std::sqrt(std::max(v.dot(mv), 0.0));
        if (nrm <= 0.0) throw NumericalError("max_generalized_eig: degenerate start vector");
        q.push_back(v / nrm);
        mq.push_back(mv / nrm);

        for (int j = 0; j < max_subspace; ++j) {
            Vector w = mfac.solve(kmat * q[j]);
            const double a = w.dot(mq[j]);
            alpha.push_back(a);
            w -= a * q[j];
            if (j > 0) w -= beta[j - 1] * q[j - 1];
            // full reorthogonalization against the basis (M inner product)
            for (std::size_t l = 0; l < q.size(); ++l) w -= w.dot(mq[l]) * q[l];
            Vector mw = mmat * w;
            const double b = std::sqrt(std::max(w.dot(mw), 0.0));
            ++total_iters;
            if (b < 1e-14) break;
            beta.push_back(b);
            q.push_back(w / b);
            mq.push_back(mw / b);
        }

        const int mdim = static_cast<int>(alpha.size());
        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(mdim, mdim);
        for (int i = 0; i < mdim; ++i) {
            tri(i, i) = alpha[i];
            if (i + 1 < mdim) tri(i, i + 1) = tri(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
        const int top = mdim - 1;
        Vector ritz = Vector::Zero(n);
        for (int i = 0; i < mdim; ++i) ritz += es.eigenvectors()(i, top) * q[i];
        const double lambda = es.eigenvalues()(top);

        const Vector kv = kmat * ritz;
        const double resid = (kv - lambda * (mmat * ritz)).norm();
        const double rel = resid / std::max(kv.norm(), 1e-300);
        if (best.eigenvector.size() == 0 || rel < best.relative_residual) {
            best = {lambda, ritz, total_iters, rel};
        }
        if (rel <= tol) break;
        start = ritz;
    }
    if (best.relative_residual > tol)
        throw NumericalError("max_generalized_eig: no convergence, relative residual = " +
                             std::to_string(best.relative_residual));
    best.iterations = total_iters;
    return best;
}

void export_coordinate(const SparseMatrix& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const auto& m = a.eigen();
    char buf[64];
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
            std::snprintf(buf, sizeof(buf), "%ld %ld %.17g\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            out << buf;
        }
}

SparseMatrix import_coordinate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<Triplet> trips;
    int max_row = -1, max_col = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int r, c;
        double v;
        if (!(ss >> r >> c >> v)) throw std::runtime_error("bad coordinate line: " + line);
        trips.emplace_back(r, c, v);
        max_row = std::max(max_row, r);
        max_col = std::max(max_col, c);
    }
    SparseMatrix a(max_row + 1, max_col + 1);
    a.add_triplets(trips);
    a.compress();
    return a;
}

} // namespace ns2d::linalg
