#pragma once

#include "sparse_eq/block_circulant.hpp"
#include "sparse_eq/factorization.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sparse_eq {

/// Type-erased linear operator. Structured operators (triangular solves,
/// circulants, Kronecker blocks) are applied without forming dense matrices;
/// `dense()` materializes on demand.
class LinearMap {
public:
    using Apply = std::function<CVector(const CVector&)>;

    LinearMap() = default;
    LinearMap(Index rows, Index cols, Apply apply, Apply adjoint, std::string label)
        : rows_(rows), cols_(cols), apply_(std::move(apply)), adjoint_(std::move(adjoint)), label_(std::move(label)) {}

    static LinearMap dense(CMatrix m, std::string label = "dense") {
        auto p = std::make_shared<const CMatrix>(std::move(m));
        LinearMap op(p->rows(), p->cols(), [p](const CVector& x) { return CVector(*p * x); },
                     [p](const CVector& x) { return CVector(p->adjoint() * x); }, std::move(label));
        op.dense_ = p;
        return op;
    }

    static LinearMap identity(Index n) {
        LinearMap op(n, n, [](const CVector& x) { return x; }, [](const CVector& x) { return x; }, "identity");
        op.identity_ = true;
        return op;
    }

    /// x -> A^{-1} x for an exact factor.
    static LinearMap factor_inverse(std::shared_ptr<const FactorPair> f) {
        const Index n = f->size();
        return LinearMap(n, n, [f](const CVector& x) { return f->solve(x); },
                         [f](const CVector& x) { return f->solve_adjoint(x); }, "factor_inverse");
    }

    static LinearMap circulant(std::shared_ptr<const BlockCirculant> c, std::string label = "circulant") {
        return LinearMap(c->rows(), c->cols(), [c](const CVector& x) { return c->apply(x); },
                         [c](const CVector& x) { return c->apply_adjoint(x); }, std::move(label));
    }

    /// I_count (x) op, applied block by block.
    static LinearMap block_diagonal(const LinearMap& op, int count) {
        if (count == 1) return op;
        const Index r = op.rows();
        const Index c = op.cols();
        auto fwd = [op, count, r, c](const CVector& x) {
            CVector y(r * count);
            for (int b = 0; b < count; ++b) y.segment(b * r, r) = op.apply(CVector(x.segment(b * c, c)));
            return y;
        };
        auto adj = [op, count, r, c](const CVector& x) {
            CVector y(c * count);
            for (int b = 0; b < count; ++b) y.segment(b * c, c) = op.apply_adjoint(CVector(x.segment(b * r, r)));
            return y;
        };
        LinearMap out(r * count, c * count, fwd, adj, "kron(I," + op.label() + ")");
        out.identity_ = op.identity_;
        return out;
    }

    /// Keeps the listed columns, in the given order.
    static LinearMap select_columns(const LinearMap& op, std::vector<Index> kept) {
        for (Index k : kept)
            if (k < 0 || k >= op.cols()) throw std::invalid_argument("select_columns: index out of range");
        auto ks = std::make_shared<const std::vector<Index>>(std::move(kept));
        const Index n = op.cols();
        auto fwd = [op, ks, n](const CVector& x) {
            CVector full = CVector::Zero(n);
            for (std::size_t j = 0; j < ks->size(); ++j) full((*ks)[j]) = x(Index(j));
            return op.apply(full);
        };
        auto adj = [op, ks](const CVector& x) {
            const CVector full = op.apply_adjoint(x);
            CVector y(Index(ks->size()));
            for (std::size_t j = 0; j < ks->size(); ++j) y(Index(j)) = full((*ks)[j]);
            return y;
        };
        LinearMap out(op.rows(), Index(ks->size()), fwd, adj, op.label() + "[cols]");
        if (op.dense_) {
            CMatrix m(op.rows(), Index(ks->size()));
            for (std::size_t j = 0; j < ks->size(); ++j) m.col(Index(j)) = op.dense_->col((*ks)[j]);
            out.dense_ = std::make_shared<const CMatrix>(std::move(m));
        }
        return out;
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    const std::string& label() const { return label_; }
    bool is_identity() const { return identity_; }
    bool has_dense() const { return static_cast<bool>(dense_); }

    CVector apply(const CVector& x) const {
        if (x.size() != cols_) throw std::invalid_argument("LinearMap::apply: length mismatch");
        return apply_(x);
    }
    CVector apply_adjoint(const CVector& x) const {
        if (x.size() != rows_) throw std::invalid_argument("LinearMap::apply_adjoint: length mismatch");
        return adjoint_(x);
    }

    /// op * M, column by column (or one product when op is stored dense).
    CMatrix apply(const CMatrix& m) const {
        if (identity_) return m;
        if (dense_) return *dense_ * m;
        CMatrix out(rows_, m.cols());
        for (Index c = 0; c < m.cols(); ++c) out.col(c) = apply_(CVector(m.col(c)));
        return out;
    }

    CVector column(Index j) const {
        if (dense_) return dense_->col(j);
        CVector e = CVector::Zero(cols_);
        e(j) = 1.0;
        return apply_(e);
    }

    CMatrix dense() const {
        if (dense_) return *dense_;
        if (identity_ && rows_ == cols_) return CMatrix::Identity(rows_, cols_);
        CMatrix out(rows_, cols_);
        for (Index j = 0; j < cols_; ++j) out.col(j) = column(j);
        return out;
    }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    Apply apply_;
    Apply adjoint_;
    std::string label_;
    std::shared_ptr<const CMatrix> dense_;
    bool identity_ = false;
};

}  // namespace sparse_eq
