#pragma once

#include "rtrl/common.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace rtrl::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reverse-mode tape over matrix-valued nodes. Columns are batch samples.
// Parameters live in one flat external vector; gradients accumulate into an
// equally shaped vector owned by the tape.
class Tape {
  public:
    struct Var {
        int id = -1;
    };

    explicit Tape(const VectorXd* params = nullptr) : params_(params) {
        if (params_) grad = VectorXd::Zero(params_->size());
    }

    const MatrixXd& val(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const {
        const MatrixXd& m = val(v);
        if (m.size() != 1) throw SpecError("Tape: scalar() on non-scalar node");
        return m(0, 0);
    }

    Var constant(MatrixXd m, const char* name = "constant") {
        return push(std::move(m), name, nullptr);
    }

    // View of params[offset .. offset+rows*cols) as a rows x cols matrix
    // (column-major). Backward accumulates into the flat gradient.
    Var param(int offset, int rows, int cols, const char* name = "param") {
        if (!params_) throw SpecError("Tape: no parameter vector attached");
        if (offset < 0 || offset + rows * cols > params_->size())
            throw SpecError("Tape: parameter slice out of range");
        MatrixXd m = Eigen::Map<const MatrixXd>(params_->data() + offset, rows, cols);
        Var v = push(std::move(m), name, nullptr);
        int id = v.id;
        nodes_[id].backward = [this, id, offset, rows, cols]() {
            Eigen::Map<MatrixXd>(grad.data() + offset, rows, cols) += nodes_[id].grad;
        };
        return v;
    }

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        Var v = push(val(a) + val(b), "add", nullptr);
        binary(v, a, b, [](const MatrixXd& g) { return g; },
               [](const MatrixXd& g) { return g; });
        return v;
    }

    Var sub(Var a, Var b) {
        check_same_shape(a, b, "sub");
        Var v = push(val(a) - val(b), "sub", nullptr);
        binary(v, a, b, [](const MatrixXd& g) { return g; },
               [](const MatrixXd& g) { return MatrixXd(-g); });
        return v;
    }

    Var mul(Var a, Var b) {  // elementwise
        check_same_shape(a, b, "mul");
        Var v = push(val(a).cwiseProduct(val(b)), "mul", nullptr);
        int ia = a.id, ib = b.id;
        binary(v, a, b,
               [this, ib](const MatrixXd& g) { return MatrixXd(g.cwiseProduct(nodes_[ib].value)); },
               [this, ia](const MatrixXd& g) { return MatrixXd(g.cwiseProduct(nodes_[ia].value)); });
        return v;
    }

    Var matmul(Var a, Var b) {
        if (val(a).cols() != val(b).rows()) throw SpecError("Tape: matmul shape mismatch");
        Var v = push(val(a) * val(b), "matmul", nullptr);
        int ia = a.id, ib = b.id;
        binary(v, a, b,
               [this, ib](const MatrixXd& g) { return MatrixXd(g * nodes_[ib].value.transpose()); },
               [this, ia](const MatrixXd& g) { return MatrixXd(nodes_[ia].value.transpose() * g); });
        return v;
    }

    // m + column vector broadcast across columns (bias add over a batch)
    Var add_col(Var m, Var col) {
        if (val(col).cols() != 1 || val(col).rows() != val(m).rows())
            throw SpecError("Tape: add_col shape mismatch");
        Var v = push(val(m).colwise() + Eigen::VectorXd(val(col).col(0)), "add_col", nullptr);
        binary(v, m, col, [](const MatrixXd& g) { return g; },
               [](const MatrixXd& g) { return MatrixXd(g.rowwise().sum()); });
        return v;
    }

    // m - row vector broadcast across rows
    Var sub_row(Var m, Var row) {
        if (val(row).rows() != 1 || val(row).cols() != val(m).cols())
            throw SpecError("Tape: sub_row shape mismatch");
        Var v = push(val(m).rowwise() - Eigen::RowVectorXd(val(row).row(0)), "sub_row", nullptr);
        binary(v, m, row, [](const MatrixXd& g) { return g; },
               [](const MatrixXd& g) { return MatrixXd(-g.colwise().sum()); });
        return v;
    }

    Var scale(Var a, double c) {
        Var v = push(val(a) * c, "scale", nullptr);
        unary(v, a, [c](const MatrixXd& g) { return MatrixXd(g * c); });
        return v;
    }

    Var add_scalar(Var a, double c) {
        Var v = push((val(a).array() + c).matrix(), "add_scalar", nullptr);
        unary(v, a, [](const MatrixXd& g) { return g; });
        return v;
    }

    Var relu(Var a) {
        Var v = push(val(a).cwiseMax(0.0), "relu", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            return MatrixXd(((nodes_[ia].value.array() > 0.0).cast<double>() * g.array()).matrix());
        });
        return v;
    }

    Var tanh(Var a) {
        Var v = push(val(a).array().tanh().matrix(), "tanh", nullptr);
        int iv = v.id;
        unary(v, a, [this, iv](const MatrixXd& g) {
            return MatrixXd(((1.0 - nodes_[iv].value.array().square()) * g.array()).matrix());
        });
        return v;
    }

    Var exp(Var a) {
        Var v = push(val(a).array().exp().matrix(), "exp", nullptr);
        int iv = v.id;
        unary(v, a, [this, iv](const MatrixXd& g) {
            return MatrixXd((nodes_[iv].value.array() * g.array()).matrix());
        });
        return v;
    }

    Var log(Var a) {
        Var v = push(val(a).array().log().matrix(), "log", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            return MatrixXd((g.array() / nodes_[ia].value.array()).matrix());
        });
        return v;
    }

    Var square(Var a) {
        Var v = push(val(a).array().square().matrix(), "square", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            return MatrixXd((2.0 * nodes_[ia].value.array() * g.array()).matrix());
        });
        return v;
    }

    // log(1 + exp(x)), numerically stable
    Var softplus(Var a) {
        MatrixXd out = (val(a).array().max(0.0) + (-val(a).array().abs()).exp().log1p()).matrix();
        Var v = push(std::move(out), "softplus", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            // sigmoid(x) = 1 / (1 + exp(-x))
            return MatrixXd((g.array() / (1.0 + (-nodes_[ia].value.array()).exp())).matrix());
        });
        return v;
    }

    // Elementwise min; gradient routes to the smaller argument (ties to a).
    Var cwise_min(Var a, Var b) {
        check_same_shape(a, b, "cwise_min");
        Var v = push(val(a).cwiseMin(val(b)), "cwise_min", nullptr);
        int ia = a.id, ib = b.id;
        binary(v, a, b,
               [this, ia, ib](const MatrixXd& g) {
                   return MatrixXd(
                       ((nodes_[ia].value.array() <= nodes_[ib].value.array()).cast<double>() *
                        g.array()).matrix());
               },
               [this, ia, ib](const MatrixXd& g) {
                   return MatrixXd(
                       ((nodes_[ia].value.array() > nodes_[ib].value.array()).cast<double>() *
                        g.array()).matrix());
               });
        return v;
    }

    // Clamp; gradient is zero where the input was clipped.
    Var clamp(Var a, double lo, double hi) {
        Var v = push(val(a).cwiseMax(lo).cwiseMin(hi), "clamp", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia, lo, hi](const MatrixXd& g) {
            return MatrixXd((((nodes_[ia].value.array() >= lo) &&
                              (nodes_[ia].value.array() <= hi))
                                 .cast<double>() *
                             g.array()).matrix());
        });
        return v;
    }

    Var rows(Var a, int r0, int n) {
        if (r0 < 0 || r0 + n > val(a).rows()) throw SpecError("Tape: rows() out of range");
        Var v = push(val(a).middleRows(r0, n), "rows", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia, r0, n](const MatrixXd& g) {
            MatrixXd full = MatrixXd::Zero(nodes_[ia].value.rows(), nodes_[ia].value.cols());
            full.middleRows(r0, n) = g;
            return full;
        });
        return v;
    }

    Var vcat(Var a, Var b) {
        if (val(a).cols() != val(b).cols()) throw SpecError("Tape: vcat column mismatch");
        MatrixXd out(val(a).rows() + val(b).rows(), val(a).cols());
        out << val(a), val(b);
        Var v = push(std::move(out), "vcat", nullptr);
        int ra = static_cast<int>(val(a).rows()), rb = static_cast<int>(val(b).rows());
        binary(v, a, b,
               [ra](const MatrixXd& g) { return MatrixXd(g.topRows(ra)); },
               [ra, rb](const MatrixXd& g) { return MatrixXd(g.middleRows(ra, rb)); });
        return v;
    }

    Var colsum(Var a) {  // 1 x C
        Var v = push(val(a).colwise().sum(), "colsum", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            return MatrixXd(g.replicate(nodes_[ia].value.rows(), 1));
        });
        return v;
    }

    Var sum(Var a) {  // 1 x 1
        MatrixXd out(1, 1);
        out(0, 0) = val(a).sum();
        Var v = push(std::move(out), "sum", nullptr);
        int ia = a.id;
        unary(v, a, [this, ia](const MatrixXd& g) {
            return MatrixXd::Constant(nodes_[ia].value.rows(), nodes_[ia].value.cols(), g(0, 0));
        });
        return v;
    }

    Var mean(Var a) {
        double n = static_cast<double>(val(a).size());
        return scale(sum(a), 1.0 / n);
    }

    // Accumulates d(loss)/d(params) into `grad`. Throws on a non-finite
    // intermediate, naming the offending node.
    void backward(Var loss) {
        if (val(loss).size() != 1) throw SpecError("Tape: backward() needs a scalar loss");
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (!nodes_[i].value.allFinite())
                throw SpecError(std::string("Tape: non-finite value at node '") +
                                nodes_[i].name + "' (#" + std::to_string(i) + ")");
        for (auto& n : nodes_)
            n.grad = MatrixXd::Zero(n.value.rows(), n.value.cols());
        nodes_[loss.id].grad(0, 0) = 1.0;
        for (int i = loss.id; i >= 0; --i)
            if (nodes_[i].backward) nodes_[i].backward();
    }

    VectorXd grad;  // same length as the attached parameter vector

  private:
    struct Node {
        MatrixXd value;
        MatrixXd grad;
        const char* name;
        std::function<void()> backward;
    };

    Var push(MatrixXd value, const char* name, std::function<void()> backward) {
        nodes_.push_back({std::move(value), {}, name, std::move(backward)});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void check_same_shape(Var a, Var b, const char* op) const {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw SpecError(std::string("Tape: ") + op + " shape mismatch");
    }

    template <class Fa>
    void unary(Var v, Var a, Fa fa) {
        int iv = v.id, ia = a.id;
        nodes_[iv].backward = [this, iv, ia, fa]() { nodes_[ia].grad += fa(nodes_[iv].grad); };
    }

    template <class Fa, class Fb>
    void binary(Var v, Var a, Var b, Fa fa, Fb fb) {
        int iv = v.id, ia = a.id, ib = b.id;
        nodes_[iv].backward = [this, iv, ia, ib, fa, fb]() {
            nodes_[ia].grad += fa(nodes_[iv].grad);
            nodes_[ib].grad += fb(nodes_[iv].grad);
        };
    }

    const VectorXd* params_;
    std::vector<Node> nodes_;
};

}  // namespace rtrl::ad
