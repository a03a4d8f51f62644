#include "seco/tape.hh"

#include <cmath>
#include <string>
#include <utility>

namespace seco {

const Matrix& Var::value() const { return tape->value_of(*this); }

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw ValidationError(msg);
}

void require_same_tape(Var a, Var b) {
    require(a.tape != nullptr && a.tape == b.tape, "tape op: vars from different tapes");
}

}  // namespace

std::int32_t Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<std::int32_t>(nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = false;
    return Var{this, push(std::move(n))};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    Node n;
    ParamEntry& entry = store.at(name);
    n.value = entry.value;
    n.needs_grad = true;
    n.param = &entry;
    return Var{this, push(std::move(n))};
}

Var Tape::frozen(const ParamStore& store, const std::string& name) {
    return constant(store.at(name).value);
}

Var Tape::make_node(Matrix value, std::vector<Var> parents,
                    std::function<void(Tape&, std::int32_t)> backward) {
    Node n;
    n.value = std::move(value);
    for (Var p : parents) {
        require(p.tape == this, "tape op: parent from another tape");
        if (nodes_[static_cast<std::size_t>(p.idx)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.back = std::move(backward);
    return Var{this, push(std::move(n))};
}

const Matrix& Tape::value_of(Var v) const {
    return nodes_[static_cast<std::size_t>(v.idx)].value;
}

const Matrix& Tape::grad_of(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (!n.grad_live) {
        n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        n.grad_live = true;
    }
    return n.grad;
}

bool Tape::needs_grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v.idx)].needs_grad;
}

void Tape::add_grad(Var v, const Matrix& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (!n.needs_grad) return;
    if (!n.grad_live) {
        n.grad = g;
        n.grad_live = true;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var loss) {
    require(loss.tape == this, "backward: var belongs to another tape");
    const Matrix& lv = value_of(loss);
    require(lv.rows() == 1 && lv.cols() == 1, "backward: loss must be 1x1");
    add_grad(loss, Matrix::Ones(1, 1));
    for (std::int32_t i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.needs_grad && n.grad_live && n.back) n.back(*this, i);
    }
    for (auto& n : nodes_) {
        if (n.param != nullptr && n.grad_live) n.param->grad += n.grad;
    }
}

// -- ops ---------------------------------------------------------------------

Var operator+(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    return a.tape->make_node(a.value() + b.value(), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g);
                                 t.add_grad(b, g);
                             });
}

Var operator-(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    return a.tape->make_node(a.value() - b.value(), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g);
                                 t.add_grad(b, -g);
                             });
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    return a.tape->make_node(a.value() * b.value(), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g * b.value().transpose());
                                 t.add_grad(b, a.value().transpose() * g);
                             });
}

Var operator*(Var a, Var b) { return matmul(a, b); }

Var matmul_bt(Var a, Var b) {
    require_same_tape(a, b);
    require(a.cols() == b.cols(), "matmul_bt: column mismatch");
    return a.tape->make_node(a.value() * b.value().transpose(), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g * b.value());
                                 t.add_grad(b, g.transpose() * a.value());
                             });
}

Var hadamard(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
    return a.tape->make_node(a.value().cwiseProduct(b.value()), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g.cwiseProduct(b.value()));
                                 t.add_grad(b, g.cwiseProduct(a.value()));
                             });
}

Var scale(Var a, double s) {
    return a.tape->make_node(s * a.value(), {a}, [a, s](Tape& t, std::int32_t self) {
        t.add_grad(a, s * t.grad_of(Var{&t, self}));
    });
}

Var affine(Var a, double mul, double add) {
    return a.tape->make_node((mul * a.value().array() + add).matrix(), {a},
                             [a, mul](Tape& t, std::int32_t self) {
                                 t.add_grad(a, mul * t.grad_of(Var{&t, self}));
                             });
}

Var add_row_broadcast(Var x, Var row) {
    require_same_tape(x, row);
    require(row.rows() == 1 && row.cols() == x.cols(),
            "add_row_broadcast: row must be 1 x cols");
    Matrix out = x.value();
    out.rowwise() += RowVector(row.value().row(0));
    return x.tape->make_node(std::move(out), {x, row},
                             [x, row](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(x, g);
                                 t.add_grad(row, g.colwise().sum());
                             });
}

Var sigmoid(Var a) {
    Matrix y = seco::sigmoid(a.value());
    return a.tape->make_node(std::move(y), {a}, [a](Tape& t, std::int32_t self) {
        const Matrix& y = t.value_of(Var{&t, self});
        const Matrix& g = t.grad_of(Var{&t, self});
        t.add_grad(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

Var tanh_op(Var a) {
    Matrix y = a.value().array().tanh().matrix();
    return a.tape->make_node(std::move(y), {a}, [a](Tape& t, std::int32_t self) {
        const Matrix& y = t.value_of(Var{&t, self});
        const Matrix& g = t.grad_of(Var{&t, self});
        t.add_grad(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

Var rrelu(Var a, double lower, double upper, Mode mode, Rng* rng) {
    Matrix slopes;
    Matrix y = seco::rrelu(a.value(), lower, upper, mode, rng, &slopes);
    return a.tape->make_node(
        std::move(y), {a}, [a, slopes = std::move(slopes)](Tape& t, std::int32_t self) {
            t.add_grad(a, t.grad_of(Var{&t, self}).cwiseProduct(slopes));
        });
}

Var softmax_rows(Var logits) {
    Matrix y = seco::softmax_rows(logits.value());
    return logits.tape->make_node(std::move(y), {logits},
                                  [logits](Tape& t, std::int32_t self) {
                                      const Matrix& y = t.value_of(Var{&t, self});
                                      const Matrix& g = t.grad_of(Var{&t, self});
                                      Matrix gx(y.rows(), y.cols());
                                      for (Index i = 0; i < y.rows(); ++i) {
                                          const double dot = g.row(i).dot(y.row(i));
                                          gx.row(i) = (g.row(i).array() - dot) *
                                                      y.row(i).array();
                                      }
                                      t.add_grad(logits, gx);
                                  });
}

Var cross_entropy_sum(Var probabilities, std::vector<int> targets) {
    const Matrix& p = probabilities.value();
    require(static_cast<Index>(targets.size()) == p.rows(),
            "cross_entropy_sum: one target per row required");
    double total = 0.0;
    for (Index i = 0; i < p.rows(); ++i) {
        const int tgt = targets[static_cast<std::size_t>(i)];
        require(tgt >= 0 && tgt < p.cols(), "cross_entropy_sum: target out of range");
        total += -std::log(std::max(p(i, tgt), kProbFloor));
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    return probabilities.tape->make_node(
        std::move(out), {probabilities},
        [probabilities, targets = std::move(targets)](Tape& t, std::int32_t self) {
            const double g = t.grad_of(Var{&t, self})(0, 0);
            const Matrix& p = t.value_of(probabilities);
            Matrix gp = Matrix::Zero(p.rows(), p.cols());
            for (Index i = 0; i < p.rows(); ++i) {
                const int tgt = targets[static_cast<std::size_t>(i)];
                if (p(i, tgt) > kProbFloor) gp(i, tgt) = -g / p(i, tgt);
            }
            t.add_grad(probabilities, gp);
        });
}

Var gather_rows(Var x, std::vector<int> ids) {
    const Matrix& v = x.value();
    Matrix out(static_cast<Index>(ids.size()), v.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < v.rows(), "gather_rows: id out of range");
        out.row(static_cast<Index>(i)) = v.row(ids[i]);
    }
    return x.tape->make_node(std::move(out), {x},
                             [x, ids = std::move(ids)](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 Matrix gx = Matrix::Zero(x.rows(), x.cols());
                                 for (std::size_t i = 0; i < ids.size(); ++i)
                                     gx.row(ids[i]) += g.row(static_cast<Index>(i));
                                 t.add_grad(x, gx);
                             });
}

Var group_mean_rows(Var messages, std::vector<int> groups, Index n_groups) {
    const Matrix& m = messages.value();
    require(static_cast<Index>(groups.size()) == m.rows(),
            "group_mean_rows: one group id per row required");
    std::vector<double> counts(static_cast<std::size_t>(n_groups), 0.0);
    for (int g : groups) {
        require(g >= 0 && g < n_groups, "group_mean_rows: group id out of range");
        counts[static_cast<std::size_t>(g)] += 1.0;
    }
    Matrix out = Matrix::Zero(n_groups, m.cols());
    for (std::size_t i = 0; i < groups.size(); ++i)
        out.row(groups[i]) += m.row(static_cast<Index>(i));
    for (Index g = 0; g < n_groups; ++g) {
        const double c = counts[static_cast<std::size_t>(g)];
        if (c > 0.0) out.row(g) /= c;
    }
    return messages.tape->make_node(
        std::move(out), {messages},
        [messages, groups = std::move(groups), counts = std::move(counts)](
            Tape& t, std::int32_t self) {
            const Matrix& g = t.grad_of(Var{&t, self});
            Matrix gm(static_cast<Index>(groups.size()), g.cols());
            for (std::size_t i = 0; i < groups.size(); ++i) {
                gm.row(static_cast<Index>(i)) =
                    g.row(groups[i]) / counts[static_cast<std::size_t>(groups[i])];
            }
            t.add_grad(messages, gm);
        });
}

Var concat_cols(Var a, Var b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows(), "concat_cols: row mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    return a.tape->make_node(std::move(out), {a, b},
                             [a, b](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 t.add_grad(a, g.leftCols(a.cols()));
                                 t.add_grad(b, g.rightCols(b.cols()));
                             });
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    Index rows = 0;
    const Index cols = parts.front().cols();
    for (Var p : parts) {
        require_same_tape(parts.front(), p);
        require(p.cols() == cols, "concat_rows: column mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    Index at = 0;
    for (Var p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    return parts.front().tape->make_node(
        std::move(out), parts, [parts](Tape& t, std::int32_t self) {
            const Matrix& g = t.grad_of(Var{&t, self});
            Index at = 0;
            for (Var p : parts) {
                t.add_grad(p, g.middleRows(at, p.rows()));
                at += p.rows();
            }
        });
}

Var block_rows(Var x, Index start, Index count) {
    require(start >= 0 && count >= 0 && start + count <= x.rows(),
            "block_rows: range out of bounds");
    return x.tape->make_node(x.value().middleRows(start, count), {x},
                             [x, start, count](Tape& t, std::int32_t self) {
                                 const Matrix& g = t.grad_of(Var{&t, self});
                                 Matrix gx = Matrix::Zero(x.rows(), x.cols());
                                 gx.middleRows(start, count) = g;
                                 t.add_grad(x, gx);
                             });
}

Var sum_all(Var x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return x.tape->make_node(std::move(out), {x}, [x](Tape& t, std::int32_t self) {
        const double g = t.grad_of(Var{&t, self})(0, 0);
        t.add_grad(x, Matrix::Constant(x.rows(), x.cols(), g));
    });
}

}  // namespace seco
