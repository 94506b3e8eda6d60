#include "thyme/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "thyme/error.hpp"

namespace thyme {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

long numel(const Shape& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
}

namespace detail {

void Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

} // namespace detail

namespace {

using detail::Node;

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != static_cast<long>(values.size()))
        fail("dim-mismatch", "value count " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

// Output node whose requires_grad is inherited from any differentiable parent.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               std::function<void(Node&)> backprop) {
    auto n = make_node(std::move(shape), std::move(values), false);
    for (const Tensor& t : inputs) {
        if (t.defined() && t.node()->requires_grad) n->requires_grad = true;
    }
    if (n->requires_grad) {
        for (const Tensor& t : inputs)
            if (t.defined()) n->parents.push_back(t.handle());
        n->backprop = std::move(backprop);
    }
    return Tensor::wrap(n);
}

void require_2d(const Tensor& t, const char* who) {
    if (!t.defined() || t.shape().size() != 2)
        fail("dim-mismatch", std::string(who) + " expects a 2-D tensor, got " +
                                 (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        fail("dim-mismatch", std::string(who) + ": shapes " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
}

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    long n = numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                            requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> values) {
    long n = static_cast<long>(values.size());
    return from({1, n}, std::move(values));
}

const Shape& Tensor::shape() const { return node_->shape; }

long Tensor::rows() const {
    if (shape().size() != 2) fail("dim-mismatch", "rows() on tensor of shape " + shape_str(shape()));
    return shape()[0];
}

long Tensor::cols() const {
    if (shape().size() != 2) fail("dim-mismatch", "cols() on tensor of shape " + shape_str(shape()));
    return shape()[1];
}

long Tensor::size() const { return static_cast<long>(node_->value.size()); }

bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::operator()(long r, long c) const { return node_->value[static_cast<std::size_t>(r * cols() + c)]; }

double Tensor::value_at(long flat) const { return node_->value[static_cast<std::size_t>(flat)]; }

const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() { return node_->value; }

const std::vector<double>& Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::backward() const {
    if (!defined() || size() != 1) fail("dim-mismatch", "backward() root must hold exactly one value");
    if (!node_->requires_grad) return;

    // Depth-first post-order over parents; creation order of the graph makes
    // this deterministic run to run.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

double stable_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const long n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k)
        fail("dim-mismatch", "matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));

    std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (long i = 0; i < n; ++i)
        for (long l = 0; l < k; ++l) {
            const double ail = av[static_cast<std::size_t>(i * k + l)];
            if (ail == 0.0) continue;
            for (long j = 0; j < m; ++j)
                out[static_cast<std::size_t>(i * m + j)] += ail * bv[static_cast<std::size_t>(l * m + j)];
        }

    auto an = a.handle();
    auto bn = b.handle();
    return make_op({n, m}, std::move(out), {a, b}, [an, bn, n, k, m](Node& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            an->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (long j = 0; j < m; ++j)
                        acc += g[static_cast<std::size_t>(i * m + j)] *
                               bn->value[static_cast<std::size_t>(l * m + j)];
                    an->grad[static_cast<std::size_t>(i * k + l)] += acc;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (long l = 0; l < k; ++l)
                for (long j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (long i = 0; i < n; ++i)
                        acc += an->value[static_cast<std::size_t>(i * k + l)] *
                               g[static_cast<std::size_t>(i * m + j)];
                    bn->grad[static_cast<std::size_t>(l * m + j)] += acc;
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const long n = a.rows(), m = a.cols();
    std::vector<double> out(static_cast<std::size_t>(n * m));
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < m; ++j)
            out[static_cast<std::size_t>(j * n + i)] = a.values()[static_cast<std::size_t>(i * m + j)];
    auto an = a.handle();
    return make_op({m, n}, std::move(out), {a}, [an, n, m](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < m; ++j)
                an->grad[static_cast<std::size_t>(i * m + j)] +=
                    self.grad[static_cast<std::size_t>(j * n + i)];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto an = a.handle();
    auto bn = b.handle();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto an = a.handle();
    auto bn = b.handle();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto an = a.handle();
    auto bn = b.handle();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    auto an = a.handle();
    return make_op(a.shape(), std::move(out), {a}, [an, s](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
}

Tensor add_const(const Tensor& a, double c) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
    auto an = a.handle();
    return make_op(a.shape(), std::move(out), {a}, [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_rowvec");
    require_2d(b, "add_rowvec");
    const long n = x.rows(), d = x.cols();
    if (b.rows() != 1 || b.cols() != d)
        fail("dim-mismatch", "add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    std::vector<double> out(x.values().size());
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i * d + j)] =
                x.values()[static_cast<std::size_t>(i * d + j)] + b.values()[static_cast<std::size_t>(j)];
    auto xn = x.handle();
    auto bn = b.handle();
    return make_op({n, d}, std::move(out), {x, b}, [xn, bn, n, d](Node& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < d; ++j)
                    bn->grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i * d + j)];
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    auto xn = x.handle();
    return make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
    auto xn = x.handle();
    return make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double s = self.value[i];
            xn->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor log_of(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.values()[i] > 0.0))
            fail("numeric", "log_of requires strictly positive values");
        out[i] = std::log(x.values()[i]);
    }
    auto xn = x.handle();
    return make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] / xn->value[i];
    });
}

Tensor pow_const(const Tensor& x, double p) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (x.values()[i] < 0.0) fail("numeric", "pow_const requires non-negative base");
        out[i] = std::pow(x.values()[i], p); // pow(0, 0) == 1
    }
    auto xn = x.handle();
    return make_op(x.shape(), std::move(out), {x}, [xn, p](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = xn->value[i];
            double d;
            if (v == 0.0)
                d = (p == 1.0) ? 1.0 : 0.0; // convention, keeps the tape finite
            else
                d = p * std::pow(v, p - 1.0);
            xn->grad[i] += self.grad[i] * d;
        }
    });
}

Tensor clamp_min(const Tensor& x, double lo) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > lo ? x.values()[i] : lo;
    auto xn = x.handle();
    return make_op(x.shape(), std::move(out), {x}, [xn, lo](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > lo) xn->grad[i] += self.grad[i];
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    const long n = x.rows(), d = x.cols();
    if (n > 0 && d == 0) fail("dim-mismatch", "softmax over an empty axis");
    std::vector<double> out(x.values().size());
    std::vector<double> exps(static_cast<std::size_t>(d));
    for (long i = 0; i < n; ++i) {
        const double* row = x.values().data() + i * d;
        double mx = row[0];
        for (long j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        for (long j = 0; j < d; ++j) exps[static_cast<std::size_t>(j)] = std::exp(row[j] - mx);
        const double denom = stable_sum(exps);
        for (long j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i * d + j)] = exps[static_cast<std::size_t>(j)] / denom;
    }
    auto xn = x.handle();
    return make_op({n, d}, std::move(out), {x}, [xn, n, d](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long i = 0; i < n; ++i) {
            const double* y = self.value.data() + i * d;
            const double* g = self.grad.data() + i * d;
            double dot = 0.0;
            for (long j = 0; j < d; ++j) dot += y[j] * g[j];
            for (long j = 0; j < d; ++j)
                xn->grad[static_cast<std::size_t>(i * d + j)] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm_rows");
    const long n = x.rows(), d = x.cols();
    if (d < 1) fail("dim-mismatch", "layer_norm_rows needs d >= 1");
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
        fail("dim-mismatch", "layer_norm_rows affine params must be [1x" + std::to_string(d) + "]");

    std::vector<double> out(x.values().size());
    std::vector<double> xhat(x.values().size());
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double* row = x.values().data() + i * d;
        double mean = 0.0;
        for (long j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (long j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (long j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * is;
            xhat[static_cast<std::size_t>(i * d + j)] = xh;
            out[static_cast<std::size_t>(i * d + j)] =
                gain.values()[static_cast<std::size_t>(j)] * xh + bias.values()[static_cast<std::size_t>(j)];
        }
    }

    auto xn = x.handle();
    auto gn = gain.handle();
    auto bn = bias.handle();
    return make_op({n, d}, std::move(out), {x, gain, bias},
                   [xn, gn, bn, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       for (long i = 0; i < n; ++i) {
                           const double* g = self.grad.data() + i * d;
                           const double* xh = xhat.data() + i * d;
                           if (gn->requires_grad) {
                               gn->ensure_grad();
                               for (long j = 0; j < d; ++j) gn->grad[static_cast<std::size_t>(j)] += g[j] * xh[j];
                           }
                           if (bn->requires_grad) {
                               bn->ensure_grad();
                               for (long j = 0; j < d; ++j) bn->grad[static_cast<std::size_t>(j)] += g[j];
                           }
                           if (xn->requires_grad) {
                               xn->ensure_grad();
                               double mean_gdy = 0.0, mean_gdy_xh = 0.0;
                               for (long j = 0; j < d; ++j) {
                                   const double gdy = g[j] * gn->value[static_cast<std::size_t>(j)];
                                   mean_gdy += gdy;
                                   mean_gdy_xh += gdy * xh[j];
                               }
                               mean_gdy /= static_cast<double>(d);
                               mean_gdy_xh /= static_cast<double>(d);
                               const double is = inv_std[static_cast<std::size_t>(i)];
                               for (long j = 0; j < d; ++j) {
                                   const double gdy = g[j] * gn->value[static_cast<std::size_t>(j)];
                                   xn->grad[static_cast<std::size_t>(i * d + j)] +=
                                       (gdy - mean_gdy - xh[j] * mean_gdy_xh) * is;
                               }
                           }
                       }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_2d(x, "linear");
    require_2d(w, "linear");
    if (x.cols() != w.cols())
        fail("dim-mismatch",
             "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    Tensor y = matmul(x, transpose(w));
    if (b.defined()) y = add_rowvec(y, b);
    return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_cols");
    require_2d(b, "concat_cols");
    if (a.rows() != b.rows())
        fail("dim-mismatch", "concat_cols: " + shape_str(a.shape()) + " | " + shape_str(b.shape()));
    const long n = a.rows(), da = a.cols(), db = b.cols();
    std::vector<double> out(static_cast<std::size_t>(n * (da + db)));
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < da; ++j)
            out[static_cast<std::size_t>(i * (da + db) + j)] = a.values()[static_cast<std::size_t>(i * da + j)];
        for (long j = 0; j < db; ++j)
            out[static_cast<std::size_t>(i * (da + db) + da + j)] =
                b.values()[static_cast<std::size_t>(i * db + j)];
    }
    auto an = a.handle();
    auto bn = b.handle();
    return make_op({n, da + db}, std::move(out), {a, b}, [an, bn, n, da, db](Node& self) {
        for (long i = 0; i < n; ++i) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (long j = 0; j < da; ++j)
                    an->grad[static_cast<std::size_t>(i * da + j)] +=
                        self.grad[static_cast<std::size_t>(i * (da + db) + j)];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (long j = 0; j < db; ++j)
                    bn->grad[static_cast<std::size_t>(i * db + j)] +=
                        self.grad[static_cast<std::size_t>(i * (da + db) + da + j)];
            }
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("dim-mismatch", "concat_rows of zero parts");
    const long d = parts[0].cols();
    long n = 0;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_rows");
        if (p.cols() != d) fail("dim-mismatch", "concat_rows: ragged column counts");
        n += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n * d));
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

    std::vector<std::shared_ptr<Node>> handles;
    handles.reserve(parts.size());
    for (const Tensor& p : parts) handles.push_back(p.handle());
    return make_op({n, d}, std::move(out), parts, [handles, d](Node& self) {
        long row0 = 0;
        for (const auto& h : handles) {
            const long r = h->shape[0];
            if (h->requires_grad) {
                h->ensure_grad();
                for (long i = 0; i < r * d; ++i)
                    h->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(row0 * d + i)];
            }
            row0 += r;
        }
    });
}

Tensor gather_rows(const Tensor& x, std::vector<long> idx) {
    require_2d(x, "gather_rows");
    const long n = x.rows(), d = x.cols();
    for (long i : idx)
        if (i < 0 || i >= n) fail("dim-mismatch", "gather_rows: index " + std::to_string(i) + " out of range");
    const long k = static_cast<long>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(k * d));
    for (long r = 0; r < k; ++r)
        for (long j = 0; j < d; ++j)
            out[static_cast<std::size_t>(r * d + j)] = x.values()[static_cast<std::size_t>(idx[r] * d + j)];
    auto xn = x.handle();
    return make_op({k, d}, std::move(out), {x}, [xn, idx = std::move(idx), d](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (long j = 0; j < d; ++j)
                xn->grad[static_cast<std::size_t>(idx[r] * d + j)] +=
                    self.grad[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
    });
}

Tensor attn_apply(const Tensor& a, const Tensor& v) {
    require_2d(a, "attn_apply");
    require_2d(v, "attn_apply");
    const long n = a.rows(), k = a.cols(), d = v.cols();
    if (v.rows() != k)
        fail("dim-mismatch", "attn_apply: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
    std::vector<double> out(static_cast<std::size_t>(n * d));
    std::vector<double> terms(static_cast<std::size_t>(k));
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) {
            for (long l = 0; l < k; ++l)
                terms[static_cast<std::size_t>(l)] = a.values()[static_cast<std::size_t>(i * k + l)] *
                                                     v.values()[static_cast<std::size_t>(l * d + j)];
            out[static_cast<std::size_t>(i * d + j)] = stable_sum(terms);
        }
    auto an = a.handle();
    auto vn = v.handle();
    return make_op({n, d}, std::move(out), {a, v}, [an, vn, n, k, d](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (long j = 0; j < d; ++j)
                        acc += self.grad[static_cast<std::size_t>(i * d + j)] *
                               vn->value[static_cast<std::size_t>(l * d + j)];
                    an->grad[static_cast<std::size_t>(i * k + l)] += acc;
                }
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (long l = 0; l < k; ++l)
                for (long j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (long i = 0; i < n; ++i)
                        acc += an->value[static_cast<std::size_t>(i * k + l)] *
                               self.grad[static_cast<std::size_t>(i * d + j)];
                    vn->grad[static_cast<std::size_t>(l * d + j)] += acc;
                }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto xn = x.handle();
    return make_op({1, 1}, {s}, {x}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
    });
}

Tensor mean_all(const Tensor& x) {
    if (x.size() == 0) fail("dim-mismatch", "mean_all of an empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
    require_2d(x, "mean_rows");
    const long n = x.rows();
    if (n == 0) fail("dim-mismatch", "mean_rows of a zero-row tensor");
    Tensor ones = Tensor::from({1, n}, std::vector<double>(static_cast<std::size_t>(n), 1.0 / n));
    return matmul(ones, x);
}

// ---- verification oracle ---------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    std::vector<double> g(x.values().size());
    std::vector<double> work = x.values();
    for (std::size_t i = 0; i < work.size(); ++i) {
        const double orig = work[i];
        work[i] = orig + h;
        const double fp = f(Tensor::from(x.shape(), work));
        work[i] = orig - h;
        const double fm = f(Tensor::from(x.shape(), work));
        work[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail("numeric", "finite_diff_grad: objective not finite at perturbation");
        g[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::from(x.shape(), std::move(g));
}

double rel_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_error(a[i], b[i]));
    return worst;
}

} // namespace thyme
