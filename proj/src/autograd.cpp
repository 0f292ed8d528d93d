#include "bc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bc {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::param(const Tensor& t) {
    Node n;
    n.value = t;
    n.requires_grad = true;
    return emit(std::move(n));
}

Var Tape::constant(const Tensor& t) {
    Node n;
    n.value = t;
    n.requires_grad = false;
    return emit(std::move(n));
}

Var Tape::emit(Node n) {
    for (int p : n.parents)
        if (p >= 0 && nodes_[p].requires_grad) n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
}

const Tensor& Tape::grad(int id) const {
    if (nodes_[id].grad.data.empty())
        throw ShapeError("no gradient recorded for node " + std::to_string(id));
    return nodes_[id].grad;
}

void Tape::backward(Var output) {
    if (output.tape != this) throw ShapeError("backward: output from a different tape");
    const Node& root = nodes_[output.id];
    if (root.value.size() != 1)
        throw ShapeError("backward: output must be scalar, got shape " +
                         shape_str(root.value.shape));
    if (!root.requires_grad) return; // constant-only graph: nothing to do

    // Iterative topological sort over ancestors that require gradients.
    std::vector<int> topo;
    std::vector<signed char> state(nodes_.size(), 0); // 0 new, 1 open, 2 done
    std::vector<int> stack{output.id};
    while (!stack.empty()) {
        int u = stack.back();
        if (state[u] == 0) {
            state[u] = 1;
            for (int p : nodes_[u].parents)
                if (p >= 0 && nodes_[p].requires_grad && state[p] == 0) stack.push_back(p);
        } else {
            stack.pop_back();
            if (state[u] == 1) {
                state[u] = 2;
                topo.push_back(u);
            }
        }
    }

    grad_buffer(output.id).data[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node& n = nodes_[*it];
        if (n.backprop && !n.grad.data.empty()) n.backprop(*this, n);
    }
}

// --- broadcasting machinery --------------------------------------------------

namespace {

struct Bcast {
    Shape out;
    std::vector<std::size_t> dims;     // out dims
    std::vector<std::size_t> sa, sb;   // per-dim strides into a and b (0 = broadcast)
};

Bcast make_bcast(const Shape& a, const Shape& b, const char* what) {
    std::size_t rank = std::max(a.size(), b.size());
    Bcast bc;
    bc.dims.resize(rank);
    bc.sa.resize(rank);
    bc.sb.resize(rank);
    // Right-justified alignment; each dim must match or be 1.
    std::vector<std::size_t> da(rank, 1), db(rank, 1);
    for (std::size_t i = 0; i < a.size(); ++i) da[rank - a.size() + i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) db[rank - b.size() + i] = b[i];
    for (std::size_t i = 0; i < rank; ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
            throw ShapeError(std::string(what) + ": shapes " + shape_str(a) + " and " +
                             shape_str(b) + " are not broadcastable");
        bc.dims[i] = std::max(da[i], db[i]);
    }
    bc.out = (numel(bc.dims) == numel(a) && a.size() >= b.size()) ? a
           : (numel(bc.dims) == numel(b) && b.size() >= a.size()) ? b
                                                                  : bc.dims;
    // Row-major strides, zeroed where the operand has size 1.
    std::size_t stra = 1, strb = 1;
    for (std::size_t i = rank; i-- > 0;) {
        bc.sa[i] = (da[i] == 1) ? 0 : stra;
        bc.sb[i] = (db[i] == 1) ? 0 : strb;
        stra *= da[i];
        strb *= db[i];
    }
    return bc;
}

template <class F>
void bcast_loop(const Bcast& bc, F&& body) {
    std::size_t rank = bc.dims.size();
    std::size_t total = numel(bc.dims);
    if (rank == 0) {
        body(0, 0, 0);
        return;
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t lin = 0; lin < total; ++lin) {
        body(lin, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += bc.sa[d];
            ib += bc.sb[d];
            if (idx[d] < bc.dims[d]) break;
            ia -= bc.sa[d] * bc.dims[d];
            ib -= bc.sb[d] * bc.dims[d];
            idx[d] = 0;
        }
    }
}

template <class FwdF, class DaF, class DbF>
Var binary_op(Var a, Var b, const char* what, FwdF fwd, DaF da, DbF db) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tape::Node n;
    n.parents = {a.id, b.id};

    if (same_shape(av, bv)) { // fast path
        n.value = Tensor(av.shape);
        for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = fwd(av[i], bv[i]);
        int aid = a.id, bid = b.id;
        n.backprop = [aid, bid, da, db](Tape& tp, Tape::Node& self) {
            const Tensor& x = tp.value(aid);
            const Tensor& y = tp.value(bid);
            if (tp.node(aid).requires_grad) {
                Tensor& g = tp.grad_buffer(aid);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += self.grad[i] * da(x[i], y[i]);
            }
            if (tp.node(bid).requires_grad) {
                Tensor& g = tp.grad_buffer(bid);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += self.grad[i] * db(x[i], y[i]);
            }
        };
        return t.emit(std::move(n));
    }

    Bcast bc = make_bcast(av.shape, bv.shape, what);
    n.value = Tensor(bc.out);
    bcast_loop(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        n.value[o] = fwd(av[ia], bv[ib]);
    });
    int aid = a.id, bid = b.id;
    n.backprop = [aid, bid, bc, da, db](Tape& tp, Tape::Node& self) {
        const Tensor& x = tp.value(aid);
        const Tensor& y = tp.value(bid);
        bool ga = tp.node(aid).requires_grad;
        bool gb = tp.node(bid).requires_grad;
        Tensor* bufa = ga ? &tp.grad_buffer(aid) : nullptr;
        Tensor* bufb = gb ? &tp.grad_buffer(bid) : nullptr;
        bcast_loop(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            double g = self.grad[o];
            if (bufa) (*bufa)[ia] += g * da(x[ia], y[ib]);
            if (bufb) (*bufb)[ib] += g * db(x[ia], y[ib]);
        });
    };
    return t.emit(std::move(n));
}

template <class FwdF, class DerF>
Var unary_op(Var a, FwdF fwd, DerF der) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    Tape::Node n;
    n.parents = {a.id, -1};
    n.value = Tensor(av.shape);
    for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = fwd(av[i]);
    int aid = a.id;
    n.backprop = [aid, der](Tape& tp, Tape::Node& self) {
        if (!tp.node(aid).requires_grad) return;
        const Tensor& x = tp.value(aid);
        Tensor& g = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * der(x[i], self.value[i]);
    };
    return t.emit(std::move(n));
}

} // namespace

// --- elementwise --------------------------------------------------------------

Var add(Var a, Var b) {
    return binary_op(a, b, "add",
                     [](double x, double y) { return x + y; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary_op(a, b, "sub",
                     [](double x, double y) { return x - y; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary_op(a, b, "mul",
                     [](double x, double y) { return x * y; },
                     [](double, double y) { return y; },
                     [](double x, double) { return x; });
}

Var add_scalar(Var a, double c) {
    return unary_op(a, [c](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double c) {
    return unary_op(a, [c](double x) { return x * c; },
                    [c](double, double) { return c; });
}

Var vexp(Var a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Var vlog(Var a) {
    for (double v : a.value().data)
        if (v <= 0.0) throw DomainError("log of non-positive value");
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Var vsqrt(Var a) {
    for (double v : a.value().data)
        if (v < 0.0) throw DomainError("sqrt of negative value");
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
    return unary_op(a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

namespace {
double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_d(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
} // namespace

Var sigmoid(Var a) {
    return unary_op(a, sigmoid_d,
                    [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
    return unary_op(a, softplus_d,
                    [](double x, double) { return sigmoid_d(x); });
}

Var relu(Var a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// --- matmul -------------------------------------------------------------------

namespace {

// c += a . b, ikj order: per output element the k-accumulation order matches
// the naive triple loop, so results are bitwise identical to it.
void gemm_acc(const double* a, const double* b, double* c,
              std::size_t r, std::size_t inner, std::size_t k) {
    for (std::size_t i = 0; i < r; ++i) {
        double* crow = c + i * k;
        const double* arow = a + i * inner;
        for (std::size_t kk = 0; kk < inner; ++kk) {
            double av = arow[kk];
            const double* brow = b + kk * k;
            for (std::size_t j = 0; j < k; ++j) crow[j] += av * brow[j];
        }
    }
}

// da += dc . b^T
void gemm_acc_bt(const double* dc, const double* b, double* da,
                 std::size_t r, std::size_t inner, std::size_t k) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* dcrow = dc + i * k;
        double* darow = da + i * inner;
        for (std::size_t kk = 0; kk < inner; ++kk) {
            const double* brow = b + kk * k;
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += dcrow[j] * brow[j];
            darow[kk] += acc;
        }
    }
}

// db += a^T . dc
void gemm_acc_at(const double* a, const double* dc, double* db,
                 std::size_t r, std::size_t inner, std::size_t k) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = a + i * inner;
        const double* dcrow = dc + i * k;
        for (std::size_t kk = 0; kk < inner; ++kk) {
            double av = arow[kk];
            double* dbrow = db + kk * k;
            for (std::size_t j = 0; j < k; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

void check_matmul_shapes(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul_shapes(a, b);
    Tensor c(Shape{a.shape[0], b.shape[1]}, 0.0);
    gemm_acc(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1],
             b.shape[1]);
    return c;
}

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    Tape::Node n;
    n.parents = {a.id, b.id};
    n.value = matmul(a.value(), b.value());
    int aid = a.id, bid = b.id;
    n.backprop = [aid, bid](Tape& tp, Tape::Node& self) {
        const Tensor& av = tp.value(aid);
        const Tensor& bv = tp.value(bid);
        std::size_t r = av.shape[0], inner = av.shape[1], k = bv.shape[1];
        if (tp.node(aid).requires_grad)
            gemm_acc_bt(self.grad.data.data(), bv.data.data(),
                        tp.grad_buffer(aid).data.data(), r, inner, k);
        if (tp.node(bid).requires_grad)
            gemm_acc_at(av.data.data(), self.grad.data.data(),
                        tp.grad_buffer(bid).data.data(), r, inner, k);
    };
    return t.emit(std::move(n));
}

// --- conv2d -------------------------------------------------------------------

namespace {

struct ConvDims {
    std::size_t B, H, W, Ci, kh, kw, Co, Ho, Wo;
    long pt, pl; // top/left zero padding
};

ConvDims conv_dims(const Tensor& in, const Tensor& ker, Padding p) {
    if (in.rank() != 4 || ker.rank() != 4)
        throw ShapeError("conv2d: expected BHWC input and hwCiCo kernels, got " +
                         shape_str(in.shape) + " and " + shape_str(ker.shape));
    ConvDims d{};
    d.B = in.shape[0]; d.H = in.shape[1]; d.W = in.shape[2]; d.Ci = in.shape[3];
    d.kh = ker.shape[0]; d.kw = ker.shape[1]; d.Co = ker.shape[3];
    if (ker.shape[2] != d.Ci)
        throw ShapeError("conv2d: input channels " + std::to_string(d.Ci) +
                         " do not match kernel channels " + std::to_string(ker.shape[2]));
    if (p == Padding::Valid) {
        if (d.kh > d.H || d.kw > d.W)
            throw ShapeError("conv2d: kernel larger than input");
        d.Ho = d.H - d.kh + 1;
        d.Wo = d.W - d.kw + 1;
        d.pt = d.pl = 0;
    } else {
        d.Ho = d.H;
        d.Wo = d.W;
        d.pt = static_cast<long>(d.kh - 1) / 2;
        d.pl = static_cast<long>(d.kw - 1) / 2;
    }
    return d;
}

void conv_forward(const Tensor& in, const Tensor& ker, const ConvDims& d, Tensor& out) {
    for (std::size_t b = 0; b < d.B; ++b)
        for (std::size_t oh = 0; oh < d.Ho; ++oh)
            for (std::size_t ow = 0; ow < d.Wo; ++ow) {
                double* orow = &out.data[((b * d.Ho + oh) * d.Wo + ow) * d.Co];
                for (std::size_t i = 0; i < d.kh; ++i) {
                    long ih = static_cast<long>(oh + i) - d.pt;
                    if (ih < 0 || ih >= static_cast<long>(d.H)) continue;
                    for (std::size_t j = 0; j < d.kw; ++j) {
                        long iw = static_cast<long>(ow + j) - d.pl;
                        if (iw < 0 || iw >= static_cast<long>(d.W)) continue;
                        const double* irow =
                            &in.data[((b * d.H + ih) * d.W + iw) * d.Ci];
                        const double* krow = &ker.data[(i * d.kw + j) * d.Ci * d.Co];
                        for (std::size_t ci = 0; ci < d.Ci; ++ci) {
                            double iv = irow[ci];
                            const double* kc = krow + ci * d.Co;
                            for (std::size_t co = 0; co < d.Co; ++co)
                                orow[co] += iv * kc[co];
                        }
                    }
                }
            }
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, Padding p) {
    ConvDims d = conv_dims(input, kernels, p);
    Tensor out(Shape{d.B, d.Ho, d.Wo, d.Co}, 0.0);
    conv_forward(input, kernels, d, out);
    return out;
}

Var conv2d(Var input, Var kernels, Padding p) {
    Tape& t = *input.tape;
    ConvDims d = conv_dims(input.value(), kernels.value(), p);
    Tape::Node n;
    n.parents = {input.id, kernels.id};
    n.value = Tensor(Shape{d.B, d.Ho, d.Wo, d.Co}, 0.0);
    conv_forward(input.value(), kernels.value(), d, n.value);
    int iid = input.id, kid = kernels.id;
    n.backprop = [iid, kid, d](Tape& tp, Tape::Node& self) {
        const Tensor& in = tp.value(iid);
        const Tensor& ker = tp.value(kid);
        bool gi = tp.node(iid).requires_grad;
        bool gk = tp.node(kid).requires_grad;
        Tensor* din = gi ? &tp.grad_buffer(iid) : nullptr;
        Tensor* dker = gk ? &tp.grad_buffer(kid) : nullptr;
        for (std::size_t b = 0; b < d.B; ++b)
            for (std::size_t oh = 0; oh < d.Ho; ++oh)
                for (std::size_t ow = 0; ow < d.Wo; ++ow) {
                    const double* grow =
                        &self.grad.data[((b * d.Ho + oh) * d.Wo + ow) * d.Co];
                    for (std::size_t i = 0; i < d.kh; ++i) {
                        long ih = static_cast<long>(oh + i) - d.pt;
                        if (ih < 0 || ih >= static_cast<long>(d.H)) continue;
                        for (std::size_t j = 0; j < d.kw; ++j) {
                            long iw = static_cast<long>(ow + j) - d.pl;
                            if (iw < 0 || iw >= static_cast<long>(d.W)) continue;
                            std::size_t ioff = ((b * d.H + ih) * d.W + iw) * d.Ci;
                            std::size_t koff = (i * d.kw + j) * d.Ci * d.Co;
                            for (std::size_t ci = 0; ci < d.Ci; ++ci) {
                                const double* kc = &ker.data[koff + ci * d.Co];
                                double iv = in.data[ioff + ci];
                                double acc = 0.0;
                                for (std::size_t co = 0; co < d.Co; ++co) {
                                    double g = grow[co];
                                    acc += g * kc[co];
                                    if (dker) dker->data[koff + ci * d.Co + co] += iv * g;
                                }
                                if (din) din->data[ioff + ci] += acc;
                            }
                        }
                    }
                }
    };
    return t.emit(std::move(n));
}

// --- pooling / reshaping / reductions ------------------------------------------

Tensor mean_pool2(const Tensor& a) {
    if (a.rank() != 4 || a.shape[1] % 2 != 0 || a.shape[2] % 2 != 0)
        throw ShapeError("mean_pool2: expected BHWC with even H and W, got " +
                         shape_str(a.shape));
    std::size_t B = a.shape[0], H = a.shape[1], W = a.shape[2], C = a.shape[3];
    Tensor out(Shape{B, H / 2, W / 2, C}, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < H / 2; ++h)
            for (std::size_t w = 0; w < W / 2; ++w)
                for (std::size_t c = 0; c < C; ++c) {
                    double s = a.data[((b * H + 2 * h) * W + 2 * w) * C + c] +
                               a.data[((b * H + 2 * h) * W + 2 * w + 1) * C + c] +
                               a.data[((b * H + 2 * h + 1) * W + 2 * w) * C + c] +
                               a.data[((b * H + 2 * h + 1) * W + 2 * w + 1) * C + c];
                    out.data[((b * (H / 2) + h) * (W / 2) + w) * C + c] = 0.25 * s;
                }
    return out;
}

Var mean_pool2(Var a) {
    Tape& t = *a.tape;
    Tape::Node n;
    n.parents = {a.id, -1};
    n.value = mean_pool2(a.value());
    int aid = a.id;
    Shape ish = a.value().shape;
    n.backprop = [aid, ish](Tape& tp, Tape::Node& self) {
        if (!tp.node(aid).requires_grad) return;
        Tensor& g = tp.grad_buffer(aid);
        std::size_t B = ish[0], H = ish[1], W = ish[2], C = ish[3];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < H / 2; ++h)
                for (std::size_t w = 0; w < W / 2; ++w)
                    for (std::size_t c = 0; c < C; ++c) {
                        double gv =
                            0.25 * self.grad.data[((b * (H / 2) + h) * (W / 2) + w) * C + c];
                        g.data[((b * H + 2 * h) * W + 2 * w) * C + c] += gv;
                        g.data[((b * H + 2 * h) * W + 2 * w + 1) * C + c] += gv;
                        g.data[((b * H + 2 * h + 1) * W + 2 * w) * C + c] += gv;
                        g.data[((b * H + 2 * h + 1) * W + 2 * w + 1) * C + c] += gv;
                    }
    };
    return t.emit(std::move(n));
}

Var reshape(Var a, Shape s) {
    if (numel(s) != a.value().size())
        throw ShapeError("reshape: cannot view " + shape_str(a.value().shape) + " as " +
                         shape_str(s));
    Tape& t = *a.tape;
    Tape::Node n;
    n.parents = {a.id, -1};
    n.value = Tensor(std::move(s), a.value().data);
    int aid = a.id;
    n.backprop = [aid](Tape& tp, Tape::Node& self) {
        if (!tp.node(aid).requires_grad) return;
        Tensor& g = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    return t.emit(std::move(n));
}

Var sum(Var a) {
    Tape& t = *a.tape;
    Tape::Node n;
    n.parents = {a.id, -1};
    double s = 0.0;
    for (double v : a.value().data) s += v;
    n.value = Tensor::scalar(s);
    int aid = a.id;
    n.backprop = [aid](Tape& tp, Tape::Node& self) {
        if (!tp.node(aid).requires_grad) return;
        Tensor& g = tp.grad_buffer(aid);
        double gv = self.grad[0];
        for (double& x : g.data) x += gv;
    };
    return t.emit(std::move(n));
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Tensor& lv = logits.value();
    if (lv.rank() != 2 || lv.shape[0] != labels.size())
        throw ShapeError("softmax_cross_entropy: logits " + shape_str(lv.shape) +
                         " vs " + std::to_string(labels.size()) + " labels");
    std::size_t K = lv.shape[0], C = lv.shape[1];
    Tensor probs(lv.shape);
    double nll = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double* row = &lv.data[k * C];
        double mx = row[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        double logz = std::log(z) + mx;
        for (std::size_t c = 0; c < C; ++c)
            probs.data[k * C + c] = std::exp(row[c] - logz);
        nll -= row[labels[k]] - logz;
    }
    Tape::Node n;
    n.parents = {logits.id, -1};
    n.value = Tensor::scalar(nll / static_cast<double>(K));
    int lid = logits.id;
    n.backprop = [lid, probs, labels, K, C](Tape& tp, Tape::Node& self) {
        if (!tp.node(lid).requires_grad) return;
        Tensor& g = tp.grad_buffer(lid);
        double gv = self.grad[0] / static_cast<double>(K);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < C; ++c) {
                double p = probs.data[k * C + c];
                g.data[k * C + c] +=
                    gv * (p - (static_cast<std::size_t>(labels[k]) == c ? 1.0 : 0.0));
            }
    };
    return t.emit(std::move(n));
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

} // namespace bc
