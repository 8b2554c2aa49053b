#include "signav/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include "signav/error.hpp"
#include "signav/rng.hpp"
#include "signav/util.hpp"

namespace signav {

Tensor Tensor::zeros(std::vector<int> shape) {
    int n = 1;
    for (int e : shape) n *= e;
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

namespace {

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

// C[n,m] += A[n,k] * B[k,m]
void mm(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * m;
        for (int l = 0; l < k; ++l) {
            double av = a[l];
            if (av == 0.0) continue;
            const double* b = B + static_cast<size_t>(l) * m;
            for (int j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

// C[n,k2] += A[n,m] * B[k2,m]^T
void mm_nt(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C, int n, int m, int k2) {
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<size_t>(i) * m;
        double* c = C + static_cast<size_t>(i) * k2;
        for (int j = 0; j < k2; ++j) {
            const double* b = B + static_cast<size_t>(j) * m;
            double acc = 0;
            for (int l = 0; l < m; ++l) acc += a[l] * b[l];
            c[j] += acc;
        }
    }
}

// C[k,m] += A[n,k]^T * G[n,m]
void mm_tn(const double* __restrict__ A, const double* __restrict__ G, double* __restrict__ C, int n, int k, int m) {
    for (int l = 0; l < n; ++l) {
        const double* a = A + static_cast<size_t>(l) * k;
        const double* g = G + static_cast<size_t>(l) * m;
        for (int i = 0; i < k; ++i) {
            double av = a[i];
            if (av == 0.0) continue;
            double* c = C + static_cast<size_t>(i) * m;
            for (int j = 0; j < m; ++j) c[j] += av * g[j];
        }
    }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

int Tape::push(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_alloc = true;
    }
    return n.grad;
}

const Tensor& Tape::grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad_alloc) throw InternalError("grad_of: gradient never reached this node");
    return n.grad;
}

Var Tape::input(Tensor v) { return {push(std::move(v), false)}; }

Var Tape::param(Param& p) {
    int id = push(p.value, true);
    nodes_[id].bound = &p;
    Param* bp = &p;
    nodes_[id].back = [this, id, bp] {
        const Tensor& g = nodes_[id].grad;
        bp->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) bp->grad.data[i] += g.data[i];
    };
    return {id};
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.shape != tb.shape)
        throw ValidationError("add: shape mismatch " + shape_str(ta.shape) + " vs " +
                              shape_str(tb.shape));
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b] {
            const Tensor& g = nodes_[id].grad;
            if (needs(a)) {
                Tensor& ga = grad_buf(a.id);
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (needs(b)) {
                Tensor& gb = grad_buf(b.id);
                for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
            }
        };
    return {id};
}

Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v *= s;
    bool ng = needs(a);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, s] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a.id);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
        };
    return {id};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
        throw ValidationError("matmul: shape mismatch " + shape_str(ta.shape) + " vs " +
                              shape_str(tb.shape));
    int n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
    Tensor out = Tensor::zeros({n, m});
    mm(ta.data.data(), tb.data.data(), out.data.data(), n, k, m);
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b, n, k, m] {
            const Tensor& g = nodes_[id].grad;
            if (needs(a))
                mm_nt(g.data.data(), val(b).data.data(), grad_buf(a.id).data.data(), n, m, k);
            if (needs(b))
                mm_tn(val(a).data.data(), g.data.data(), grad_buf(b.id).data.data(), n, k, m);
        };
    return {id};
}

Var Tape::transpose(Var a) {
    const Tensor& ta = val(a);
    if (ta.ndim() != 2) throw ValidationError("transpose: need 2-d tensor " + shape_str(ta.shape));
    int n = ta.dim(0), m = ta.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out.data[static_cast<size_t>(j) * n + i] = ta.data[static_cast<size_t>(i) * m + j];
    bool ng = needs(a);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, n, m] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a.id);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ga.data[static_cast<size_t>(i) * m + j] +=
                        g.data[static_cast<size_t>(j) * n + i];
        };
    return {id};
}

Var Tape::linear(Var x, Var w, std::optional<Var> b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    if (tw.ndim() != 2 || tx.shape.empty() || tx.shape.back() != tw.dim(0))
        throw ValidationError("linear: shape mismatch " + shape_str(tx.shape) + " vs " +
                              shape_str(tw.shape));
    int in = tw.dim(0), out_d = tw.dim(1);
    int rows = tx.numel() / in;
    std::vector<int> out_shape = tx.shape;
    out_shape.back() = out_d;
    Tensor out = Tensor::zeros(out_shape);
    mm(tx.data.data(), tw.data.data(), out.data.data(), rows, in, out_d);
    if (b) {
        const Tensor& tb = val(*b);
        if (tb.numel() != out_d)
            throw ValidationError("linear: bias shape " + shape_str(tb.shape));
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < out_d; ++j)
                out.data[static_cast<size_t>(r) * out_d + j] += tb.data[j];
    }
    bool ng = needs(x) || needs(w) || (b && needs(*b));
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, w, b, rows, in, out_d] {
            const Tensor& g = nodes_[id].grad;
            if (needs(x))
                mm_nt(g.data.data(), val(w).data.data(), grad_buf(x.id).data.data(), rows, out_d,
                      in);
            if (needs(w))
                mm_tn(val(x).data.data(), g.data.data(), grad_buf(w.id).data.data(), rows, in,
                      out_d);
            if (b && needs(*b)) {
                Tensor& gb = grad_buf(b->id);
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < out_d; ++j)
                        gb.data[j] += g.data[static_cast<size_t>(r) * out_d + j];
            }
        };
    return {id};
}

Var Tape::add_rowvec(Var x, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    int m = tb.numel();
    if (tx.shape.empty() || tx.shape.back() != m)
        throw ValidationError("add_rowvec: shape mismatch " + shape_str(tx.shape) + " vs " +
                              shape_str(tb.shape));
    int rows = tx.numel() / m;
    Tensor out = tx;
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < m; ++j) out.data[static_cast<size_t>(r) * m + j] += tb.data[j];
    bool ng = needs(x) || needs(b);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, b, rows, m] {
            const Tensor& g = nodes_[id].grad;
            if (needs(x)) {
                Tensor& gx = grad_buf(x.id);
                for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
            }
            if (needs(b)) {
                Tensor& gb = grad_buf(b.id);
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < m; ++j)
                        gb.data[j] += g.data[static_cast<size_t>(r) * m + j];
            }
        };
    return {id};
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    int d = tx.shape.empty() ? 0 : tx.shape.back();
    if (d < 1 || tg.numel() != d || tb.numel() != d)
        throw ValidationError("layer_norm: shape mismatch " + shape_str(tx.shape));
    int rows = tx.numel() / d;
    Tensor out = Tensor::zeros(tx.shape);
    Tensor xhat = Tensor::zeros(tx.shape);
    std::vector<double> inv_std(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = tx.data.data() + static_cast<size_t>(r) * d;
        double mu = 0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;  // population variance
        double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (int j = 0; j < d; ++j) {
            double xh = (xr[j] - mu) * inv;
            xhat.data[static_cast<size_t>(r) * d + j] = xh;
            out.data[static_cast<size_t>(r) * d + j] = tg.data[j] * xh + tb.data[j];
        }
    }
    bool ng = needs(x) || needs(gamma) || needs(beta);
    int id = push(std::move(out), ng);
    if (ng) {
        auto xhat_s = std::make_shared<Tensor>(std::move(xhat));
        auto inv_s = std::make_shared<std::vector<double>>(std::move(inv_std));
        nodes_[id].back = [this, id, x, gamma, beta, rows, d, xhat_s, inv_s] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& tg = val(gamma);
            for (int r = 0; r < rows; ++r) {
                const double* gr = g.data.data() + static_cast<size_t>(r) * d;
                const double* xh = xhat_s->data.data() + static_cast<size_t>(r) * d;
                if (needs(gamma)) {
                    Tensor& gg = grad_buf(gamma.id);
                    for (int j = 0; j < d; ++j) gg.data[j] += gr[j] * xh[j];
                }
                if (needs(beta)) {
                    Tensor& gb = grad_buf(beta.id);
                    for (int j = 0; j < d; ++j) gb.data[j] += gr[j];
                }
                if (needs(x)) {
                    double mean_dxh = 0, mean_dxh_xh = 0;
                    for (int j = 0; j < d; ++j) {
                        double dxh = gr[j] * tg.data[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= d;
                    mean_dxh_xh /= d;
                    Tensor& gx = grad_buf(x.id);
                    double inv = (*inv_s)[r];
                    for (int j = 0; j < d; ++j) {
                        double dxh = gr[j] * tg.data[j];
                        gx.data[static_cast<size_t>(r) * d + j] +=
                            inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
            }
        };
    }
    return {id};
}

Var Tape::softmax(Var x) {
    const Tensor& tx = val(x);
    int n = tx.shape.empty() ? 0 : tx.shape.back();
    if (n < 1) throw ValidationError("softmax: empty last axis");
    int rows = tx.numel() / n;
    Tensor out = Tensor::zeros(tx.shape);
    for (int r = 0; r < rows; ++r) {
        const double* xr = tx.data.data() + static_cast<size_t>(r) * n;
        double* yr = out.data.data() + static_cast<size_t>(r) * n;
        double mx = xr[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (int j = 0; j < n; ++j) yr[j] /= z;
    }
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, rows, n] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].value;
            Tensor& gx = grad_buf(x.id);
            for (int r = 0; r < rows; ++r) {
                const double* gr = g.data.data() + static_cast<size_t>(r) * n;
                const double* yr = y.data.data() + static_cast<size_t>(r) * n;
                double dot = 0;
                for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
                for (int j = 0; j < n; ++j)
                    gx.data[static_cast<size_t>(r) * n + j] += yr[j] * (gr[j] - dot);
            }
        };
    return {id};
}

Var Tape::gelu(Var x) {
    const Tensor& tx = val(x);
    Tensor out = tx;
    for (double& v : out.data) v = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& tx = val(x);
            Tensor& gx = grad_buf(x.id);
            for (size_t i = 0; i < g.data.size(); ++i) {
                double v = tx.data[i];
                double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx.data[i] += g.data[i] * (phi + v * pdf);
            }
        };
    return {id};
}

namespace {

// valid output range [lo, hi) so that 2*o + kk - 1 lands inside [0, n)
inline void conv_range(int kk, int n, int on, int& lo, int& hi) {
    lo = kk == 0 ? 1 : 0;
    hi = std::min(on, (n - kk + 1) / 2 + ((n - kk + 1) % 2));  // ceil((n+1-kk)/2)
}

}  // namespace

Var Tape::conv2d(Var x, Var k, std::optional<Var> bias) {
    const Tensor& tx = val(x);
    const Tensor& tk = val(k);
    if (tx.ndim() != 3 || tk.ndim() != 4 || tk.dim(1) != tx.dim(0) || tk.dim(2) != 3 ||
        tk.dim(3) != 3)
        throw ValidationError("conv2d: shape mismatch " + shape_str(tx.shape) + " vs " +
                              shape_str(tk.shape));
    int cin = tx.dim(0), h = tx.dim(1), w = tx.dim(2), cout = tk.dim(0);
    int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out = Tensor::zeros({cout, oh, ow});
    for (int co = 0; co < cout; ++co) {
        double* o = out.data.data() + static_cast<size_t>(co) * oh * ow;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = tx.data.data() + static_cast<size_t>(ci) * h * w;
            const double* kp = tk.data.data() + (static_cast<size_t>(co) * cin + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int oy_lo, oy_hi;
                conv_range(ky, h, oh, oy_lo, oy_hi);
                for (int kx = 0; kx < 3; ++kx) {
                    double kv = kp[ky * 3 + kx];
                    if (kv == 0.0) continue;
                    int ox_lo, ox_hi;
                    conv_range(kx, w, ow, ox_lo, ox_hi);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const double* xrow = xp + static_cast<size_t>(2 * oy + ky - 1) * w;
                        double* orow = o + static_cast<size_t>(oy) * ow;
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            orow[ox] += kv * xrow[2 * ox + kx - 1];
                    }
                }
            }
        }
        if (bias) {
            double bv = val(*bias).data[co];
            for (int i = 0; i < oh * ow; ++i) o[i] += bv;
        }
    }
    bool ng = needs(x) || needs(k) || (bias && needs(*bias));
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, k, bias, cin, h, w, cout, oh, ow] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& tx = val(x);
            const Tensor& tk = val(k);
            Tensor* gx = needs(x) ? &grad_buf(x.id) : nullptr;
            Tensor* gk = needs(k) ? &grad_buf(k.id) : nullptr;
            Tensor* gb = (bias && needs(*bias)) ? &grad_buf(bias->id) : nullptr;
            for (int co = 0; co < cout; ++co) {
                const double* gp = g.data.data() + static_cast<size_t>(co) * oh * ow;
                if (gb) {
                    double acc = 0;
                    for (int i = 0; i < oh * ow; ++i) acc += gp[i];
                    gb->data[co] += acc;
                }
                for (int ci = 0; ci < cin; ++ci) {
                    const double* xp = tx.data.data() + static_cast<size_t>(ci) * h * w;
                    const double* kp = tk.data.data() + (static_cast<size_t>(co) * cin + ci) * 9;
                    double* gxp =
                        gx ? gx->data.data() + static_cast<size_t>(ci) * h * w : nullptr;
                    double* gkp =
                        gk ? gk->data.data() + (static_cast<size_t>(co) * cin + ci) * 9 : nullptr;
                    for (int ky = 0; ky < 3; ++ky) {
                        int oy_lo, oy_hi;
                        conv_range(ky, h, oh, oy_lo, oy_hi);
                        for (int kx = 0; kx < 3; ++kx) {
                            int ox_lo, ox_hi;
                            conv_range(kx, w, ow, ox_lo, ox_hi);
                            double kv = kp[ky * 3 + kx];
                            double kacc = 0;
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const double* grow = gp + static_cast<size_t>(oy) * ow;
                                const double* xrow =
                                    xp + static_cast<size_t>(2 * oy + ky - 1) * w;
                                double* gxrow =
                                    gxp ? gxp + static_cast<size_t>(2 * oy + ky - 1) * w
                                        : nullptr;
                                if (gxrow && kv != 0.0)
                                    for (int ox = ox_lo; ox < ox_hi; ++ox)
                                        gxrow[2 * ox + kx - 1] += kv * grow[ox];
                                if (gkp)
                                    for (int ox = ox_lo; ox < ox_hi; ++ox)
                                        kacc += grow[ox] * xrow[2 * ox + kx - 1];
                            }
                            if (gkp) gkp[ky * 3 + kx] += kacc;
                        }
                    }
                }
            }
        };
    return {id};
}

Var Tape::reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = val(a);
    Tensor out(shape, ta.data);
    if (out.numel() != ta.numel())
        throw ValidationError("reshape: element count mismatch " + shape_str(ta.shape) + " -> " +
                              shape_str(shape));
    bool ng = needs(a);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a.id);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        };
    return {id};
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw UsageError("stack_rows: empty");
    int d = val(rows[0]).numel();
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
    bool ng = false;
    for (size_t r = 0; r < rows.size(); ++r) {
        const Tensor& tr = val(rows[r]);
        if (tr.numel() != d) throw ValidationError("stack_rows: ragged rows");
        std::copy(tr.data.begin(), tr.data.end(), out.data.begin() + static_cast<size_t>(r) * d);
        ng = ng || needs(rows[r]);
    }
    int id = push(std::move(out), ng);
    if (ng) {
        auto rows_copy = std::make_shared<std::vector<Var>>(rows);
        nodes_[id].back = [this, id, rows_copy, d] {
            const Tensor& g = nodes_[id].grad;
            for (size_t r = 0; r < rows_copy->size(); ++r) {
                Var v = (*rows_copy)[r];
                if (!needs(v)) continue;
                Tensor& gv = grad_buf(v.id);
                for (int j = 0; j < d; ++j) gv.data[j] += g.data[static_cast<size_t>(r) * d + j];
            }
        };
    }
    return {id};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: empty");
    int d = val(parts[0]).dim(1);
    int total = 0;
    bool ng = false;
    for (const Var& p : parts) {
        const Tensor& tp = val(p);
        if (tp.ndim() != 2 || tp.dim(1) != d) throw ValidationError("concat_rows: ragged parts");
        total += tp.dim(0);
        ng = ng || needs(p);
    }
    Tensor out = Tensor::zeros({total, d});
    size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& tp = val(p);
        std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off);
        off += tp.data.size();
    }
    int id = push(std::move(out), ng);
    if (ng) {
        auto parts_copy = std::make_shared<std::vector<Var>>(parts);
        nodes_[id].back = [this, id, parts_copy] {
            const Tensor& g = nodes_[id].grad;
            size_t off = 0;
            for (const Var& p : *parts_copy) {
                size_t n = val(p).data.size();
                if (needs(p)) {
                    Tensor& gp = grad_buf(p.id);
                    for (size_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
                }
                off += n;
            }
        };
    }
    return {id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_cols: empty");
    int t = val(parts[0]).dim(0);
    int total = 0;
    bool ng = false;
    for (const Var& p : parts) {
        const Tensor& tp = val(p);
        if (tp.ndim() != 2 || tp.dim(0) != t) throw ValidationError("concat_cols: ragged parts");
        total += tp.dim(1);
        ng = ng || needs(p);
    }
    Tensor out = Tensor::zeros({t, total});
    int off = 0;
    for (const Var& p : parts) {
        const Tensor& tp = val(p);
        int d = tp.dim(1);
        for (int r = 0; r < t; ++r)
            std::copy(tp.data.begin() + static_cast<size_t>(r) * d,
                      tp.data.begin() + static_cast<size_t>(r + 1) * d,
                      out.data.begin() + static_cast<size_t>(r) * total + off);
        off += d;
    }
    int id = push(std::move(out), ng);
    if (ng) {
        auto parts_copy = std::make_shared<std::vector<Var>>(parts);
        nodes_[id].back = [this, id, parts_copy, t, total] {
            const Tensor& g = nodes_[id].grad;
            int off = 0;
            for (const Var& p : *parts_copy) {
                int d = val(p).dim(1);
                if (needs(p)) {
                    Tensor& gp = grad_buf(p.id);
                    for (int r = 0; r < t; ++r)
                        for (int j = 0; j < d; ++j)
                            gp.data[static_cast<size_t>(r) * d + j] +=
                                g.data[static_cast<size_t>(r) * total + off + j];
                }
                off += d;
            }
        };
    }
    return {id};
}

Var Tape::select_row(Var x, int r) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 2 || r < 0 || r >= tx.dim(0))
        throw ValidationError("select_row: bad row " + std::to_string(r) + " of " +
                              shape_str(tx.shape));
    int d = tx.dim(1);
    Tensor out({d}, std::vector<double>(tx.data.begin() + static_cast<size_t>(r) * d,
                                        tx.data.begin() + static_cast<size_t>(r + 1) * d));
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, r, d] {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x.id);
            for (int j = 0; j < d; ++j) gx.data[static_cast<size_t>(r) * d + j] += g.data[j];
        };
    return {id};
}

Var Tape::slice_rows(Var x, int r0, int r1) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 2 || r0 < 0 || r1 > tx.dim(0) || r0 >= r1)
        throw ValidationError("slice_rows: bad range");
    int d = tx.dim(1);
    Tensor out({r1 - r0, d},
               std::vector<double>(tx.data.begin() + static_cast<size_t>(r0) * d,
                                   tx.data.begin() + static_cast<size_t>(r1) * d));
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, r0, r1, d] {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x.id);
            for (size_t i = 0; i < g.data.size(); ++i)
                gx.data[static_cast<size_t>(r0) * d + i] += g.data[i];
        };
    return {id};
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 2 || c0 < 0 || c1 > tx.dim(1) || c0 >= c1)
        throw ValidationError("slice_cols: bad range");
    int t = tx.dim(0), d = tx.dim(1), w = c1 - c0;
    Tensor out = Tensor::zeros({t, w});
    for (int r = 0; r < t; ++r)
        std::copy(tx.data.begin() + static_cast<size_t>(r) * d + c0,
                  tx.data.begin() + static_cast<size_t>(r) * d + c1,
                  out.data.begin() + static_cast<size_t>(r) * w);
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, c0, t, d, w] {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x.id);
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < w; ++j)
                    gx.data[static_cast<size_t>(r) * d + c0 + j] +=
                        g.data[static_cast<size_t>(r) * w + j];
        };
    return {id};
}

Var Tape::gather_rows(Var x, std::vector<int> rows) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 2) throw ValidationError("gather_rows: need 2-d tensor");
    int d = tx.dim(1);
    for (int r : rows)
        if (r < 0 || r >= tx.dim(0)) throw ValidationError("gather_rows: row out of range");
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(tx.data.begin() + static_cast<size_t>(rows[i]) * d,
                  tx.data.begin() + static_cast<size_t>(rows[i] + 1) * d,
                  out.data.begin() + i * d);
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng) {
        auto rows_s = std::make_shared<std::vector<int>>(std::move(rows));
        nodes_[id].back = [this, id, x, rows_s, d] {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x.id);
            for (size_t i = 0; i < rows_s->size(); ++i)
                for (int j = 0; j < d; ++j)
                    gx.data[static_cast<size_t>((*rows_s)[i]) * d + j] += g.data[i * d + j];
        };
    }
    return {id};
}

Var Tape::mean_rows(Var x) {
    const Tensor& tx = val(x);
    if (tx.ndim() != 2) throw ValidationError("mean_rows: need 2-d tensor");
    int n = tx.dim(0), d = tx.dim(1);
    Tensor out = Tensor::zeros({d});
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j) out.data[j] += tx.data[static_cast<size_t>(r) * d + j];
    for (int j = 0; j < d; ++j) out.data[j] /= n;
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, n, d] {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x.id);
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < d; ++j)
                    gx.data[static_cast<size_t>(r) * d + j] += g.data[j] / n;
        };
    return {id};
}

Var Tape::pick(Var x, int i) {
    const Tensor& tx = val(x);
    if (i < 0 || i >= tx.numel()) throw ValidationError("pick: index out of range");
    Tensor out({1}, {tx.data[i]});
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, i] {
            grad_buf(x.id).data[i] += nodes_[id].grad.data[0];
        };
    return {id};
}

Var Tape::log_floored(Var x, double floor) {
    const Tensor& tx = val(x);
    Tensor out = tx;
    for (double& v : out.data) {
        if (v < floor) {
            v = std::log(floor);
            ++floor_hits_;
        } else {
            v = std::log(v);
        }
    }
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, floor] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& tx = val(x);
            Tensor& gx = grad_buf(x.id);
            for (size_t i = 0; i < g.data.size(); ++i)
                if (tx.data[i] >= floor) gx.data[i] += g.data[i] / tx.data[i];
        };
    return {id};
}

Var Tape::sum(Var x) {
    const Tensor& tx = val(x);
    double acc = 0;
    for (double v : tx.data) acc += v;
    Tensor out({1}, {acc});
    bool ng = needs(x);
    int id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x] {
            double g = nodes_[id].grad.data[0];
            Tensor& gx = grad_buf(x.id);
            for (double& v : gx.data) v += g;
        };
    return {id};
}

void Tape::backward(Var root) {
    if (val(root).numel() != 1) throw UsageError("backward: root must be scalar");
    grad_buf(root.id).data[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.grad_alloc && n.back) n.back();
    }
}

double grad_check(const std::function<double()>& loss_value,
                  const std::function<void()>& compute_grads, const std::vector<Param*>& params,
                  double h, int max_coords_per_param, uint64_t seed) {
    compute_grads();
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->grad);

    Rng rng(seed);
    double max_rel = 0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        int n = p->value.numel();
        int count = std::min(n, max_coords_per_param);
        for (int t = 0; t < count; ++t) {
            int idx = (n <= max_coords_per_param) ? t : static_cast<int>(rng.below(n));
            double orig = p->value.data[idx];
            p->value.data[idx] = orig + h;
            double fp = loss_value();
            p->value.data[idx] = orig - h;
            double fm = loss_value();
            p->value.data[idx] = orig;
            double numeric = (fp - fm) / (2 * h);
            double a = analytic[pi].data.empty() ? 0.0 : analytic[pi].data[idx];
            double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

void init_uniform_xavier(Param& p, int fan_in, int fan_out, uint64_t seed) {
    Rng rng(seed);
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : p.value.data) v = rng.uniform(-bound, bound);
}

void init_zeros(Param& p) { std::fill(p.value.data.begin(), p.value.data.end(), 0.0); }
void init_ones(Param& p) { std::fill(p.value.data.begin(), p.value.data.end(), 1.0); }

namespace {
constexpr char kCkptMagic[8] = {'S', 'N', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const std::string& path, const std::vector<Param*>& params,
                     uint64_t config_hash, const std::string& config_blob) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kCkptMagic, kCkptMagic + 8);
    put_u64_le(buf, config_hash);
    put_u32_le(buf, static_cast<uint32_t>(config_blob.size()));
    buf.insert(buf.end(), config_blob.begin(), config_blob.end());
    put_u32_le(buf, static_cast<uint32_t>(params.size()));
    for (const Param* p : params) {
        put_u32_le(buf, static_cast<uint32_t>(p->name.size()));
        buf.insert(buf.end(), p->name.begin(), p->name.end());
        put_u32_le(buf, static_cast<uint32_t>(p->value.shape.size()));
        for (int d : p->value.shape) put_u32_le(buf, static_cast<uint32_t>(d));
        for (double v : p->value.data) put_f64_le(buf, v);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read checkpoint: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > buf.size()) throw ValidationError("checkpoint truncated: " + path);
    };
    auto get_u32 = [&]() -> uint32_t {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    auto get_u64 = [&]() -> uint64_t {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    };
    need(8);
    if (std::memcmp(buf.data(), kCkptMagic, 8) != 0)
        throw ValidationError("checkpoint: bad magic in " + path);
    pos = 8;
    Checkpoint ck;
    ck.config_hash = get_u64();
    uint32_t blob_len = get_u32();
    need(blob_len);
    ck.config_blob.assign(buf.begin() + pos, buf.begin() + pos + blob_len);
    pos += blob_len;
    uint32_t count = get_u32();
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32();
        need(name_len);
        std::string name(buf.begin() + pos, buf.begin() + pos + name_len);
        pos += name_len;
        uint32_t ndim = get_u32();
        std::vector<int> shape;
        int numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<int>(get_u32()));
            numel *= shape.back();
        }
        Tensor t = Tensor::zeros(shape);
        for (int e = 0; e < numel; ++e) {
            uint64_t bits = get_u64();
            double v;
            std::memcpy(&v, &bits, 8);
            t.data[e] = v;
        }
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace signav
