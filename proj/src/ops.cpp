#include "camfit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camfit/kernels.hpp"

namespace camfit {

using autodiff::grad_ptr;
using autodiff::make_output;
using autodiff::recording_tape;
using kernels::Trans;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

struct AxisSplit {
    std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_str(s));
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

std::size_t batch_count(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) n *= s[i];
    return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2)
        throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(sa) + " x " +
                         shape_str(sb));
    const std::size_t m = sa[sa.size() - 2], k = sa.back();
    const std::size_t kb = sb[sb.size() - 2], n = sb.back();
    if (k != kb)
        throw ShapeError("matmul inner dims differ: " + shape_str(sa) + " x " + shape_str(sb));
    const Shape batch_a(sa.begin(), sa.end() - 2);
    const Shape batch_b(sb.begin(), sb.end() - 2);
    if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b)
        throw ShapeError("matmul batch dims not broadcastable: " + shape_str(sa) + " x " +
                         shape_str(sb));
    Shape out_shape = batch_a.empty() ? batch_b : batch_a;
    out_shape.push_back(m);
    out_shape.push_back(n);
    const std::size_t batches = std::max(batch_count(sa), batch_count(sb));
    const std::size_t stride_a = batch_a.empty() ? 0 : m * k;
    const std::size_t stride_b = batch_b.empty() ? 0 : k * n;

    std::vector<double> out(batches * m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < batches; ++i)
        kernels::gemm(Trans::No, Trans::No, m, n, k, 1.0, pa + i * stride_a, k, pb + i * stride_b,
                      n, 0.0, out.data() + i * m * n, n);

    Tape* tape = recording_tape({&a, &b});
    Tensor result = make_output(std::move(out_shape), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), an = a.node(), bn = b.node(), m, n, k, batches,
                      stride_a, stride_b] {
            double* ga = grad_ptr(an);
            double* gb = grad_ptr(bn);
            if (on->grad.empty()) return;
            const double* dy = on->grad.data();
            for (std::size_t i = 0; i < batches; ++i) {
                if (ga)  // dA = dY * B^T
                    kernels::gemm(Trans::No, Trans::Yes, m, k, n, 1.0, dy + i * m * n, n,
                                  bn->value.data() + i * stride_b, n, 1.0, ga + i * stride_a, k);
                if (gb)  // dB = A^T * dY
                    kernels::gemm(Trans::Yes, Trans::No, k, n, m, 1.0,
                                  an->value.data() + i * stride_a, k, dy + i * m * n, n, 1.0,
                                  gb + i * stride_b, n);
            }
        });
    }
    return result;
}

Tensor transpose(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(s));
    const std::size_t r = s[s.size() - 2], c = s.back(), batches = batch_count(s);
    Shape out_shape = s;
    std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
    std::vector<double> out(x.numel());
    const double* px = x.data().data();
    for (std::size_t b = 0; b < batches; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = px[b * r * c + i * c + j];
    Tape* tape = recording_tape({&x});
    Tensor result = make_output(std::move(out_shape), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), r, c, batches] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            const double* dy = on->grad.data();
            for (std::size_t b = 0; b < batches; ++b)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        gx[b * r * c + i * c + j] += dy[b * r * c + j * r + i];
        });
    }
    return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const auto& sx = x.shape();
    const auto& sw = weight.shape();
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0])
        throw ShapeError("linear: input " + shape_str(sx) + " vs weight " + shape_str(sw));
    const std::size_t n = sx[0], in = sw[0], out_dim = sw[1];
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim))
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(out_dim) + " outputs");

    std::vector<double> out(n * out_dim);
    if (bias.defined()) {
        const double* pb = bias.data().data();
        for (std::size_t i = 0; i < n; ++i) std::copy_n(pb, out_dim, out.data() + i * out_dim);
    }
    kernels::gemm(Trans::No, Trans::No, n, out_dim, in, 1.0, x.data().data(), in,
                  weight.data().data(), out_dim, bias.defined() ? 1.0 : 0.0, out.data(), out_dim);

    Tape* tape = recording_tape({&x, &weight, &bias});
    Tensor result = make_output({n, out_dim}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), wn = weight.node(),
                      bn = bias.defined() ? bias.node() : detail::NodePtr{}, n, in, out_dim] {
            double* gx = grad_ptr(xn);
            double* gw = grad_ptr(wn);
            double* gb = bn ? grad_ptr(bn) : nullptr;
            if (on->grad.empty()) return;
            const double* dy = on->grad.data();
            if (gx)
                kernels::gemm(Trans::No, Trans::Yes, n, in, out_dim, 1.0, dy, out_dim,
                              wn->value.data(), out_dim, 1.0, gx, in);
            if (gw)
                kernels::gemm(Trans::Yes, Trans::No, in, out_dim, n, 1.0, xn->value.data(), in, dy,
                              out_dim, 1.0, gw, out_dim);
            if (gb)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < out_dim; ++j) gb[j] += dy[i * out_dim + j];
        });
    }
    return result;
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
    require_same_shape(a, b, name);
    const auto pa = a.data();
    const auto pb = b.data();
    std::vector<double> out(pa.size());
    switch (kind) {
        case Binary::Add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
            break;
        case Binary::Sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
            break;
        case Binary::Mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
            break;
    }
    Tape* tape = recording_tape({&a, &b});
    Tensor result = make_output(a.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), an = a.node(), bn = b.node(), kind] {
            double* ga = grad_ptr(an);
            double* gb = grad_ptr(bn);
            if (on->grad.empty()) return;
            const auto& dy = on->grad;
            const std::size_t n = dy.size();
            switch (kind) {
                case Binary::Add:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += dy[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += dy[i];
                    break;
                case Binary::Sub:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += dy[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= dy[i];
                    break;
                case Binary::Mul:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += dy[i] * bn->value[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += dy[i] * an->value[i];
                    break;
            }
        });
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Binary::Mul, "mul"); }

Tensor scale(const Tensor& x, double s) {
    const auto px = x.data();
    std::vector<double> out(px.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * px[i];
    Tape* tape = recording_tape({&x});
    Tensor result = make_output(x.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), s] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += s * on->grad[i];
        });
    }
    return result;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    const std::size_t d = x.shape().back();
    if (row.numel() != d)
        throw ShapeError("add_row: row " + shape_str(row.shape()) + " vs " + shape_str(x.shape()));
    const auto px = x.data();
    const auto pr = row.data();
    std::vector<double> out(px.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] + pr[i % d];
    Tape* tape = recording_tape({&x, &row});
    Tensor result = make_output(x.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), rn = row.node(), d] {
            double* gx = grad_ptr(xn);
            double* gr = grad_ptr(rn);
            if (on->grad.empty()) return;
            const auto& dy = on->grad;
            if (gx) for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += dy[i];
            if (gr) for (std::size_t i = 0; i < dy.size(); ++i) gr[i % d] += dy[i];
        });
    }
    return result;
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tape* tape = recording_tape({&x});
    Tensor result = make_output({1}, {s}, tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node()] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            const double g = on->grad[0];
            for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g;
        });
    }
    return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_sq_error(const Tensor& a, const Tensor& b, const std::vector<double>& weights,
                         double normalizer) {
    require_same_shape(a, b, "weighted_sq_error");
    if (!weights.empty() && weights.size() != a.numel())
        throw ShapeError("weighted_sq_error: weight count mismatch");
    if (!(normalizer > 0.0)) throw ContractError("weighted_sq_error: normalizer must be > 0");
    const auto pa = a.data();
    const auto pb = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double d = pa[i] - pb[i];
        s += (weights.empty() ? 1.0 : weights[i]) * d * d;
    }
    Tape* tape = recording_tape({&a, &b});
    Tensor result = make_output({1}, {s / normalizer}, tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), an = a.node(), bn = b.node(), weights, normalizer] {
            double* ga = grad_ptr(an);
            double* gb = grad_ptr(bn);
            if (on->grad.empty()) return;
            const double g = 2.0 * on->grad[0] / normalizer;
            for (std::size_t i = 0; i < an->value.size(); ++i) {
                const double w = weights.empty() ? 1.0 : weights[i];
                const double v = g * w * (an->value[i] - bn->value[i]);
                if (ga) ga[i] += v;
                if (gb) gb[i] -= v;
            }
        });
    }
    return result;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto sp = split_axis(x.shape(), axis, "softmax");
    const auto px = x.data();
    std::vector<double> out(px.size());
    if (sp.inner == 1) {
        kernels::softmax_rows(px.data(), out.data(), sp.outer, sp.n);
    } else {
        std::vector<double> buf_in(sp.n), buf_out(sp.n);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = o * sp.n * sp.inner + in;
                for (std::size_t j = 0; j < sp.n; ++j) buf_in[j] = px[base + j * sp.inner];
                kernels::softmax_rows(buf_in.data(), buf_out.data(), 1, sp.n);
                for (std::size_t j = 0; j < sp.n; ++j) out[base + j * sp.inner] = buf_out[j];
            }
    }
    Tape* tape = recording_tape({&x});
    Tensor result = make_output(x.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), sp] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            const auto& y = on->value;
            const auto& dy = on->grad;
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t in = 0; in < sp.inner; ++in) {
                    const std::size_t base = o * sp.n * sp.inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < sp.n; ++j) {
                        const std::size_t idx = base + j * sp.inner;
                        dot += dy[idx] * y[idx];
                    }
                    for (std::size_t j = 0; j < sp.n; ++j) {
                        const std::size_t idx = base + j * sp.inner;
                        gx[idx] += y[idx] * (dy[idx] - dot);
                    }
                }
        });
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, std::size_t axis,
                  double eps) {
    if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be > 0");
    const auto sp = split_axis(x.shape(), axis, "layer_norm");
    if (gain.numel() != sp.n || bias.numel() != sp.n)
        throw ShapeError("layer_norm: affine params must have " + std::to_string(sp.n) +
                         " entries");
    const auto px = x.data();
    const std::size_t slices = sp.outer * sp.inner;
    std::vector<double> out(px.size());
    std::vector<double> xhat(px.size());
    std::vector<double> inv_std(slices);
    if (sp.inner == 1) {
        kernels::layer_norm_rows(px.data(), gain.data().data(), bias.data().data(), eps,
                                 out.data(), xhat.data(), inv_std.data(), sp.outer, sp.n);
    } else {
        std::vector<double> bi(sp.n), bo(sp.n), bh(sp.n);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = o * sp.n * sp.inner + in;
                for (std::size_t j = 0; j < sp.n; ++j) bi[j] = px[base + j * sp.inner];
                kernels::layer_norm_rows(bi.data(), gain.data().data(), bias.data().data(), eps,
                                         bo.data(), bh.data(), &inv_std[o * sp.inner + in], 1,
                                         sp.n);
                for (std::size_t j = 0; j < sp.n; ++j) {
                    out[base + j * sp.inner] = bo[j];
                    xhat[base + j * sp.inner] = bh[j];
                }
            }
    }
    Tape* tape = recording_tape({&x, &gain, &bias});
    Tensor result = make_output(x.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), gn = gain.node(), bn = bias.node(), sp,
                      xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            double* gx = grad_ptr(xn);
            double* gg = grad_ptr(gn);
            double* gb = grad_ptr(bn);
            if (on->grad.empty()) return;
            const auto& dy = on->grad;
            const auto& g = gn->value;
            const double inv_n = 1.0 / static_cast<double>(sp.n);
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t in = 0; in < sp.inner; ++in) {
                    const std::size_t base = o * sp.n * sp.inner + in;
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (std::size_t j = 0; j < sp.n; ++j) {
                        const std::size_t idx = base + j * sp.inner;
                        const double dh = dy[idx] * g[j];
                        sum_dh += dh;
                        sum_dh_h += dh * xhat[idx];
                        if (gg) gg[j] += dy[idx] * xhat[idx];
                        if (gb) gb[j] += dy[idx];
                    }
                    if (!gx) continue;
                    const double istd = inv_std[o * sp.inner + in];
                    for (std::size_t j = 0; j < sp.n; ++j) {
                        const std::size_t idx = base + j * sp.inner;
                        const double dh = dy[idx] * g[j];
                        gx[idx] += istd * (dh - inv_n * sum_dh - xhat[idx] * inv_n * sum_dh_h);
                    }
                }
        });
    }
    return result;
}

Tensor gelu(const Tensor& x) {
    const auto px = x.data();
    std::vector<double> out(px.size());
    kernels::gelu(px.data(), out.data(), px.size());
    Tape* tape = recording_tape({&x});
    Tensor result = make_output(x.shape(), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node()] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            kernels::gelu_backward(xn->value.data(), on->grad.data(), gx, xn->value.size());
        });
    }
    return result;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const auto& sx = x.shape();
    const auto& sw = weight.shape();
    if (sx.size() != 2 || sw.size() != 3 || sw[1] != sx[1])
        throw ShapeError("conv1d: input " + shape_str(sx) + " vs weight " + shape_str(sw));
    const std::size_t len = sx[0], cin = sx[1], cout = sw[0], ks = sw[2];
    if (ks % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
    if (bias.numel() != cout) throw ShapeError("conv1d: bias must have c_out entries");
    const long pad = static_cast<long>(ks / 2);

    // Per-tap weight matrices W_t[c_in, c_out] so each tap is one GEMM.
    std::vector<double> taps(ks * cin * cout);
    const auto pw = weight.data();
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t t = 0; t < ks; ++t)
                taps[t * cin * cout + i * cout + o] = pw[(o * cin + i) * ks + t];

    std::vector<double> out(len * cout);
    const auto pb = bias.data();
    for (std::size_t l = 0; l < len; ++l) std::copy(pb.begin(), pb.end(), out.begin() + l * cout);
    const double* px = x.data().data();
    for (std::size_t t = 0; t < ks; ++t) {
        const long shift = static_cast<long>(t) - pad;
        const long lo = std::max(0L, -shift);
        const long hi = std::min(static_cast<long>(len), static_cast<long>(len) - shift);
        if (hi <= lo) continue;
        kernels::gemm(Trans::No, Trans::No, static_cast<std::size_t>(hi - lo), cout, cin, 1.0,
                      px + (lo + shift) * static_cast<long>(cin), cin, taps.data() + t * cin * cout,
                      cout, 1.0, out.data() + lo * static_cast<long>(cout), cout);
    }

    Tape* tape = recording_tape({&x, &weight, &bias});
    Tensor result = make_output({len, cout}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), wn = weight.node(), bn = bias.node(),
                      taps = std::move(taps), len, cin, cout, ks, pad] {
            double* gx = grad_ptr(xn);
            double* gw = grad_ptr(wn);
            double* gb = grad_ptr(bn);
            if (on->grad.empty()) return;
            const double* dy = on->grad.data();
            if (gb)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t o = 0; o < cout; ++o) gb[o] += dy[l * cout + o];
            std::vector<double> gtap(gw ? cin * cout : 0);
            for (std::size_t t = 0; t < ks; ++t) {
                const long shift = static_cast<long>(t) - pad;
                const long lo = std::max(0L, -shift);
                const long hi = std::min(static_cast<long>(len), static_cast<long>(len) - shift);
                if (hi <= lo) continue;
                const auto rows = static_cast<std::size_t>(hi - lo);
                const double* dyt = dy + lo * static_cast<long>(cout);
                if (gx)
                    kernels::gemm(Trans::No, Trans::Yes, rows, cin, cout, 1.0, dyt, cout,
                                  taps.data() + t * cin * cout, cout, 1.0,
                                  gx + (lo + shift) * static_cast<long>(cin), cin);
                if (gw) {
                    kernels::gemm(Trans::Yes, Trans::No, cin, cout, rows, 1.0,
                                  xn->value.data() + (lo + shift) * static_cast<long>(cin), cin,
                                  dyt, cout, 0.0, gtap.data(), cout);
                    for (std::size_t o = 0; o < cout; ++o)
                        for (std::size_t i = 0; i < cin; ++i)
                            gw[(o * cin + i) * ks + t] += gtap[i * cout + o];
                }
            }
        });
    }
    return result;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
    const auto& sq = q.shape();
    const auto& sk = k.shape();
    const auto& sv = v.shape();
    if (sq.size() != 2 || sk.size() != 2 || sv.size() != 2 || sq[1] != sk[1] || sk != sv)
        throw ShapeError("attention: q " + shape_str(sq) + ", k " + shape_str(sk) + ", v " +
                         shape_str(sv));
    const std::size_t lq = sq[0], lk = sk[0], d = sq[1];
    if (heads == 0 || d % heads != 0)
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> probs(heads * lq * lk);
    std::vector<double> out(lq * d, 0.0);
    const double* pq = q.data().data();
    const double* pk = k.data().data();
    const double* pv = v.data().data();
    for (std::size_t h = 0; h < heads; ++h) {
        double* p = probs.data() + h * lq * lk;
        kernels::gemm(Trans::No, Trans::Yes, lq, lk, dh, inv_sqrt, pq + h * dh, d, pk + h * dh, d,
                      0.0, p, lk);
        kernels::softmax_rows(p, p, lq, lk);
        kernels::gemm(Trans::No, Trans::No, lq, dh, lk, 1.0, p, lk, pv + h * dh, d, 0.0,
                      out.data() + h * dh, d);
    }

    Tape* tape = recording_tape({&q, &k, &v});
    Tensor result = make_output({lq, d}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), qn = q.node(), kn = k.node(), vn = v.node(),
                      probs = std::move(probs), heads, lq, lk, d, dh, inv_sqrt] {
            double* gq = grad_ptr(qn);
            double* gk = grad_ptr(kn);
            double* gv = grad_ptr(vn);
            if (on->grad.empty()) return;
            const double* dy = on->grad.data();
            std::vector<double> dp(lq * lk);
            for (std::size_t h = 0; h < heads; ++h) {
                const double* p = probs.data() + h * lq * lk;
                const double* dyh = dy + h * dh;
                if (gv)  // dV = P^T dO
                    kernels::gemm(Trans::Yes, Trans::No, lk, dh, lq, 1.0, p, lk, dyh, d, 1.0,
                                  gv + h * dh, d);
                if (!gq && !gk) continue;
                // dP = dO V^T, then dS = P * (dP - rowsum(dP * P))
                kernels::gemm(Trans::No, Trans::Yes, lq, lk, dh, 1.0, dyh, d,
                              vn->value.data() + h * dh, d, 0.0, dp.data(), lk);
                for (std::size_t i = 0; i < lq; ++i) {
                    const double* pr = p + i * lk;
                    double* dr = dp.data() + i * lk;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < lk; ++j) dot += pr[j] * dr[j];
                    for (std::size_t j = 0; j < lk; ++j) dr[j] = pr[j] * (dr[j] - dot);
                }
                if (gq)
                    kernels::gemm(Trans::No, Trans::No, lq, dh, lk, inv_sqrt, dp.data(), lk,
                                  kn->value.data() + h * dh, d, 1.0, gq + h * dh, d);
                if (gk)
                    kernels::gemm(Trans::Yes, Trans::No, lk, dh, lq, inv_sqrt, dp.data(), lk,
                                  qn->value.data() + h * dh, d, 1.0, gk + h * dh, d);
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    const auto px = x.data();
    Tape* tape = recording_tape({&x});
    Tensor result =
        make_output(std::move(shape), std::vector<double>(px.begin(), px.end()), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node()] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += on->grad[i];
        });
    }
    return result;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
    const auto& s = x.shape();
    if (s.empty() || count == 0 || start + count > s[0])
        throw ShapeError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") of " + shape_str(s));
    const std::size_t row = x.numel() / s[0];
    const auto px = x.data();
    Shape out_shape = s;
    out_shape[0] = count;
    std::vector<double> out(px.begin() + static_cast<long>(start * row),
                            px.begin() + static_cast<long>((start + count) * row));
    Tape* tape = recording_tape({&x});
    Tensor result = make_output(std::move(out_shape), std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), offset = start * row] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[offset + i] += on->grad[i];
        });
    }
    return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
        if (Shape(p.shape().begin() + 1, p.shape().end()) != tail)
            throw ShapeError("concat_rows: trailing dims differ");
        rows += p.dim(0);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape out_shape = parts[0].shape();
    out_shape[0] = rows;
    Tape* tape = Tape::active();
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (!any) tape = nullptr;
    Tensor result = make_output(std::move(out_shape), std::move(out), tape != nullptr);
    if (tape) {
        std::vector<detail::NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        tape->record([on = result.node(), nodes = std::move(nodes)] {
            std::size_t offset = 0;
            for (const auto& n : nodes) {
                double* g = grad_ptr(n);
                const std::size_t len = n->value.size();
                if (g && !on->grad.empty())
                    for (std::size_t i = 0; i < len; ++i) g[i] += on->grad[offset + i];
                offset += len;
            }
        });
    }
    return result;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    const auto& s = x.shape();
    if (s.size() != 2 || count == 0 || start + count > s[1])
        throw ShapeError("slice_cols of " + shape_str(s));
    const std::size_t rows = s[0], cols = s[1];
    const auto px = x.data();
    std::vector<double> out(rows * count);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out[r * count + c] = px[r * cols + start + c];
    Tape* tape = recording_tape({&x});
    Tensor result = make_output({rows, count}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), xn = x.node(), rows, cols, start, count] {
            double* gx = grad_ptr(xn);
            if (!gx || on->grad.empty()) return;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < count; ++c)
                    gx[r * cols + start + c] += on->grad[r * count + c];
        });
    }
    return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const std::size_t rows = parts[0].dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols: row counts differ");
        cols += p.dim(1);
    }
    std::vector<double> out(rows * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        const auto pp = p.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) out[r * cols + offset + c] = pp[r * w + c];
        offset += w;
    }
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    Tape* tape = any ? Tape::active() : nullptr;
    Tensor result = make_output({rows, cols}, std::move(out), tape != nullptr);
    if (tape) {
        std::vector<detail::NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        tape->record([on = result.node(), nodes = std::move(nodes), rows, cols] {
            std::size_t offset = 0;
            for (const auto& n : nodes) {
                const std::size_t w = n->shape[1];
                double* g = grad_ptr(n);
                if (g && !on->grad.empty())
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < w; ++c)
                            g[r * w + c] += on->grad[r * cols + offset + c];
                offset += w;
            }
        });
    }
    return result;
}

Tensor gather_row(const Tensor& table, std::size_t index) {
    if (table.rank() != 2 || index >= table.dim(0))
        throw ShapeError("gather_row " + std::to_string(index) + " of " + shape_str(table.shape()));
    const std::size_t d = table.dim(1);
    const auto pt = table.data();
    std::vector<double> out(pt.begin() + static_cast<long>(index * d),
                            pt.begin() + static_cast<long>((index + 1) * d));
    Tape* tape = recording_tape({&table});
    Tensor result = make_output({1, d}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), tn = table.node(), index, d] {
            double* g = grad_ptr(tn);
            if (!g || on->grad.empty()) return;
            for (std::size_t j = 0; j < d; ++j) g[index * d + j] += on->grad[j];
        });
    }
    return result;
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
    const std::size_t d = row.numel();
    if (n == 0) throw ShapeError("repeat_rows: n must be positive");
    const auto pr = row.data();
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) std::copy(pr.begin(), pr.end(), out.begin() + static_cast<long>(i * d));
    Tape* tape = recording_tape({&row});
    Tensor result = make_output({n, d}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), rn = row.node(), n, d] {
            double* g = grad_ptr(rn);
            if (!g || on->grad.empty()) return;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[j] += on->grad[i * d + j];
        });
    }
    return result;
}

void require_finite(const Tensor& x, const char* what) {
    for (double v : x.data())
        if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
}

}  // namespace camfit
