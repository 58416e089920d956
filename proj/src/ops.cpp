#include "frs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace frs {

namespace {

void check_finite(const TensorNode& node) {
    for (double v : node.data) {
        if (!std::isfinite(v))
            throw NumericError(std::string("op ") + node.op + " produced a non-finite value");
    }
}

// Wires the graph edges and runs the finite check. `bw` reads out.grad and
// accumulates into the parents' grad buffers.
Tensor finish_op(const char* name, Shape shape, std::vector<double> data,
                 std::vector<Tensor> inputs, std::function<void(TensorNode&)> bw) {
    Tensor out = Tensor::from(std::move(shape), std::move(data), false);
    TensorNode& node = *out.node();
    node.op = name;
    if (finite_checks()) check_finite(node);
    bool track = false;
    if (grad_enabled()) {
        for (const Tensor& t : inputs)
            if (t.requires_grad()) track = true;
    }
    if (track) {
        node.requires_grad = true;
        node.parents.reserve(inputs.size());
        for (Tensor& t : inputs) node.parents.push_back(t.node());
        node.backward_fn = std::move(bw);
    }
    return out;
}

void require_rank4(const Tensor& t, const char* op, const char* role) {
    if (t.rank() != 4)
        throw ShapeError(std::string(op) + ": " + role + " must be rank 4, got rank " +
                         std::to_string(t.rank()) + " " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        const Shape& sa = a.shape();
        const Shape& sb = b.shape();
        size_t axis = 0;
        for (; axis < std::min(sa.size(), sb.size()); ++axis)
            if (sa[axis] != sb[axis]) break;
        throw ShapeError(std::string(op) + ": shape mismatch at axis " + std::to_string(axis) +
                         ": " + shape_str(sa) + " vs " + shape_str(sb));
    }
}

// Elementwise unary helper: fwd(v) -> value, dfd(x, y) -> local derivative
// given input x and output y.
template <typename Fwd, typename Dfd>
Tensor unary_elementwise(const char* name, const Tensor& x, Fwd fwd, Dfd dfd) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    auto xn = x.node();
    return finish_op(name, x.shape(), std::move(out), {x}, [xn, dfd](TensorNode& o) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < o.data.size(); ++i)
            xn->grad[i] += o.grad[i] * dfd(xn->data[i], o.data[i]);
    });
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_elementwise(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_elementwise(
        "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return unary_elementwise(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return finish_op("add", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return finish_op("mul", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->data[i];
        }
    });
}

Tensor mul_scalar(const Tensor& x, double s) {
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * s;
    auto xn = x.node();
    return finish_op("mul_scalar", x.shape(), std::move(out), {x}, [xn, s](TensorNode& o) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * s;
    });
}

Tensor mse_elementwise(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse_elementwise");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        out[i] = d * d;
    }
    auto an = a.node(), bn = b.node();
    return finish_op("mse_elementwise", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i)
                an->grad[i] += o.grad[i] * 2.0 * (an->data[i] - bn->data[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i)
                bn->grad[i] -= o.grad[i] * 2.0 * (an->data[i] - bn->data[i]);
        }
    });
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "abs_diff");
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::fabs(av[i] - bv[i]);
    auto an = a.node(), bn = b.node();
    return finish_op("abs_diff", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& o) {
        auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i)
                an->grad[i] += o.grad[i] * sign(an->data[i] - bn->data[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i)
                bn->grad[i] -= o.grad[i] * sign(an->data[i] - bn->data[i]);
        }
    });
}

Tensor bce_prob(const Tensor& p, const Tensor& target) {
    require_same_shape(p, target, "bce_prob");
    const auto pv = p.data();
    const auto tv = target.data();
    std::vector<double> out(pv.size());
    for (size_t i = 0; i < pv.size(); ++i) {
        const double pc = std::clamp(pv[i], kProbEps, 1.0 - kProbEps);
        out[i] = -(tv[i] * std::log(pc) + (1.0 - tv[i]) * std::log(1.0 - pc));
    }
    auto pn = p.node(), tn = target.node();
    return finish_op("bce_prob", p.shape(), std::move(out), {p, target}, [pn, tn](TensorNode& o) {
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            const double raw = pn->data[i];
            if (raw <= kProbEps || raw >= 1.0 - kProbEps) continue;  // clamped: flat
            pn->grad[i] += o.grad[i] * (-tn->data[i] / raw + (1.0 - tn->data[i]) / (1.0 - raw));
        }
    });
}

Tensor focal_bce(const Tensor& p, const Tensor& target, double gamma, double alpha) {
    require_same_shape(p, target, "focal_bce");
    const auto pv = p.data();
    const auto tv = target.data();
    std::vector<double> out(pv.size());
    for (size_t i = 0; i < pv.size(); ++i) {
        const double pc = std::clamp(pv[i], kProbEps, 1.0 - kProbEps);
        const double t = tv[i];
        out[i] = -alpha * t * std::pow(1.0 - pc, gamma) * std::log(pc) -
                 (1.0 - alpha) * (1.0 - t) * std::pow(pc, gamma) * std::log(1.0 - pc);
    }
    auto pn = p.node(), tn = target.node();
    return finish_op("focal_bce", p.shape(), std::move(out), {p, target},
                     [pn, tn, gamma, alpha](TensorNode& o) {
                         if (!pn->requires_grad) return;
                         pn->ensure_grad();
                         for (size_t i = 0; i < o.grad.size(); ++i) {
                             const double raw = pn->data[i];
                             if (raw <= kProbEps || raw >= 1.0 - kProbEps) continue;
                             const double t = tn->data[i];
                             const double q = 1.0 - raw;
                             const double dpos =
                                 -alpha * t *
                                 (-gamma * std::pow(q, gamma - 1.0) * std::log(raw) +
                                  std::pow(q, gamma) / raw);
                             const double dneg =
                                 -(1.0 - alpha) * (1.0 - t) *
                                 (gamma * std::pow(raw, gamma - 1.0) * std::log(q) -
                                  std::pow(raw, gamma) / q);
                             pn->grad[i] += o.grad[i] * (dpos + dneg);
                         }
                     });
}

Tensor max_over_channels(const Tensor& x) {
    require_rank4(x, "max_over_channels", "input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int hw = H * W;
    const auto xv = x.data();
    std::vector<double> out(static_cast<size_t>(N) * hw);
    // Argmax channel per site, lowest index on ties (strict > while scanning).
    auto arg = std::make_shared<std::vector<int>>(out.size());
    for (int n = 0; n < N; ++n) {
        const double* base = xv.data() + static_cast<size_t>(n) * C * hw;
        double* o = out.data() + static_cast<size_t>(n) * hw;
        int* am = arg->data() + static_cast<size_t>(n) * hw;
        for (int i = 0; i < hw; ++i) {
            o[i] = base[i];
            am[i] = 0;
        }
        for (int c = 1; c < C; ++c) {
            const double* row = base + static_cast<size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) {
                if (row[i] > o[i]) {
                    o[i] = row[i];
                    am[i] = c;
                }
            }
        }
    }
    auto xn = x.node();
    return finish_op("max_over_channels", {N, 1, H, W}, std::move(out), {x},
                     [xn, arg, C, hw](TensorNode& o) {
                         if (!xn->requires_grad) return;
                         xn->ensure_grad();
                         const int N = static_cast<int>(o.data.size()) / hw;
                         for (int n = 0; n < N; ++n) {
                             const size_t obase = static_cast<size_t>(n) * hw;
                             const size_t ibase = static_cast<size_t>(n) * C * hw;
                             for (int i = 0; i < hw; ++i)
                                 xn->grad[ibase + static_cast<size_t>((*arg)[obase + i]) * hw + i] +=
                                     o.grad[obase + i];
                         }
                     });
}

Tensor upsample_nearest2x(const Tensor& x) {
    require_rank4(x, "upsample_nearest2x", "input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto xv = x.data();
    std::vector<double> out(static_cast<size_t>(N) * C * 4 * H * W);
    const int OW = 2 * W;
    for (int nc = 0; nc < N * C; ++nc) {
        const double* in = xv.data() + static_cast<size_t>(nc) * H * W;
        double* o = out.data() + static_cast<size_t>(nc) * 4 * H * W;
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                const double v = in[h * W + w];
                double* cell = o + (2 * h) * OW + 2 * w;
                cell[0] = v;
                cell[1] = v;
                cell[OW] = v;
                cell[OW + 1] = v;
            }
        }
    }
    auto xn = x.node();
    return finish_op("upsample_nearest2x", {N, C, 2 * H, 2 * W}, std::move(out), {x},
                     [xn, H, W](TensorNode& o) {
                         if (!xn->requires_grad) return;
                         xn->ensure_grad();
                         const int OW = 2 * W;
                         const int planes = static_cast<int>(xn->data.size()) / (H * W);
                         for (int nc = 0; nc < planes; ++nc) {
                             double* ig = xn->grad.data() + static_cast<size_t>(nc) * H * W;
                             const double* og = o.grad.data() + static_cast<size_t>(nc) * 4 * H * W;
                             for (int h = 0; h < H; ++h)
                                 for (int w = 0; w < W; ++w) {
                                     const double* cell = og + (2 * h) * OW + 2 * w;
                                     ig[h * W + w] += cell[0] + cell[1] + cell[OW] + cell[OW + 1];
                                 }
                         }
                     });
}

Tensor avg_pool2x(const Tensor& x) {
    require_rank4(x, "avg_pool2x", "input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0) throw ShapeError("avg_pool2x: axis 2 (H=" + std::to_string(H) + ") must be even");
    if (W % 2 != 0) throw ShapeError("avg_pool2x: axis 3 (W=" + std::to_string(W) + ") must be even");
    const int OH = H / 2, OW = W / 2;
    const auto xv = x.data();
    std::vector<double> out(static_cast<size_t>(N) * C * OH * OW);
    for (int nc = 0; nc < N * C; ++nc) {
        const double* in = xv.data() + static_cast<size_t>(nc) * H * W;
        double* o = out.data() + static_cast<size_t>(nc) * OH * OW;
        for (int h = 0; h < OH; ++h)
            for (int w = 0; w < OW; ++w) {
                const double* cell = in + (2 * h) * W + 2 * w;
                o[h * OW + w] = 0.25 * (cell[0] + cell[1] + cell[W] + cell[W + 1]);
            }
    }
    auto xn = x.node();
    return finish_op("avg_pool2x", {N, C, OH, OW}, std::move(out), {x},
                     [xn, H, W, OH, OW](TensorNode& o) {
                         if (!xn->requires_grad) return;
                         xn->ensure_grad();
                         const int planes = static_cast<int>(xn->data.size()) / (H * W);
                         for (int nc = 0; nc < planes; ++nc) {
                             double* ig = xn->grad.data() + static_cast<size_t>(nc) * H * W;
                             const double* og = o.grad.data() + static_cast<size_t>(nc) * OH * OW;
                             for (int h = 0; h < OH; ++h)
                                 for (int w = 0; w < OW; ++w) {
                                     const double g = 0.25 * og[h * OW + w];
                                     double* cell = ig + (2 * h) * W + 2 * w;
                                     cell[0] += g;
                                     cell[1] += g;
                                     cell[W] += g;
                                     cell[W + 1] += g;
                                 }
                         }
                     });
}

Tensor sum_channels(const Tensor& x) {
    require_rank4(x, "sum_channels", "input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int hw = H * W;
    const auto xv = x.data();
    std::vector<double> out(static_cast<size_t>(N) * hw, 0.0);
    for (int n = 0; n < N; ++n) {
        const double* base = xv.data() + static_cast<size_t>(n) * C * hw;
        double* o = out.data() + static_cast<size_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
            const double* row = base + static_cast<size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) o[i] += row[i];
        }
    }
    auto xn = x.node();
    return finish_op("sum_channels", {N, 1, H, W}, std::move(out), {x}, [xn, C, hw](TensorNode& o) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int N = static_cast<int>(o.data.size()) / hw;
        for (int n = 0; n < N; ++n) {
            const double* og = o.grad.data() + static_cast<size_t>(n) * hw;
            double* ig = xn->grad.data() + static_cast<size_t>(n) * C * hw;
            for (int c = 0; c < C; ++c) {
                double* row = ig + static_cast<size_t>(c) * hw;
                for (int i = 0; i < hw; ++i) row[i] += og[i];
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    const auto xv = x.data();
    double acc = 0.0;
    for (double v : xv) acc += v;
    auto xn = x.node();
    return finish_op("sum_all", {1}, {acc}, {x}, [xn](TensorNode& o) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = o.grad[0];
        for (double& gv : xn->grad) gv += g;
    });
}

namespace {

struct ConvDims {
    int N, Cin, H, W, Cout, K, OH, OW, stride, pad;
};

// out[n,oc,oh,ow] = bias[oc] + sum_{ic,kh,kw} in[n,ic,oh*s-p+kh,ow*s-p+kw] * w[oc,ic,kh,kw]
void conv_forward(const double* in, const double* w, const double* b, double* out,
                  const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static) if (d.N * d.Cout > 1)
    for (int n = 0; n < d.N; ++n) {
        for (int oc = 0; oc < d.Cout; ++oc) {
            double* oplane = out + (static_cast<size_t>(n) * d.Cout + oc) * d.OH * d.OW;
            std::fill(oplane, oplane + d.OH * d.OW, b ? b[oc] : 0.0);
            for (int ic = 0; ic < d.Cin; ++ic) {
                const double* iplane = in + (static_cast<size_t>(n) * d.Cin + ic) * d.H * d.W;
                const double* wk = w + (static_cast<size_t>(oc) * d.Cin + ic) * d.K * d.K;
                for (int kh = 0; kh < d.K; ++kh) {
                    for (int kw = 0; kw < d.K; ++kw) {
                        const double wv = wk[kh * d.K + kw];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < d.OH; ++oh) {
                            const int ih = oh * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            const double* irow = iplane + static_cast<size_t>(ih) * d.W;
                            double* orow = oplane + static_cast<size_t>(oh) * d.OW;
                            // valid ow range so that iw = ow*s - p + kw stays in bounds
                            int ow0 = 0, ow1 = d.OW;
                            while (ow0 < d.OW && ow0 * d.stride - d.pad + kw < 0) ++ow0;
                            while (ow1 > ow0 && (ow1 - 1) * d.stride - d.pad + kw >= d.W) --ow1;
                            const double* ibase = irow - d.pad + kw;
                            if (d.stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) orow[ow] += wv * ibase[ow];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow)
                                    orow[ow] += wv * ibase[ow * d.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradient w.r.t. input: parallel over batch items (disjoint writes).
void conv_backward_input(const double* og, const double* w, double* ig, const ConvDims& d) {
#pragma omp parallel for schedule(static) if (d.N > 1)
    for (int n = 0; n < d.N; ++n) {
        for (int oc = 0; oc < d.Cout; ++oc) {
            const double* oplane = og + (static_cast<size_t>(n) * d.Cout + oc) * d.OH * d.OW;
            for (int ic = 0; ic < d.Cin; ++ic) {
                double* iplane = ig + (static_cast<size_t>(n) * d.Cin + ic) * d.H * d.W;
                const double* wk = w + (static_cast<size_t>(oc) * d.Cin + ic) * d.K * d.K;
                for (int kh = 0; kh < d.K; ++kh) {
                    for (int kw = 0; kw < d.K; ++kw) {
                        const double wv = wk[kh * d.K + kw];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < d.OH; ++oh) {
                            const int ih = oh * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            double* irow = iplane + static_cast<size_t>(ih) * d.W;
                            const double* orow = oplane + static_cast<size_t>(oh) * d.OW;
                            int ow0 = 0, ow1 = d.OW;
                            while (ow0 < d.OW && ow0 * d.stride - d.pad + kw < 0) ++ow0;
                            while (ow1 > ow0 && (ow1 - 1) * d.stride - d.pad + kw >= d.W) --ow1;
                            double* ibase = irow - d.pad + kw;
                            if (d.stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) ibase[ow] += wv * orow[ow];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow)
                                    ibase[ow * d.stride] += wv * orow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradient w.r.t. weight: parallel over output channels (disjoint slices);
// accumulation order over (n, oh, ow) is fixed, so results do not depend on
// the thread count.
void conv_backward_weight(const double* og, const double* in, double* wg, const ConvDims& d) {
#pragma omp parallel for schedule(static) if (d.Cout > 1)
    for (int oc = 0; oc < d.Cout; ++oc) {
        for (int n = 0; n < d.N; ++n) {
            const double* oplane = og + (static_cast<size_t>(n) * d.Cout + oc) * d.OH * d.OW;
            for (int ic = 0; ic < d.Cin; ++ic) {
                const double* iplane = in + (static_cast<size_t>(n) * d.Cin + ic) * d.H * d.W;
                double* wk = wg + (static_cast<size_t>(oc) * d.Cin + ic) * d.K * d.K;
                for (int kh = 0; kh < d.K; ++kh) {
                    for (int kw = 0; kw < d.K; ++kw) {
                        double acc = 0.0;
                        for (int oh = 0; oh < d.OH; ++oh) {
                            const int ih = oh * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            const double* irow = iplane + static_cast<size_t>(ih) * d.W;
                            const double* orow = oplane + static_cast<size_t>(oh) * d.OW;
                            int ow0 = 0, ow1 = d.OW;
                            while (ow0 < d.OW && ow0 * d.stride - d.pad + kw < 0) ++ow0;
                            while (ow1 > ow0 && (ow1 - 1) * d.stride - d.pad + kw >= d.W) --ow1;
                            const double* ibase = irow - d.pad + kw;
                            if (d.stride == 1) {
                                for (int ow = ow0; ow < ow1; ++ow) acc += orow[ow] * ibase[ow];
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow)
                                    acc += orow[ow] * ibase[ow * d.stride];
                            }
                        }
                        wk[kh * d.K + kw] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    require_rank4(input, "conv2d", "input");
    require_rank4(weight, "conv2d", "weight");
    if (bias.rank() != 1)
        throw ShapeError("conv2d: bias must be rank 1, got " + shape_str(bias.shape()));
    ConvDims d;
    d.N = input.dim(0);
    d.Cin = input.dim(1);
    d.H = input.dim(2);
    d.W = input.dim(3);
    d.Cout = weight.dim(0);
    d.K = weight.dim(2);
    d.stride = stride;
    d.pad = padding;
    if (weight.dim(1) != d.Cin)
        throw ShapeError("conv2d: channel axis mismatch: input axis 1 is " + std::to_string(d.Cin) +
                         " but weight axis 1 is " + std::to_string(weight.dim(1)));
    if (weight.dim(3) != d.K)
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(weight.shape()));
    if (d.K % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(d.K));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
    if (bias.dim(0) != d.Cout)
        throw ShapeError("conv2d: bias axis 0 is " + std::to_string(bias.dim(0)) +
                         " but weight axis 0 is " + std::to_string(d.Cout));
    const int hnum = d.H + 2 * padding - d.K;
    const int wnum = d.W + 2 * padding - d.K;
    if (hnum < 0 || hnum % stride != 0)
        throw ShapeError("conv2d: output height (axis 2) is not an integer: (" + std::to_string(d.H) +
                         " + 2*" + std::to_string(padding) + " - " + std::to_string(d.K) + ") / " +
                         std::to_string(stride));
    if (wnum < 0 || wnum % stride != 0)
        throw ShapeError("conv2d: output width (axis 3) is not an integer: (" + std::to_string(d.W) +
                         " + 2*" + std::to_string(padding) + " - " + std::to_string(d.K) + ") / " +
                         std::to_string(stride));
    d.OH = hnum / stride + 1;
    d.OW = wnum / stride + 1;

    std::vector<double> out(static_cast<size_t>(d.N) * d.Cout * d.OH * d.OW);
    conv_forward(input.data().data(), weight.data().data(), bias.data().data(), out.data(), d);

    auto in_n = input.node(), w_n = weight.node(), b_n = bias.node();
    return finish_op("conv2d", {d.N, d.Cout, d.OH, d.OW}, std::move(out), {input, weight, bias},
                     [in_n, w_n, b_n, d](TensorNode& o) {
                         if (in_n->requires_grad) {
                             in_n->ensure_grad();
                             conv_backward_input(o.grad.data(), w_n->data.data(),
                                                 in_n->grad.data(), d);
                         }
                         if (w_n->requires_grad) {
                             w_n->ensure_grad();
                             conv_backward_weight(o.grad.data(), in_n->data.data(),
                                                  w_n->grad.data(), d);
                         }
                         if (b_n->requires_grad) {
                             b_n->ensure_grad();
                             const int plane = d.OH * d.OW;
                             for (int n = 0; n < d.N; ++n)
                                 for (int oc = 0; oc < d.Cout; ++oc) {
                                     const double* op =
                                         o.grad.data() +
                                         (static_cast<size_t>(n) * d.Cout + oc) * plane;
                                     double acc = 0.0;
                                     for (int i = 0; i < plane; ++i) acc += op[i];
                                     b_n->grad[oc] += acc;
                                 }
                         }
                     });
}

}  // namespace frs
