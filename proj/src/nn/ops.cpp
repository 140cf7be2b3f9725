#include "sigan/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace sigan::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Tensor<T>& grad_of(Node<T>* n) {
    return n->ensure_grad();
}

template <class T>
bool wants(Node<T>* n) {
    return n->requires_grad;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
    T* d = dst.raw();
    const T* s = src.raw();
    const std::size_t n = src.numel();
    for (std::size_t i = 0; i < n; ++i) d[i] += factor * s[i];
}

template <class T>
T stable_sigmoid(T v) {
    if (v >= T(0)) {
        const T e = std::exp(-v);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <class T>
T stable_softplus(T v) {
    return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
}

/// Source offset within an input plane for every (tap, output position), or -1
/// for a zero tap.
std::vector<int> build_tap_table(int in_h, int in_w, int out_h, int out_w, int kernel,
                                 const Conv2dOptions& opt) {
    std::vector<int> table(static_cast<std::size_t>(kernel) * kernel * out_h * out_w);
    std::size_t t = 0;
    for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
            for (int oy = 0; oy < out_h; ++oy) {
                int iy = oy * opt.stride - opt.padding + ky * opt.dilation;
                for (int ox = 0; ox < out_w; ++ox) {
                    int ix = ox * opt.stride - opt.padding + kx * opt.dilation;
                    int sy = iy;
                    int sx = ix;
                    switch (opt.pad_mode) {
                        case PadMode::zeros:
                            if (sy < 0 || sy >= in_h || sx < 0 || sx >= in_w) {
                                table[t++] = -1;
                                continue;
                            }
                            break;
                        case PadMode::replicate:
                            sy = std::clamp(sy, 0, in_h - 1);
                            sx = std::clamp(sx, 0, in_w - 1);
                            break;
                        case PadMode::wrap_width:
                            sy = std::clamp(sy, 0, in_h - 1);
                            sx = ((sx % in_w) + in_w) % in_w;
                            break;
                    }
                    table[t++] = sy * in_w + sx;
                }
            }
        }
    }
    return table;
}

}  // namespace

int conv_output_size(int in, int kernel, const Conv2dOptions& opt) {
    return (in + 2 * opt.padding - opt.dilation * (kernel - 1) - 1) / opt.stride + 1;
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a.value();
    accumulate(out, b.value());
    return make_result<T>(std::move(out), {a, b}, [](Node<T>* self) {
        return [self] {
            for (auto& p : self->parents)
                if (wants(p.get())) accumulate(grad_of(p.get()), self->grad);
        };
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a.value();
    accumulate(out, b.value(), T(-1));
    return make_result<T>(std::move(out), {a, b}, [](Node<T>* self) {
        return [self] {
            Node<T>* pa = self->parents[0].get();
            Node<T>* pb = self->parents[1].get();
            if (wants(pa)) accumulate(grad_of(pa), self->grad);
            if (wants(pb)) accumulate(grad_of(pb), self->grad, T(-1));
        };
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>* self) {
        return [self] {
            Node<T>* pa = self->parents[0].get();
            Node<T>* pb = self->parents[1].get();
            const auto& g = self->grad;
            if (wants(pa)) {
                auto& ga = grad_of(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * pb->value[i];
            }
            if (wants(pb)) {
                auto& gb = grad_of(pb);
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * pa->value[i];
            }
        };
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v *= s;
    return make_result<T>(std::move(out), {a}, [s](Node<T>* self) {
        return [self, s] { accumulate(grad_of(self->parents[0].get()), self->grad, s); };
    });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v += s;
    return make_result<T>(std::move(out), {a}, [](Node<T>* self) {
        return [self] { accumulate(grad_of(self->parents[0].get()), self->grad); };
    });
}

template <class T>
Var<T> add_n(const std::vector<Var<T>>& terms) {
    if (terms.empty()) throw ShapeError("add_n: no terms");
    Tensor<T> out = terms.front().value();
    for (std::size_t k = 1; k < terms.size(); ++k) {
        require_same_shape(out.shape(), terms[k].shape(), "add_n");
        accumulate(out, terms[k].value());
    }
    return make_result<T>(std::move(out), terms, [](Node<T>* self) {
        return [self] {
            for (auto& p : self->parents)
                if (wants(p.get())) accumulate(grad_of(p.get()), self->grad);
        };
    });
}

template <class T>
Var<T> mul_mask(const Var<T>& x, const Tensor<T>& mask) {
    const Shape s = x.shape();
    if (mask.shape() != Shape{s.n, 1, s.h, s.w}) {
        throw ShapeError("mul_mask: mask " + mask.shape().str() + " incompatible with " + s.str());
    }
    Tensor<T> out = x.value();
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const T* m = mask.raw() + n * plane;
        for (int c = 0; c < s.c; ++c) {
            T* o = out.raw() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] *= m[i];
        }
    }
    auto m = std::make_shared<Tensor<T>>(mask);
    return make_result<T>(std::move(out), {x}, [m, s, plane](Node<T>* self) {
        return [self, m, s, plane] {
            auto& gx = grad_of(self->parents[0].get());
            for (int n = 0; n < s.n; ++n) {
                const T* mm = m->raw() + n * plane;
                for (int c = 0; c < s.c; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) gx[off + i] += self->grad[off + i] * mm[i];
                }
            }
        };
    });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    return make_result<T>(std::move(out), {x}, [](Node<T>* self) {
        return [self] {
            auto& gx = grad_of(self->parents[0].get());
            for (std::size_t i = 0; i < gx.numel(); ++i)
                if (self->value[i] > T(0)) gx[i] += self->grad[i];
        };
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = stable_sigmoid(v);
    return make_result<T>(std::move(out), {x}, [](Node<T>* self) {
        return [self] {
            auto& gx = grad_of(self->parents[0].get());
            for (std::size_t i = 0; i < gx.numel(); ++i) {
                const T y = self->value[i];
                gx[i] += self->grad[i] * y * (T(1) - y);
            }
        };
    });
}

template <class T>
Var<T> softplus(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = stable_softplus(v);
    return make_result<T>(std::move(out), {x}, [](Node<T>* self) {
        return [self] {
            Node<T>* p = self->parents[0].get();
            auto& gx = grad_of(p);
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self->grad[i] * stable_sigmoid(p->value[i]);
        };
    });
}

template <class T>
Var<T> log_clamped(const Var<T>& x, T lo, T hi) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = std::log(std::clamp(v, lo, hi));
    return make_result<T>(std::move(out), {x}, [lo, hi](Node<T>* self) {
        return [self, lo, hi] {
            Node<T>* p = self->parents[0].get();
            auto& gx = grad_of(p);
            for (std::size_t i = 0; i < gx.numel(); ++i) {
                const T v = p->value[i];
                if (v >= lo && v <= hi) gx[i] += self->grad[i] / v;
            }
        };
    });
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& opt) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.c != xs.c || ws.h != ws.w) {
        throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
    }
    if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
        throw ShapeError("conv2d: bias " + bias.shape().str() + " for " + std::to_string(ws.n) + " outputs");
    }
    const int k = ws.h;
    const int oh = conv_output_size(xs.h, k, opt);
    const int ow = conv_output_size(xs.w, k, opt);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output for input " + xs.str());
    const int cout = ws.n;
    const int kk = k * k;
    const int K = xs.c * kk;
    const int P = oh * ow;
    const std::size_t in_plane = xs.plane();

    auto table = std::make_shared<std::vector<int>>(build_tap_table(xs.h, xs.w, oh, ow, k, opt));
    auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xs.n) * K * P);
    Tensor<T> out(Shape{xs.n, cout, oh, ow});

    Eigen::Map<const RowMat<T>> W(weight.value().raw(), cout, K);
    for (int n = 0; n < xs.n; ++n) {
        T* cn = cols->data() + static_cast<std::size_t>(n) * K * P;
        const T* xin = x.value().raw() + static_cast<std::size_t>(n) * xs.c * in_plane;
        for (int ci = 0; ci < xs.c; ++ci) {
            const T* plane = xin + ci * in_plane;
            for (int t = 0; t < kk; ++t) {
                const int* idx = table->data() + static_cast<std::size_t>(t) * P;
                T* row = cn + (static_cast<std::size_t>(ci) * kk + t) * P;
                for (int p = 0; p < P; ++p) row[p] = idx[p] >= 0 ? plane[idx[p]] : T(0);
            }
        }
        Eigen::Map<const RowMat<T>> C(cn, K, P);
        Eigen::Map<RowMat<T>> Y(out.raw() + static_cast<std::size_t>(n) * cout * P, cout, P);
        Y.noalias() = W * C;
        if (bias.defined()) {
            for (int co = 0; co < cout; ++co) Y.row(co).array() += bias.value()[co];
        }
    }

    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    return make_result<T>(std::move(out), inputs, [=](Node<T>* self) {
        return [=] {
            Node<T>* px = self->parents[0].get();
            Node<T>* pw = self->parents[1].get();
            Node<T>* pb = has_bias ? self->parents[2].get() : nullptr;
            Eigen::Map<const RowMat<T>> Wm(pw->value.raw(), cout, K);
            std::vector<T> dcols;
            if (wants(px)) dcols.resize(static_cast<std::size_t>(K) * P);
            for (int n = 0; n < xs.n; ++n) {
                Eigen::Map<const RowMat<T>> dY(self->grad.raw() + static_cast<std::size_t>(n) * cout * P, cout, P);
                const T* cn = cols->data() + static_cast<std::size_t>(n) * K * P;
                if (wants(pw)) {
                    Eigen::Map<RowMat<T>> dW(grad_of(pw).raw(), cout, K);
                    Eigen::Map<const RowMat<T>> C(cn, K, P);
                    dW.noalias() += dY * C.transpose();
                }
                if (pb && wants(pb)) {
                    auto& gb = grad_of(pb);
                    for (int co = 0; co < cout; ++co) gb[co] += dY.row(co).sum();
                }
                if (wants(px)) {
                    Eigen::Map<RowMat<T>> dC(dcols.data(), K, P);
                    dC.noalias() = Wm.transpose() * dY;
                    T* gx = grad_of(px).raw() + static_cast<std::size_t>(n) * xs.c * in_plane;
                    for (int ci = 0; ci < xs.c; ++ci) {
                        T* plane = gx + ci * in_plane;
                        for (int t = 0; t < kk; ++t) {
                            const int* idx = table->data() + static_cast<std::size_t>(t) * P;
                            const T* row = dcols.data() + (static_cast<std::size_t>(ci) * kk + t) * P;
                            for (int p = 0; p < P; ++p)
                                if (idx[p] >= 0) plane[idx[p]] += row[p];
                        }
                    }
                }
            }
        };
    });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
    const Shape s = x.shape();
    const Shape ps{1, s.c, 1, 1};
    require_same_shape(gamma.shape(), ps, "batch_norm gamma");
    require_same_shape(beta.shape(), ps, "batch_norm beta");
    require_same_shape(running_mean.shape(), ps, "batch_norm running mean");
    require_same_shape(running_var.shape(), ps, "batch_norm running var");
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;

    auto xhat = std::make_shared<Tensor<T>>(s);
    auto inv_std = std::make_shared<std::vector<T>>(s.c);
    Tensor<T> out(s);
    for (int c = 0; c < s.c; ++c) {
        double mu;
        double var;
        if (training) {
            double acc = 0;
            for (int n = 0; n < s.n; ++n) {
                const T* p = x.value().raw() + (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            mu = acc / count;
            double acc2 = 0;
            for (int n = 0; n < s.n; ++n) {
                const T* p = x.value().raw() + (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    acc2 += d * d;
                }
            }
            var = acc2 / count;
            running_mean[c] = static_cast<T>(momentum * running_mean[c] + (T(1) - momentum) * static_cast<T>(mu));
            running_var[c] = static_cast<T>(momentum * running_var[c] + (T(1) - momentum) * static_cast<T>(var));
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
        (*inv_std)[c] = istd;
        const T g = gamma.value()[c];
        const T b = beta.value()[c];
        for (int n = 0; n < s.n; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
            const T* p = x.value().raw() + off;
            T* xh = xhat->raw() + off;
            T* o = out.raw() + off;
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = static_cast<T>((p[i] - mu) * istd);
                o[i] = g * xh[i] + b;
            }
        }
    }

    return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>* self) {
        return [=] {
            Node<T>* px = self->parents[0].get();
            Node<T>* pg = self->parents[1].get();
            Node<T>* pb = self->parents[2].get();
            for (int c = 0; c < s.c; ++c) {
                double sum_dy = 0;
                double sum_dy_xhat = 0;
                for (int n = 0; n < s.n; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    const T* dy = self->grad.raw() + off;
                    const T* xh = xhat->raw() + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += dy[i];
                        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                    }
                }
                if (wants(pg)) grad_of(pg)[c] += static_cast<T>(sum_dy_xhat);
                if (wants(pb)) grad_of(pb)[c] += static_cast<T>(sum_dy);
                if (!wants(px)) continue;
                const T g = pg->value[c];
                const T istd = (*inv_std)[c];
                auto& gx = grad_of(px);
                for (int n = 0; n < s.n; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
                    const T* dy = self->grad.raw() + off;
                    const T* xh = xhat->raw() + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (training) {
                            gx[off + i] += static_cast<T>(g * istd *
                                                          (dy[i] - sum_dy / count - xh[i] * sum_dy_xhat / count));
                        } else {
                            gx[off + i] += g * istd * dy[i];
                        }
                    }
                }
            }
        };
    });
}

template <class T>
Var<T> instance_norm(const Var<T>& x, T eps) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(plane);
    auto xhat = std::make_shared<Tensor<T>>(s);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * s.c);
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const T* p = x.value().raw() + nc * plane;
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        const double mu = acc / count;
        double acc2 = 0;
        for (std::size_t i = 0; i < plane; ++i) acc2 += (p[i] - mu) * (p[i] - mu);
        const T istd = static_cast<T>(1.0 / std::sqrt(acc2 / count + eps));
        (*inv_std)[nc] = istd;
        T* xh = xhat->raw() + nc * plane;
        for (std::size_t i = 0; i < plane; ++i) xh[i] = static_cast<T>((p[i] - mu) * istd);
    }
    Tensor<T> out = *xhat;
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& gx = grad_of(self->parents[0].get());
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                const T* dy = self->grad.raw() + nc * plane;
                const T* xh = xhat->raw() + nc * plane;
                double sum_dy = 0;
                double sum_dy_xhat = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dy[i];
                    sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                }
                const T istd = (*inv_std)[nc];
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[nc * plane + i] +=
                        static_cast<T>(istd * (dy[i] - sum_dy / count - xh[i] * sum_dy_xhat / count));
                }
            }
        };
    });
}

template <class T>
Var<T> avg_pool2(const Var<T>& x) {
    const Shape s = x.shape();
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    if (oh == 0 || ow == 0) throw ShapeError("avg_pool2: input too small " + s.str());
    Tensor<T> out(Shape{s.n, s.c, oh, ow});
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const T* p = x.value().raw() + nc * s.plane();
        T* o = out.raw() + static_cast<std::size_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const T* q = p + (2 * y) * s.w + 2 * xx;
                o[y * ow + xx] = T(0.25) * (q[0] + q[1] + q[s.w] + q[s.w + 1]);
            }
    }
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& gx = grad_of(self->parents[0].get());
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                T* g = gx.raw() + nc * s.plane();
                const T* dy = self->grad.raw() + static_cast<std::size_t>(nc) * oh * ow;
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                        const T v = T(0.25) * dy[y * ow + xx];
                        T* q = g + (2 * y) * s.w + 2 * xx;
                        q[0] += v;
                        q[1] += v;
                        q[s.w] += v;
                        q[s.w + 1] += v;
                    }
            }
        };
    });
}

template <class T>
Var<T> max_pool2(const Var<T>& x) {
    const Shape s = x.shape();
    const int oh = s.h / 2;
    const int ow = s.w / 2;
    if (oh == 0 || ow == 0) throw ShapeError("max_pool2: input too small " + s.str());
    Tensor<T> out(Shape{s.n, s.c, oh, ow});
    auto argmax = std::make_shared<std::vector<int>>(out.numel());
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const T* p = x.value().raw() + nc * s.plane();
        const std::size_t obase = static_cast<std::size_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const int cand[4] = {(2 * y) * s.w + 2 * xx, (2 * y) * s.w + 2 * xx + 1,
                                     (2 * y + 1) * s.w + 2 * xx, (2 * y + 1) * s.w + 2 * xx + 1};
                int best = cand[0];
                for (int j = 1; j < 4; ++j)
                    if (p[cand[j]] > p[best]) best = cand[j];
                out[obase + y * ow + xx] = p[best];
                (*argmax)[obase + y * ow + xx] = best;
            }
    }
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& gx = grad_of(self->parents[0].get());
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                const std::size_t obase = static_cast<std::size_t>(nc) * oh * ow;
                T* g = gx.raw() + nc * s.plane();
                for (int i = 0; i < oh * ow; ++i) g[(*argmax)[obase + i]] += self->grad[obase + i];
            }
        };
    });
}

template <class T>
Var<T> resize_nearest(const Var<T>& x, int height, int width) {
    const Shape s = x.shape();
    if (height <= 0 || width <= 0) throw ShapeError("resize_nearest: non-positive target size");
    auto src = std::make_shared<std::vector<int>>(static_cast<std::size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>(static_cast<long long>(y) * s.h / height);
        for (int xx = 0; xx < width; ++xx) {
            const int sx = static_cast<int>(static_cast<long long>(xx) * s.w / width);
            (*src)[y * width + xx] = sy * s.w + sx;
        }
    }
    const std::size_t oplane = static_cast<std::size_t>(height) * width;
    Tensor<T> out(Shape{s.n, s.c, height, width});
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        const T* p = x.value().raw() + nc * s.plane();
        T* o = out.raw() + nc * oplane;
        for (std::size_t i = 0; i < oplane; ++i) o[i] = p[(*src)[i]];
    }
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& gx = grad_of(self->parents[0].get());
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                T* g = gx.raw() + nc * s.plane();
                const T* dy = self->grad.raw() + nc * oplane;
                for (std::size_t i = 0; i < oplane; ++i) g[(*src)[i]] += dy[i];
            }
        };
    });
}

template <class T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
    return resize_nearest(x, x.shape().h * factor, x.shape().w * factor);
}

template <class T>
Tensor<T> resize_nearest(const Tensor<T>& x, int height, int width) {
    NoGradGuard guard;
    return resize_nearest(constant(x), height, width).value();
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape s0 = parts.front().shape();
    int channels = 0;
    for (const auto& p : parts) {
        const Shape s = p.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
            throw ShapeError("concat_channels: " + s.str() + " vs " + s0.str());
        }
        channels += s.c;
    }
    const std::size_t plane = s0.plane();
    Tensor<T> out(Shape{s0.n, channels, s0.h, s0.w});
    std::vector<int> offsets;
    int c0 = 0;
    for (const auto& p : parts) {
        offsets.push_back(c0);
        const int pc = p.shape().c;
        for (int n = 0; n < s0.n; ++n) {
            const T* src = p.value().raw() + static_cast<std::size_t>(n) * pc * plane;
            T* dst = out.raw() + (static_cast<std::size_t>(n) * channels + c0) * plane;
            std::copy(src, src + pc * plane, dst);
        }
        c0 += pc;
    }
    return make_result<T>(std::move(out), parts, [=](Node<T>* self) {
        return [=] {
            for (std::size_t k = 0; k < self->parents.size(); ++k) {
                Node<T>* p = self->parents[k].get();
                if (!wants(p)) continue;
                const int pc = p->value.shape().c;
                auto& g = grad_of(p);
                for (int n = 0; n < s0.n; ++n) {
                    const T* src = self->grad.raw() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane;
                    T* dst = g.raw() + static_cast<std::size_t>(n) * pc * plane;
                    for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
                }
            }
        };
    });
}

template <class T>
Var<T> slice_channels(const Var<T>& x, int begin, int end) {
    const Shape s = x.shape();
    if (begin < 0 || end > s.c || begin >= end) {
        throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + s.str());
    }
    const int oc = end - begin;
    const std::size_t plane = s.plane();
    Tensor<T> out(Shape{s.n, oc, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        const T* src = x.value().raw() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
        std::copy(src, src + oc * plane, out.raw() + static_cast<std::size_t>(n) * oc * plane);
    }
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& g = grad_of(self->parents[0].get());
            for (int n = 0; n < s.n; ++n) {
                T* dst = g.raw() + (static_cast<std::size_t>(n) * s.c + begin) * plane;
                const T* src = self->grad.raw() + static_cast<std::size_t>(n) * oc * plane;
                for (std::size_t i = 0; i < oc * plane; ++i) dst[i] += src[i];
            }
        };
    });
}

template <class T>
Var<T> slice_batch(const Var<T>& x, int begin, int end) {
    const Shape s = x.shape();
    if (begin < 0 || end > s.n || begin >= end) throw ShapeError("slice_batch: bad range for " + s.str());
    const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
    Tensor<T> out(Shape{end - begin, s.c, s.h, s.w});
    std::copy(x.value().raw() + begin * per, x.value().raw() + end * per, out.raw());
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& g = grad_of(self->parents[0].get());
            for (std::size_t i = 0; i < (end - begin) * per; ++i) g[begin * per + i] += self->grad[i];
        };
    });
}

template <class T>
Var<T> sum(const Var<T>& x) {
    double acc = 0;
    for (T v : x.value().data()) acc += v;
    Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
    return make_result<T>(std::move(out), {x}, [](Node<T>* self) {
        return [self] {
            auto& g = grad_of(self->parents[0].get());
            const T d = self->grad[0];
            for (auto& v : g.data()) v += d;
        };
    });
}

template <class T>
Var<T> mean(const Var<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

template <class T>
Var<T> mean_spatial(const Var<T>& x) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        double acc = 0;
        const T* p = x.value().raw() + nc * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        out[nc] = static_cast<T>(acc / plane);
    }
    return make_result<T>(std::move(out), {x}, [=](Node<T>* self) {
        return [=] {
            auto& g = grad_of(self->parents[0].get());
            for (int nc = 0; nc < s.n * s.c; ++nc) {
                const T d = self->grad[nc] / static_cast<T>(plane);
                for (std::size_t i = 0; i < plane; ++i) g[nc * plane + i] += d;
            }
        };
    });
}

template <class T>
Var<T> sse(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sse");
    double acc = 0;
    for (std::size_t i = 0; i < a.value().numel(); ++i) {
        const double d = static_cast<double>(a.value()[i]) - b.value()[i];
        acc += d * d;
    }
    Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
    return make_result<T>(std::move(out), {a, b}, [](Node<T>* self) {
        return [self] {
            Node<T>* pa = self->parents[0].get();
            Node<T>* pb = self->parents[1].get();
            const T g = self->grad[0];
            const std::size_t n = pa->value.numel();
            if (wants(pa)) {
                auto& ga = grad_of(pa);
                for (std::size_t i = 0; i < n; ++i) ga[i] += T(2) * g * (pa->value[i] - pb->value[i]);
            }
            if (wants(pb)) {
                auto& gb = grad_of(pb);
                for (std::size_t i = 0; i < n; ++i) gb[i] -= T(2) * g * (pa->value[i] - pb->value[i]);
            }
        };
    });
}

template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    return scale(sse(a, b), T(1) / static_cast<T>(a.value().numel()));
}

#define SIGAN_INSTANTIATE_OPS(T)                                                                                  \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> scale<T>(const Var<T>&, T);                                                                   \
    template Var<T> add_scalar<T>(const Var<T>&, T);                                                              \
    template Var<T> add_n<T>(const std::vector<Var<T>>&);                                                         \
    template Var<T> mul_mask<T>(const Var<T>&, const Tensor<T>&);                                                 \
    template Var<T> relu<T>(const Var<T>&);                                                                       \
    template Var<T> sigmoid<T>(const Var<T>&);                                                                    \
    template Var<T> softplus<T>(const Var<T>&);                                                                   \
    template Var<T> log_clamped<T>(const Var<T>&, T, T);                                                          \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&);                 \
    template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T,   \
                                  T);                                                                             \
    template Var<T> instance_norm<T>(const Var<T>&, T);                                                           \
    template Var<T> avg_pool2<T>(const Var<T>&);                                                                  \
    template Var<T> max_pool2<T>(const Var<T>&);                                                                  \
    template Var<T> upsample_nearest<T>(const Var<T>&, int);                                                      \
    template Var<T> resize_nearest<T>(const Var<T>&, int, int);                                                   \
    template Tensor<T> resize_nearest<T>(const Tensor<T>&, int, int);                                             \
    template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                               \
    template Var<T> slice_channels<T>(const Var<T>&, int, int);                                                   \
    template Var<T> slice_batch<T>(const Var<T>&, int, int);                                                      \
    template Var<T> sum<T>(const Var<T>&);                                                                        \
    template Var<T> mean<T>(const Var<T>&);                                                                       \
    template Var<T> mean_spatial<T>(const Var<T>&);                                                               \
    template Var<T> sse<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> mse<T>(const Var<T>&, const Var<T>&);

SIGAN_INSTANTIATE_OPS(float)
SIGAN_INSTANTIATE_OPS(double)

#undef SIGAN_INSTANTIATE_OPS

}  // namespace sigan::nn
