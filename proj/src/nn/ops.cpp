#include "usbone/nn/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "usbone/image.hpp"

namespace usbone::nn {
namespace {

bool track(Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
    if (!tape) return false;
    for (const auto* t : inputs) {
        if (*t && (*t)->requires_grad) return true;
    }
    return false;
}

void check(bool cond, const char* msg) {
    if (!cond) throw ArgumentError(msg);
}

// Lowers one sample's receptive fields into a [Ci*k*k, Ho*Wo] matrix.
void im2col(const double* x, int ci, int hh, int ww, int k, int stride, int pad, int ho, int wo,
            double* cols) {
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + (static_cast<size_t>(c) * k * k + ky * k + kx) *
                                         (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= hh) {
                        std::fill(row + static_cast<size_t>(oy) * wo,
                                  row + static_cast<size_t>(oy + 1) * wo, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<size_t>(c) * hh + iy) * ww;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        row[static_cast<size_t>(oy) * wo + ox] =
                            (ix >= 0 && ix < ww) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-adds a [Ci*k*k, Ho*Wo] matrix back onto the input gradient.
void col2im_add(const double* cols, int ci, int hh, int ww, int k, int stride, int pad, int ho,
                int wo, double* dx) {
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols + (static_cast<size_t>(c) * k * k + ky * k + kx) *
                                               (static_cast<size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= hh) continue;
                    double* dst = dx + (static_cast<size_t>(c) * hh + iy) * ww;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < ww) dst[ix] += row[static_cast<size_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

double grid_coord(int i, int n) { return n == 1 ? 0.0 : 2.0 * i / (n - 1.0) - 1.0; }

}  // namespace

TensorPtr conv2d(Tape* tape, const TensorPtr& x, const TensorPtr& wgt, const TensorPtr& bias,
                 int stride, int pad) {
    check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    check(wgt->h == wgt->w, "conv2d: square kernels only");
    check(wgt->c == x->c, "conv2d: channel mismatch");
    check(bias->c == wgt->n && bias->size() == static_cast<size_t>(wgt->n),
          "conv2d: bias shape mismatch");
    const int k = wgt->h;
    const int co = wgt->n, ci = x->c, hh = x->h, ww = x->w;
    const int ho = (hh + 2 * pad - k) / stride + 1;
    const int wo = (ww + 2 * pad - k) / stride + 1;
    check(ho > 0 && wo > 0, "conv2d: output would be empty");

    const bool tracked = track(tape, {&x, &wgt, &bias});
    auto y = Tensor::create(x->n, co, ho, wo, tracked);

    const size_t ckk = static_cast<size_t>(ci) * k * k;
    const size_t hw = static_cast<size_t>(ho) * wo;
    std::vector<double> cols(ckk * hw);
    for (int n = 0; n < x->n; ++n) {
        im2col(x->v.data() + static_cast<size_t>(n) * ci * hh * ww, ci, hh, ww, k, stride, pad, ho,
               wo, cols.data());
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, co, static_cast<int>(hw),
                    static_cast<int>(ckk), 1.0, wgt->v.data(), static_cast<int>(ckk), cols.data(),
                    static_cast<int>(hw), 0.0, y->v.data() + static_cast<size_t>(n) * co * hw,
                    static_cast<int>(hw));
        for (int oc = 0; oc < co; ++oc) {
            double* dst = y->v.data() + (static_cast<size_t>(n) * co + oc) * hw;
            const double b = bias->v[oc];
            for (size_t i = 0; i < hw; ++i) dst[i] += b;
        }
    }

    if (tracked) {
        tape->push([x, wgt, bias, y, k, stride, pad, ho, wo]() {
            const int co = wgt->n, ci = x->c, hh = x->h, ww = x->w;
            const size_t ckk = static_cast<size_t>(ci) * k * k;
            const size_t hw = static_cast<size_t>(ho) * wo;
            std::vector<double> cols(ckk * hw);
            std::vector<double> dcols(x->requires_grad ? ckk * hw : 0);
            for (int n = 0; n < x->n; ++n) {
                const double* dy = y->g.data() + static_cast<size_t>(n) * co * hw;
                if (wgt->requires_grad || x->requires_grad) {
                    im2col(x->v.data() + static_cast<size_t>(n) * ci * hh * ww, ci, hh, ww, k,
                           stride, pad, ho, wo, cols.data());
                }
                if (wgt->requires_grad) {
                    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, co,
                                static_cast<int>(ckk), static_cast<int>(hw), 1.0, dy,
                                static_cast<int>(hw), cols.data(), static_cast<int>(hw), 1.0,
                                wgt->g.data(), static_cast<int>(ckk));
                }
                if (bias->requires_grad) {
                    for (int oc = 0; oc < co; ++oc) {
                        const double* row = dy + static_cast<size_t>(oc) * hw;
                        double s = 0.0;
                        for (size_t i = 0; i < hw; ++i) s += row[i];
                        bias->g[oc] += s;
                    }
                }
                if (x->requires_grad) {
                    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(ckk),
                                static_cast<int>(hw), co, 1.0, wgt->v.data(),
                                static_cast<int>(ckk), dy, static_cast<int>(hw), 0.0,
                                dcols.data(), static_cast<int>(hw));
                    col2im_add(dcols.data(), ci, hh, ww, k, stride, pad, ho, wo,
                               x->g.data() + static_cast<size_t>(n) * ci * hh * ww);
                }
            }
        });
    }
    return y;
}

TensorPtr batchnorm(Tape* tape, const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                    const TensorPtr& run_mean, const TensorPtr& run_var, bool training,
                    double momentum, double eps) {
    const int C = x->c;
    check(gamma->size() == static_cast<size_t>(C) && beta->size() == static_cast<size_t>(C),
          "batchnorm: affine shape mismatch");
    check(run_mean->size() == static_cast<size_t>(C) && run_var->size() == static_cast<size_t>(C),
          "batchnorm: running-stat shape mismatch");

    const size_t plane = x->plane();
    const size_t cnt = static_cast<size_t>(x->n) * plane;
    const bool tracked = track(tape, {&x, &gamma, &beta});
    auto y = Tensor::create(x->n, C, x->h, x->w, tracked);

    std::vector<double> mean(C), invstd(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double m = 0.0;
            for (int n = 0; n < x->n; ++n) {
                const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * plane;
                for (size_t i = 0; i < plane; ++i) m += src[i];
            }
            m /= static_cast<double>(cnt);
            double var = 0.0;
            for (int n = 0; n < x->n; ++n) {
                const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * plane;
                for (size_t i = 0; i < plane; ++i) var += (src[i] - m) * (src[i] - m);
            }
            var /= static_cast<double>(cnt);
            mean[c] = m;
            invstd[c] = 1.0 / std::sqrt(var + eps);
            // Running update uses the unbiased variance, the standard
            // eval-time contract.
            const double unbiased = cnt > 1 ? var * static_cast<double>(cnt) / (cnt - 1.0) : var;
            run_mean->v[c] = (1.0 - momentum) * run_mean->v[c] + momentum * m;
            run_var->v[c] = (1.0 - momentum) * run_var->v[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = run_mean->v[c];
            invstd[c] = 1.0 / std::sqrt(run_var->v[c] + eps);
        }
    }

    for (int n = 0; n < x->n; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* src = x->v.data() + (static_cast<size_t>(n) * C + c) * plane;
            double* dst = y->v.data() + (static_cast<size_t>(n) * C + c) * plane;
            const double gm = gamma->v[c], bt = beta->v[c], m = mean[c], is = invstd[c];
            for (size_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) * is * gm + bt;
        }
    }

    if (tracked) {
        tape->push([x, gamma, beta, y, mean, invstd, training]() {
            const int C = x->c;
            const size_t plane = x->plane();
            const size_t cnt = static_cast<size_t>(x->n) * plane;
            for (int c = 0; c < C; ++c) {
                const double m = mean[c], is = invstd[c], gm = gamma->v[c];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int n = 0; n < x->n; ++n) {
                    const size_t off = (static_cast<size_t>(n) * C + c) * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        const double dy = y->g[off + i];
                        sum_dy += dy;
                        sum_dy_xhat += dy * (x->v[off + i] - m) * is;
                    }
                }
                if (gamma->requires_grad) gamma->g[c] += sum_dy_xhat;
                if (beta->requires_grad) beta->g[c] += sum_dy;
                if (!x->requires_grad) continue;
                for (int n = 0; n < x->n; ++n) {
                    const size_t off = (static_cast<size_t>(n) * C + c) * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        const double dy = y->g[off + i];
                        const double xhat = (x->v[off + i] - m) * is;
                        if (training) {
                            x->g[off + i] +=
                                gm * is *
                                (dy - sum_dy / static_cast<double>(cnt) -
                                 xhat * sum_dy_xhat / static_cast<double>(cnt));
                        } else {
                            x->g[off + i] += gm * is * dy;
                        }
                    }
                }
            }
        });
    }
    return y;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
    const bool tracked = track(tape, {&x});
    auto y = Tensor::create(x->n, x->c, x->h, x->w, tracked);
    for (size_t i = 0; i < x->size(); ++i) y->v[i] = x->v[i] > 0.0 ? x->v[i] : 0.0;
    if (tracked) {
        tape->push([x, y]() {
            for (size_t i = 0; i < x->size(); ++i) {
                if (x->v[i] > 0.0) x->g[i] += y->g[i];
            }
        });
    }
    return y;
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
    const bool tracked = track(tape, {&x});
    auto y = Tensor::create(x->n, x->c, x->h, x->w, tracked);
    for (size_t i = 0; i < x->size(); ++i) y->v[i] = 1.0 / (1.0 + std::exp(-x->v[i]));
    if (tracked) {
        tape->push([x, y]() {
            for (size_t i = 0; i < x->size(); ++i) {
                x->g[i] += y->g[i] * y->v[i] * (1.0 - y->v[i]);
            }
        });
    }
    return y;
}

TensorPtr upsample_nearest2x(Tape* tape, const TensorPtr& x) {
    const bool tracked = track(tape, {&x});
    auto y = Tensor::create(x->n, x->c, x->h * 2, x->w * 2, tracked);
    for (int n = 0; n < x->n; ++n) {
        for (int c = 0; c < x->c; ++c) {
            for (int r = 0; r < x->h; ++r) {
                for (int cc = 0; cc < x->w; ++cc) {
                    const double v = x->at(n, c, r, cc);
                    y->at(n, c, 2 * r, 2 * cc) = v;
                    y->at(n, c, 2 * r, 2 * cc + 1) = v;
                    y->at(n, c, 2 * r + 1, 2 * cc) = v;
                    y->at(n, c, 2 * r + 1, 2 * cc + 1) = v;
                }
            }
        }
    }
    if (tracked) {
        tape->push([x, y]() {
            for (int n = 0; n < x->n; ++n) {
                for (int c = 0; c < x->c; ++c) {
                    for (int r = 0; r < x->h; ++r) {
                        for (int cc = 0; cc < x->w; ++cc) {
                            const size_t base =
                                ((static_cast<size_t>(n) * y->c + c) * y->h + 2 * r) * y->w +
                                2 * cc;
                            x->g[((static_cast<size_t>(n) * x->c + c) * x->h + r) * x->w + cc] +=
                                y->g[base] + y->g[base + 1] + y->g[base + y->w] +
                                y->g[base + y->w + 1];
                        }
                    }
                }
            }
        });
    }
    return y;
}

TensorPtr spatial_softmax_coords(Tape* tape, const TensorPtr& x) {
    const int N = x->n, K = x->c, hh = x->h, ww = x->w;
    const bool tracked = track(tape, {&x});
    auto y = Tensor::create(N, K, 2, 1, tracked);
    auto probs = std::make_shared<std::vector<double>>(x->size());

    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            const size_t off = (static_cast<size_t>(n) * K + k) * hh * ww;
            double mx = x->v[off];
            for (size_t i = 1; i < static_cast<size_t>(hh) * ww; ++i) {
                mx = std::max(mx, x->v[off + i]);
            }
            double z = 0.0;
            for (size_t i = 0; i < static_cast<size_t>(hh) * ww; ++i) {
                const double e = std::exp(x->v[off + i] - mx);
                (*probs)[off + i] = e;
                z += e;
            }
            double row = 0.0, col = 0.0;
            for (int r = 0; r < hh; ++r) {
                for (int c = 0; c < ww; ++c) {
                    const double p = (*probs)[off + static_cast<size_t>(r) * ww + c] / z;
                    (*probs)[off + static_cast<size_t>(r) * ww + c] = p;
                    row += p * grid_coord(r, hh);
                    col += p * grid_coord(c, ww);
                }
            }
            y->v[(static_cast<size_t>(n) * K + k) * 2] = row;
            y->v[(static_cast<size_t>(n) * K + k) * 2 + 1] = col;
        }
    }

    if (tracked) {
        tape->push([x, y, probs]() {
            const int N = x->n, K = x->c, hh = x->h, ww = x->w;
            for (int n = 0; n < N; ++n) {
                for (int k = 0; k < K; ++k) {
                    const size_t off = (static_cast<size_t>(n) * K + k) * hh * ww;
                    const size_t co = (static_cast<size_t>(n) * K + k) * 2;
                    const double row = y->v[co], col = y->v[co + 1];
                    const double drow = y->g[co], dcol = y->g[co + 1];
                    for (int r = 0; r < hh; ++r) {
                        for (int c = 0; c < ww; ++c) {
                            const size_t i = off + static_cast<size_t>(r) * ww + c;
                            x->g[i] += (*probs)[i] * ((grid_coord(r, hh) - row) * drow +
                                                      (grid_coord(c, ww) - col) * dcol);
                        }
                    }
                }
            }
        });
    }
    return y;
}

TensorPtr render_gaussians(Tape* tape, const TensorPtr& coords, int h, int w, double sigma) {
    check(coords->h == 2 && coords->w == 1, "render_gaussians: coords must be [N,K,2,1]");
    const int N = coords->n, K = coords->c;
    const bool tracked = track(tape, {&coords});
    auto y = Tensor::create(N, K, h, w, tracked);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    for (int n = 0; n < N; ++n) {
        for (int k = 0; k < K; ++k) {
            const size_t co = (static_cast<size_t>(n) * K + k) * 2;
            const double cr = coords->v[co], cc = coords->v[co + 1];
            double* dst = y->v.data() + (static_cast<size_t>(n) * K + k) * h * w;
            for (int r = 0; r < h; ++r) {
                const double dr = grid_coord(r, h) - cr;
                for (int c = 0; c < w; ++c) {
                    const double dc = grid_coord(c, w) - cc;
                    dst[static_cast<size_t>(r) * w + c] =
                        std::exp(-(dr * dr + dc * dc) * inv2s2);
                }
            }
        }
    }

    if (tracked) {
        tape->push([coords, y, h, w, inv2s2]() {
            const int N = coords->n, K = coords->c;
            for (int n = 0; n < N; ++n) {
                for (int k = 0; k < K; ++k) {
                    const size_t co = (static_cast<size_t>(n) * K + k) * 2;
                    const double cr = coords->v[co], cc = coords->v[co + 1];
                    const double* val = y->v.data() + (static_cast<size_t>(n) * K + k) * h * w;
                    const double* dy = y->g.data() + (static_cast<size_t>(n) * K + k) * h * w;
                    double gr = 0.0, gc = 0.0;
                    for (int r = 0; r < h; ++r) {
                        const double dr = grid_coord(r, h) - cr;
                        for (int c = 0; c < w; ++c) {
                            const double dc = grid_coord(c, w) - cc;
                            const size_t i = static_cast<size_t>(r) * w + c;
                            gr += dy[i] * val[i] * dr * 2.0 * inv2s2;
                            gc += dy[i] * val[i] * dc * 2.0 * inv2s2;
                        }
                    }
                    coords->g[co] += gr;
                    coords->g[co + 1] += gc;
                }
            }
        });
    }
    return y;
}

TensorPtr combine_heatmaps(Tape* tape, const TensorPtr& heat) {
    const int N = heat->n, K = heat->c, hh = heat->h, ww = heat->w;
    const bool tracked = track(tape, {&heat});
    auto y = Tensor::create(N, 1, hh, ww, tracked);
    const size_t plane = static_cast<size_t>(hh) * ww;

    for (int n = 0; n < N; ++n) {
        for (size_t i = 0; i < plane; ++i) {
            double prod = 1.0;
            for (int k = 0; k < K; ++k) {
                prod *= 1.0 - heat->v[(static_cast<size_t>(n) * K + k) * plane + i];
            }
            y->v[static_cast<size_t>(n) * plane + i] = std::clamp(1.0 - prod, 0.0, 1.0);
        }
    }

    if (tracked) {
        tape->push([heat, y]() {
            const int N = heat->n, K = heat->c;
            const size_t plane = heat->plane();
            std::vector<double> pre(K + 1), suf(K + 1);
            for (int n = 0; n < N; ++n) {
                for (size_t i = 0; i < plane; ++i) {
                    const double dy = y->g[static_cast<size_t>(n) * plane + i];
                    if (dy == 0.0) continue;
                    pre[0] = 1.0;
                    for (int k = 0; k < K; ++k) {
                        pre[k + 1] =
                            pre[k] * (1.0 - heat->v[(static_cast<size_t>(n) * K + k) * plane + i]);
                    }
                    suf[K] = 1.0;
                    for (int k = K - 1; k >= 0; --k) {
                        suf[k] = suf[k + 1] *
                                 (1.0 - heat->v[(static_cast<size_t>(n) * K + k) * plane + i]);
                    }
                    for (int k = 0; k < K; ++k) {
                        heat->g[(static_cast<size_t>(n) * K + k) * plane + i] +=
                            dy * pre[k] * suf[k + 1];
                    }
                }
            }
        });
    }
    return y;
}

TensorPtr transport(Tape* tape, const TensorPtr& psi_s, const TensorPtr& psi_t,
                    const TensorPtr& h_s, const TensorPtr& h_t) {
    check(psi_s->n == psi_t->n && psi_s->c == psi_t->c && psi_s->h == psi_t->h &&
              psi_s->w == psi_t->w,
          "transport: feature shape mismatch");
    check(h_s->c == 1 && h_t->c == 1 && h_s->h == psi_s->h && h_s->w == psi_s->w &&
              h_t->h == psi_s->h && h_t->w == psi_s->w && h_s->n == psi_s->n &&
              h_t->n == psi_s->n,
          "transport: heatmap shape mismatch");

    const int N = psi_s->n, C = psi_s->c;
    const size_t plane = psi_s->plane();
    const bool tracked = track(tape, {&psi_t, &h_t});
    auto y = Tensor::create(N, C, psi_s->h, psi_s->w, tracked);

    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t off = (static_cast<size_t>(n) * C + c) * plane;
            const size_t hoff = static_cast<size_t>(n) * plane;
            for (size_t i = 0; i < plane; ++i) {
                const double hs = h_s->v[hoff + i], ht = h_t->v[hoff + i];
                y->v[off + i] =
                    (1.0 - hs) * (1.0 - ht) * psi_s->v[off + i] + ht * psi_t->v[off + i];
            }
        }
    }

    if (tracked) {
        tape->push([psi_s, psi_t, h_s, h_t, y]() {
            const int N = psi_s->n, C = psi_s->c;
            const size_t plane = psi_s->plane();
            for (int n = 0; n < N; ++n) {
                const size_t hoff = static_cast<size_t>(n) * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double hs = h_s->v[hoff + i], ht = h_t->v[hoff + i];
                    double dht = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const size_t off = (static_cast<size_t>(n) * C + c) * plane + i;
                        const double dy = y->g[off];
                        if (psi_t->requires_grad) psi_t->g[off] += dy * ht;
                        dht += dy * (psi_t->v[off] - (1.0 - hs) * psi_s->v[off]);
                    }
                    if (h_t->requires_grad) h_t->g[hoff + i] += dht;
                }
            }
        });
    }
    return y;
}

TensorPtr mse_loss(Tape* tape, const TensorPtr& pred, const TensorPtr& target) {
    check(pred->size() == target->size(), "mse_loss: shape mismatch");
    const bool tracked = track(tape, {&pred, &target});
    auto y = Tensor::create(1, 1, 1, 1, tracked);
    double acc = 0.0;
    for (size_t i = 0; i < pred->size(); ++i) {
        const double d = pred->v[i] - target->v[i];
        acc += d * d;
    }
    y->v[0] = acc / static_cast<double>(pred->size());

    if (tracked) {
        tape->push([pred, target, y]() {
            const double scale = 2.0 * y->g[0] / static_cast<double>(pred->size());
            for (size_t i = 0; i < pred->size(); ++i) {
                const double d = pred->v[i] - target->v[i];
                if (pred->requires_grad) pred->g[i] += scale * d;
                if (target->requires_grad) target->g[i] -= scale * d;
            }
        });
    }
    return y;
}

}  // namespace usbone::nn
