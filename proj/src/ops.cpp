#include "cgar/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>

namespace cgar {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;
using StoragePtr = std::shared_ptr<detail::Storage>;

MapM map2(std::vector<real>& v, int r, int c) { return MapM(v.data(), r, c); }
CMapM cmap2(const std::vector<real>& v, int r, int c) {
    return CMapM(v.data(), r, c);
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

void require_rank2(const Tensor& t, const char* op) {
    require(t.defined() && t.rank() == 2, std::string(op) + ": tensor must be rank 2");
}

// Records fn if the tape is live and any input is tracked; marks the output
// as produced on the tape so downstream ops keep recording.
template <typename Fn>
void record_op(Tensor& out, bool any_tracked, Fn&& fn) {
    if (!Tape::recording() || !any_tracked) return;
    Tape* tape = Tape::active();
    tape->record(std::forward<Fn>(fn));
    out.mark_produced(*tape);
}

const std::vector<real>* out_grad(Tape& t, const StoragePtr& os) {
    return t.grad_of(os.get());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.defined() && b.defined() && a.shape() == b.shape(),
            "add: shape mismatch " + (a.defined() ? shape_str(a.shape()) : "()") +
                " vs " + (b.defined() ? shape_str(b.shape()) : "()"));
    Tensor out = Tensor::from(a.shape(), std::vector<real>(a.values().begin(),
                                                           a.values().end()));
    auto ov = out.values();
    auto bv = b.values();
    for (long i = 0; i < out.size(); ++i) ov[i] += bv[i];

    const bool na = tracked(a), nb = tracked(b);
    record_op(out, na || nb,
              [as = a.storage(), bs = b.storage(), os = out.storage(), na, nb](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  if (na) {
                      auto& da = t.grad_acc(as);
                      for (std::size_t i = 0; i < g->size(); ++i) da[i] += (*g)[i];
                  }
                  if (nb) {
                      auto& db = t.grad_acc(bs);
                      for (std::size_t i = 0; i < g->size(); ++i) db[i] += (*g)[i];
                  }
              });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.defined() && b.defined() && a.shape() == b.shape(),
            "mul: shape mismatch");
    std::vector<real> v(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (long i = 0; i < a.size(); ++i) v[i] = av[i] * bv[i];
    Tensor out = Tensor::from(a.shape(), std::move(v));

    const bool na = tracked(a), nb = tracked(b);
    record_op(out, na || nb,
              [as = a.storage(), bs = b.storage(), os = out.storage(), na, nb](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  if (na) {
                      auto& da = t.grad_acc(as);
                      for (std::size_t i = 0; i < g->size(); ++i)
                          da[i] += (*g)[i] * bs->values[i];
                  }
                  if (nb) {
                      auto& db = t.grad_acc(bs);
                      for (std::size_t i = 0; i < g->size(); ++i)
                          db[i] += (*g)[i] * as->values[i];
                  }
              });
    return out;
}

Tensor scale(const Tensor& a, real c) {
    require(a.defined(), "scale: undefined tensor");
    std::vector<real> v(a.values().begin(), a.values().end());
    for (real& x : v) x *= c;
    Tensor out = Tensor::from(a.shape(), std::move(v));
    record_op(out, tracked(a), [as = a.storage(), os = out.storage(), c](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& da = t.grad_acc(as);
        for (std::size_t i = 0; i < g->size(); ++i) da[i] += c * (*g)[i];
    });
    return out;
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
    require_rank2(mat, "add_rowvec");
    require(vec.defined() && vec.size() == mat.cols(),
            "add_rowvec: vector length does not match matrix columns");
    const int m = mat.rows(), n = mat.cols();
    std::vector<real> v(mat.values().begin(), mat.values().end());
    auto bv = vec.values();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) v[static_cast<long>(r) * n + c] += bv[c];
    Tensor out = Tensor::from(mat.shape(), std::move(v));

    const bool nm = tracked(mat), nv = tracked(vec);
    record_op(out, nm || nv,
              [ms = mat.storage(), vs = vec.storage(), os = out.storage(), nm, nv, m,
               n](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  if (nm) {
                      auto& dm = t.grad_acc(ms);
                      for (std::size_t i = 0; i < g->size(); ++i) dm[i] += (*g)[i];
                  }
                  if (nv) {
                      auto& dv = t.grad_acc(vs);
                      for (int r = 0; r < m; ++r)
                          for (int c = 0; c < n; ++c)
                              dv[c] += (*g)[static_cast<long>(r) * n + c];
                  }
              });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    require(a.cols() == b.rows(), "matmul: inner dimensions disagree, " +
                                      shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    MapM(out.data(), m, n).noalias() =
        CMapM(a.data(), m, k) * CMapM(b.data(), k, n);

    const bool na = tracked(a), nb = tracked(b);
    record_op(out, na || nb,
              [as = a.storage(), bs = b.storage(), os = out.storage(), na, nb, m, k,
               n](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  CMapM gm(g->data(), m, n);
                  if (na) {
                      map2(t.grad_acc(as), m, k).noalias() +=
                          gm * cmap2(bs->values, k, n).transpose();
                  }
                  if (nb) {
                      map2(t.grad_acc(bs), k, n).noalias() +=
                          cmap2(as->values, m, k).transpose() * gm;
                  }
              });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    require(a.cols() == b.cols(), "matmul_nt: inner dimensions disagree, " +
                                      shape_str(a.shape()) + " x " +
                                      shape_str(b.shape()) + "^T");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out = Tensor::zeros({m, n});
    MapM(out.data(), m, n).noalias() =
        CMapM(a.data(), m, k) * CMapM(b.data(), n, k).transpose();

    const bool na = tracked(a), nb = tracked(b);
    record_op(out, na || nb,
              [as = a.storage(), bs = b.storage(), os = out.storage(), na, nb, m, k,
               n](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  CMapM gm(g->data(), m, n);
                  if (na) {
                      map2(t.grad_acc(as), m, k).noalias() +=
                          gm * cmap2(bs->values, n, k);
                  }
                  if (nb) {
                      map2(t.grad_acc(bs), n, k).noalias() +=
                          gm.transpose() * cmap2(as->values, m, k);
                  }
              });
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const int m = parts[0].rows();
    int total = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        require(p.rows() == m, "concat_cols: row counts disagree");
        total += p.cols();
    }
    Tensor out = Tensor::zeros({m, total});
    auto ov = out.values();
    int off = 0;
    bool any = false;
    for (const Tensor& p : parts) {
        const int n = p.cols();
        auto pv = p.values();
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c)
                ov[static_cast<long>(r) * total + off + c] = pv[static_cast<long>(r) * n + c];
        off += n;
        any = any || tracked(p);
    }

    struct Piece {
        StoragePtr s;
        int off, n;
        bool need;
    };
    std::vector<Piece> pieces;
    pieces.reserve(parts.size());
    off = 0;
    for (const Tensor& p : parts) {
        pieces.push_back({p.storage(), off, p.cols(), tracked(p)});
        off += p.cols();
    }
    record_op(out, any,
              [pieces = std::move(pieces), os = out.storage(), m, total](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  for (const auto& pc : pieces) {
                      if (!pc.need) continue;
                      auto& dp = t.grad_acc(pc.s);
                      for (int r = 0; r < m; ++r)
                          for (int c = 0; c < pc.n; ++c)
                              dp[static_cast<long>(r) * pc.n + c] +=
                                  (*g)[static_cast<long>(r) * total + pc.off + c];
                  }
              });
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_cols(std::span<const Tensor>(parts, 2));
}

Tensor concat_cols(const Tensor& a, const Tensor& b, const Tensor& c) {
    const Tensor parts[] = {a, b, c};
    return concat_cols(std::span<const Tensor>(parts, 3));
}

Tensor slice_cols(const Tensor& a, int col0, int width) {
    require_rank2(a, "slice_cols");
    require(col0 >= 0 && width > 0 && col0 + width <= a.cols(),
            "slice_cols: column range out of bounds");
    const int m = a.rows(), n = a.cols();
    std::vector<real> v(static_cast<long>(m) * width);
    auto av = a.values();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < width; ++c)
            v[static_cast<long>(r) * width + c] = av[static_cast<long>(r) * n + col0 + c];
    Tensor out = Tensor::from({m, width}, std::move(v));
    record_op(out, tracked(a),
              [as = a.storage(), os = out.storage(), m, n, col0, width](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  auto& da = t.grad_acc(as);
                  for (int r = 0; r < m; ++r)
                      for (int c = 0; c < width; ++c)
                          da[static_cast<long>(r) * n + col0 + c] +=
                              (*g)[static_cast<long>(r) * width + c];
              });
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    require(a.defined(), "reshape: undefined tensor");
    require(shape_numel(shape) == a.size(),
            "reshape: element count changes from " + shape_str(a.shape()) + " to " +
                shape_str(shape));
    Tensor out = Tensor::from(std::move(shape),
                              std::vector<real>(a.values().begin(), a.values().end()));
    record_op(out, tracked(a), [as = a.storage(), os = out.storage()](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& da = t.grad_acc(as);
        for (std::size_t i = 0; i < g->size(); ++i) da[i] += (*g)[i];
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank2(x, "layer_norm");
    const int m = x.rows(), n = x.cols();
    require(gamma.defined() && gamma.size() == n && beta.defined() && beta.size() == n,
            "layer_norm: gamma/beta length does not match features");

    std::vector<real> xhat(static_cast<long>(m) * n);
    std::vector<real> inv_std(m);
    std::vector<real> v(static_cast<long>(m) * n);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    for (int r = 0; r < m; ++r) {
        const real* row = &xv[static_cast<long>(r) * n];
        real mean = 0;
        for (int c = 0; c < n; ++c) mean += row[c];
        mean /= n;
        real var = 0;
        for (int c = 0; c < n; ++c) {
            real d = row[c] - mean;
            var += d * d;
        }
        var /= n;
        const real is = real(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int c = 0; c < n; ++c) {
            real h = (row[c] - mean) * is;
            xhat[static_cast<long>(r) * n + c] = h;
            v[static_cast<long>(r) * n + c] = gv[c] * h + bv[c];
        }
    }
    Tensor out = Tensor::from(x.shape(), std::move(v));

    const bool nx = tracked(x), ng = tracked(gamma), nb = tracked(beta);
    record_op(out, nx || ng || nb,
              [xs = x.storage(), gs = gamma.storage(), bs = beta.storage(),
               os = out.storage(), xhat = std::move(xhat), inv_std = std::move(inv_std),
               nx, ng, nb, m, n](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  std::vector<real>* dx = nx ? &t.grad_acc(xs) : nullptr;
                  std::vector<real>* dg = ng ? &t.grad_acc(gs) : nullptr;
                  std::vector<real>* db = nb ? &t.grad_acc(bs) : nullptr;
                  for (int r = 0; r < m; ++r) {
                      const real* grow = &(*g)[static_cast<long>(r) * n];
                      const real* hrow = &xhat[static_cast<long>(r) * n];
                      if (dg)
                          for (int c = 0; c < n; ++c) (*dg)[c] += grow[c] * hrow[c];
                      if (db)
                          for (int c = 0; c < n; ++c) (*db)[c] += grow[c];
                      if (dx) {
                          // dxhat = g * gamma; dx = inv_std * (dxhat
                          // - mean(dxhat) - xhat * mean(dxhat * xhat))
                          real m1 = 0, m2 = 0;
                          for (int c = 0; c < n; ++c) {
                              real dh = grow[c] * gs->values[c];
                              m1 += dh;
                              m2 += dh * hrow[c];
                          }
                          m1 /= n;
                          m2 /= n;
                          real* dxrow = &(*dx)[static_cast<long>(r) * n];
                          for (int c = 0; c < n; ++c) {
                              real dh = grow[c] * gs->values[c];
                              dxrow[c] += inv_std[r] * (dh - m1 - hrow[c] * m2);
                          }
                      }
                  }
              });
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    std::vector<real> v(static_cast<long>(m) * n);
    auto xv = x.values();
    for (int r = 0; r < m; ++r) {
        const real* row = &xv[static_cast<long>(r) * n];
        real mx = row[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, row[c]);
        real z = 0;
        for (int c = 0; c < n; ++c) {
            real e = std::exp(row[c] - mx);
            v[static_cast<long>(r) * n + c] = e;
            z += e;
        }
        for (int c = 0; c < n; ++c) v[static_cast<long>(r) * n + c] /= z;
    }
    Tensor out = Tensor::from(x.shape(), std::move(v));
    record_op(out, tracked(x), [xs = x.storage(), os = out.storage(), m, n](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& dx = t.grad_acc(xs);
        for (int r = 0; r < m; ++r) {
            const real* grow = &(*g)[static_cast<long>(r) * n];
            const real* yrow = &os->values[static_cast<long>(r) * n];
            real dot = 0;
            for (int c = 0; c < n; ++c) dot += grow[c] * yrow[c];
            real* dxrow = &dx[static_cast<long>(r) * n];
            for (int c = 0; c < n; ++c) dxrow[c] += yrow[c] * (grow[c] - dot);
        }
    });
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

Tensor gelu(const Tensor& x) {
    require(x.defined(), "gelu: undefined tensor");
    std::vector<real> v(x.size());
    auto xv = x.values();
    for (long i = 0; i < x.size(); ++i) {
        double xi = static_cast<double>(xv[i]);
        v[i] = static_cast<real>(xi * 0.5 * (1.0 + std::erf(xi * kInvSqrt2)));
    }
    Tensor out = Tensor::from(x.shape(), std::move(v));
    record_op(out, tracked(x), [xs = x.storage(), os = out.storage()](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& dx = t.grad_acc(xs);
        for (std::size_t i = 0; i < g->size(); ++i) {
            double xi = static_cast<double>(xs->values[i]);
            double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
            dx[i] += (*g)[i] * static_cast<real>(cdf + xi * pdf);
        }
    });
    return out;
}

Tensor sigmoid(const Tensor& x) {
    require(x.defined(), "sigmoid: undefined tensor");
    std::vector<real> v(x.size());
    auto xv = x.values();
    for (long i = 0; i < x.size(); ++i) {
        double xi = static_cast<double>(xv[i]);
        double s = xi >= 0 ? 1.0 / (1.0 + std::exp(-xi))
                           : std::exp(xi) / (1.0 + std::exp(xi));
        v[i] = static_cast<real>(s);
    }
    Tensor out = Tensor::from(x.shape(), std::move(v));
    record_op(out, tracked(x), [xs = x.storage(), os = out.storage()](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& dx = t.grad_acc(xs);
        for (std::size_t i = 0; i < g->size(); ++i) {
            real s = os->values[i];
            dx[i] += (*g)[i] * s * (real(1) - s);
        }
    });
    return out;
}

Tensor log_elem(const Tensor& x) {
    require(x.defined(), "log_elem: undefined tensor");
    std::vector<real> v(x.size());
    auto xv = x.values();
    for (long i = 0; i < x.size(); ++i) {
        require(xv[i] > 0, "log_elem: input must be strictly positive");
        v[i] = std::log(xv[i]);
    }
    Tensor out = Tensor::from(x.shape(), std::move(v));
    record_op(out, tracked(x), [xs = x.storage(), os = out.storage()](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& dx = t.grad_acc(xs);
        for (std::size_t i = 0; i < g->size(); ++i) dx[i] += (*g)[i] / xs->values[i];
    });
    return out;
}

Tensor sum(const Tensor& x) {
    require(x.defined(), "sum: undefined tensor");
    real s = 0;
    for (real v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    record_op(out, tracked(x), [xs = x.storage(), os = out.storage()](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        auto& dx = t.grad_acc(xs);
        for (real& d : dx) d += (*g)[0];
    });
    return out;
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets) {
    require_rank2(logits, "cross_entropy_sum");
    const int m = logits.rows(), n = logits.cols();
    require(static_cast<int>(targets.size()) == m,
            "cross_entropy_sum: target count does not match rows");
    for (int t : targets)
        require(t >= 0 && t < n, "cross_entropy_sum: target out of range [0, V)");

    std::vector<real> probs(static_cast<long>(m) * n);
    auto lv = logits.values();
    double loss = 0;
    for (int r = 0; r < m; ++r) {
        const real* row = &lv[static_cast<long>(r) * n];
        real mx = row[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, row[c]);
        double z = 0;
        for (int c = 0; c < n; ++c) {
            double e = std::exp(static_cast<double>(row[c] - mx));
            probs[static_cast<long>(r) * n + c] = static_cast<real>(e);
            z += e;
        }
        for (int c = 0; c < n; ++c)
            probs[static_cast<long>(r) * n + c] /= static_cast<real>(z);
        loss += std::log(z) + static_cast<double>(mx) -
                static_cast<double>(row[targets[r]]);
    }
    Tensor out = Tensor::scalar(static_cast<real>(loss));
    record_op(out, tracked(logits),
              [ls = logits.storage(), os = out.storage(), probs = std::move(probs),
               tg = std::vector<int>(targets.begin(), targets.end()), m, n](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  const real up = (*g)[0];
                  auto& dl = t.grad_acc(ls);
                  for (int r = 0; r < m; ++r)
                      for (int c = 0; c < n; ++c) {
                          real p = probs[static_cast<long>(r) * n + c];
                          dl[static_cast<long>(r) * n + c] +=
                              up * (p - (c == tg[r] ? real(1) : real(0)));
                      }
              });
    return out;
}

Tensor bce_mean(const Tensor& q, bool target) {
    require(q.defined() && q.size() > 0, "bce_mean: empty input");
    constexpr real kEps = real(1e-12);
    const long n = q.size();
    auto qv = q.values();
    double loss = 0;
    for (long i = 0; i < n; ++i) {
        real p = target ? qv[i] : real(1) - qv[i];
        loss -= std::log(static_cast<double>(std::max(p, kEps)));
    }
    Tensor out = Tensor::scalar(static_cast<real>(loss / static_cast<double>(n)));
    record_op(out, tracked(q), [qs = q.storage(), os = out.storage(), target, n](Tape& t) {
        const auto* g = out_grad(t, os);
        if (!g) return;
        const real up = (*g)[0] / static_cast<real>(n);
        auto& dq = t.grad_acc(qs);
        for (long i = 0; i < n; ++i) {
            real qi = qs->values[i];
            if (target) {
                if (qi > kEps) dq[i] -= up / qi;
            } else {
                if (real(1) - qi > kEps) dq[i] += up / (real(1) - qi);
            }
        }
    });
    return out;
}

Tensor embed_rows(const Tensor& table, std::span<const int> indices) {
    require_rank2(table, "embed_rows");
    const int v = table.rows(), d = table.cols();
    for (int i : indices)
        require(i >= 0 && i < v, "embed_rows: index out of range [0, V)");
    const int m = static_cast<int>(indices.size());
    std::vector<real> out_v(static_cast<long>(m) * d);
    auto tv = table.values();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < d; ++c)
            out_v[static_cast<long>(r) * d + c] =
                tv[static_cast<long>(indices[r]) * d + c];
    Tensor out = Tensor::from({m, d}, std::move(out_v));
    record_op(out, tracked(table),
              [ts = table.storage(), os = out.storage(),
               idx = std::vector<int>(indices.begin(), indices.end()), d](Tape& t) {
                  const auto* g = out_grad(t, os);
                  if (!g) return;
                  auto& dt = t.grad_acc(ts);
                  for (std::size_t r = 0; r < idx.size(); ++r)
                      for (int c = 0; c < d; ++c)
                          dt[static_cast<long>(idx[r]) * d + c] +=
                              (*g)[static_cast<long>(r) * d + c];
              });
    return out;
}

std::vector<int> argmax_rows(const Tensor& x) {
    require_rank2(x, "argmax_rows");
    const int m = x.rows(), n = x.cols();
    std::vector<int> out(m);
    auto xv = x.values();
    for (int r = 0; r < m; ++r) {
        const real* row = &xv[static_cast<long>(r) * n];
        int best = 0;
        for (int c = 1; c < n; ++c)
            if (row[c] > row[best]) best = c;
        out[r] = best;
    }
    return out;
}

}  // namespace cgar
