#pragma once

#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unblur/kernels.hpp"
#include "unblur/tensor.hpp"

namespace unblur {

// Named model parameter. `trainable` is set per training phase; frozen
// parameters enter the tape as constants and receive no gradient.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    bool trainable = false;
};

template <typename T>
inline void vec_acc(T* y, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}
template <>
inline void vec_acc<float>(float* y, const float* x, std::size_t n) {
    kernels::ops().axpy(1.0f, x, y, n);
}

// Define-by-run tape. Ops evaluate eagerly; backward closures are recorded
// only while `recording` and only for nodes that can reach a parameter.
template <typename T>
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void()> back;
    };

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }
    Tensor<T>& val(int id) { return nodes_[static_cast<std::size_t>(id)].val; }
    const Tensor<T>& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    Tensor<T>& grad(int id) { return ensure_grad(id); }
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

    int input(Tensor<T> v) { return push(std::move(v), false); }

    int param(Param<T>& p) {
        auto it = param_ids_.find(p.value.data.get());
        if (it != param_ids_.end()) return it->second;
        int id = push(p.value, recording_ && p.trainable);
        param_ids_.emplace(p.value.data.get(), id);
        return id;
    }

    // Gradient of a parameter after backward(); empty tensor when the
    // parameter was frozen or unused.
    Tensor<T> param_grad(const Param<T>& p) const {
        auto it = param_ids_.find(p.value.data.get());
        if (it == param_ids_.end()) return {};
        return nodes_[static_cast<std::size_t>(it->second)].grad;
    }

    // ---- elementwise ----

    int add(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (!same_shape(va, vb)) throw ArgumentError("add: shape mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
        Tensor<T> y(va.shape);
        vadd(va.ptr(), vb.ptr(), y.ptr(), y.numel());
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b] {
            const Tensor<T>& dy = nodes_[id].grad;
            if (needs(a)) vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
            if (needs(b)) vec_acc(ensure_grad(b).ptr(), dy.ptr(), dy.numel());
        });
        return id;
    }

    int sub(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (!same_shape(va, vb)) throw ArgumentError("sub: shape mismatch");
        Tensor<T> y(va.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] - vb[i];
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b] {
            const Tensor<T>& dy = nodes_[id].grad;
            if (needs(a)) vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
            if (needs(b)) {
                Tensor<T>& gb = ensure_grad(b);
                for (std::size_t i = 0; i < dy.numel(); ++i) gb[i] -= dy[i];
            }
        });
        return id;
    }

    int mul(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (!same_shape(va, vb)) throw ArgumentError("mul: shape mismatch");
        Tensor<T> y(va.shape);
        vmul(va.ptr(), vb.ptr(), y.ptr(), y.numel());
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b] {
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& va = nodes_[a].val;
            const Tensor<T>& vb = nodes_[b].val;
            if (needs(a)) {
                Tensor<T>& ga = ensure_grad(a);
                for (std::size_t i = 0; i < dy.numel(); ++i) ga[i] += dy[i] * vb[i];
            }
            if (needs(b)) {
                Tensor<T>& gb = ensure_grad(b);
                for (std::size_t i = 0; i < dy.numel(); ++i) gb[i] += dy[i] * va[i];
            }
        });
        return id;
    }

    int scale(int a, T s) {
        const Tensor<T>& va = val(a);
        Tensor<T> y(va.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] * s;
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, s] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& ga = ensure_grad(a);
            for (std::size_t i = 0; i < dy.numel(); ++i) ga[i] += s * dy[i];
        });
        return id;
    }

    int add_const(int a, T c) {
        const Tensor<T>& va = val(a);
        Tensor<T> y(va.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] + c;
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
        });
        return id;
    }

    int silu(int a) {
        const Tensor<T>& va = val(a);
        Tensor<T> y(va.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] * kernels::sigmoid(va[i]);
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& x = nodes_[a].val;
            Tensor<T>& ga = ensure_grad(a);
            for (std::size_t i = 0; i < dy.numel(); ++i) {
                T s = kernels::sigmoid(x[i]);
                ga[i] += dy[i] * s * (T(1) + x[i] * (T(1) - s));
            }
        });
        return id;
    }

    int exp(int a) {
        const Tensor<T>& va = val(a);
        Tensor<T> y(va.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::exp(va[i]);
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& yv = nodes_[id].val;
            Tensor<T>& ga = ensure_grad(a);
            for (std::size_t i = 0; i < dy.numel(); ++i) ga[i] += dy[i] * yv[i];
        });
        return id;
    }

    // ---- broadcast / shape ----

    // y[..., c] = x[..., c] + b[c]
    int add_bias(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int C = va.shape.back();
        if (vb.numel() != static_cast<std::size_t>(C)) throw ArgumentError("add_bias: channel mismatch");
        Tensor<T> y(va.shape);
        std::size_t rows = va.numel() / static_cast<std::size_t>(C);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* x = va.ptr() + r * C;
            T* o = y.ptr() + r * C;
            for (int c = 0; c < C; ++c) o[c] = x[c] + vb[static_cast<std::size_t>(c)];
        }
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, C] {
            const Tensor<T>& dy = nodes_[id].grad;
            std::size_t rows = dy.numel() / static_cast<std::size_t>(C);
            if (needs(a)) vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
            if (needs(b)) {
                Tensor<T>& gb = ensure_grad(b);
                for (std::size_t r = 0; r < rows; ++r) {
                    const T* d = dy.ptr() + r * C;
                    for (int c = 0; c < C; ++c) gb[static_cast<std::size_t>(c)] += d[c];
                }
            }
        });
        return id;
    }

    // x [B, S, C] + v [B, C] broadcast over S (per-sample vector, e.g. time embedding)
    int add_rows(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int B = va.shape.front();
        int C = va.shape.back();
        if (vb.rank() != 2 || vb.dim(0) != B || vb.dim(1) != C) throw ArgumentError("add_rows: shape mismatch");
        std::size_t S = va.numel() / (static_cast<std::size_t>(B) * C);
        Tensor<T> y(va.shape);
        for (int bb = 0; bb < B; ++bb) {
            const T* v = vb.ptr() + static_cast<std::size_t>(bb) * C;
            for (std::size_t s = 0; s < S; ++s) {
                std::size_t off = (static_cast<std::size_t>(bb) * S + s) * C;
                for (int c = 0; c < C; ++c) y[off + c] = va[off + c] + v[c];
            }
        }
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, B, C, S] {
            const Tensor<T>& dy = nodes_[id].grad;
            if (needs(a)) vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
            if (needs(b)) {
                Tensor<T>& gb = ensure_grad(b);
                for (int bb = 0; bb < B; ++bb) {
                    T* g = gb.ptr() + static_cast<std::size_t>(bb) * C;
                    for (std::size_t s = 0; s < S; ++s) {
                        const T* d = dy.ptr() + (static_cast<std::size_t>(bb) * S + s) * C;
                        for (int c = 0; c < C; ++c) g[c] += d[c];
                    }
                }
            }
        });
        return id;
    }

    // x [N, C] replicated to [B, N, C]
    int broadcast0(int a, int B) {
        const Tensor<T>& va = val(a);
        std::vector<int> shp = {B};
        for (int d : va.shape) shp.push_back(d);
        Tensor<T> y(shp);
        std::size_t n = va.numel();
        for (int bb = 0; bb < B; ++bb) std::copy(va.ptr(), va.ptr() + n, y.ptr() + static_cast<std::size_t>(bb) * n);
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, B] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& ga = ensure_grad(a);
            std::size_t n = ga.numel();
            for (int bb = 0; bb < B; ++bb) vec_acc(ga.ptr(), dy.ptr() + static_cast<std::size_t>(bb) * n, n);
        });
        return id;
    }

    int reshape(int a, std::vector<int> shp) {
        Tensor<T> y = val(a).reshaped(std::move(shp));
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            vec_acc(ensure_grad(a).ptr(), dy.ptr(), dy.numel());
        });
        return id;
    }

    // concat along dim 1 of [B, N, C]
    int concat_mid(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.rank() != 3 || vb.rank() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(2))
            throw ArgumentError("concat_mid: shape mismatch");
        int B = va.dim(0), Na = va.dim(1), Nb = vb.dim(1), C = va.dim(2);
        Tensor<T> y({B, Na + Nb, C});
        for (int bb = 0; bb < B; ++bb) {
            std::copy(va.ptr() + static_cast<std::size_t>(bb) * Na * C, va.ptr() + static_cast<std::size_t>(bb + 1) * Na * C,
                      y.ptr() + static_cast<std::size_t>(bb) * (Na + Nb) * C);
            std::copy(vb.ptr() + static_cast<std::size_t>(bb) * Nb * C, vb.ptr() + static_cast<std::size_t>(bb + 1) * Nb * C,
                      y.ptr() + static_cast<std::size_t>(bb) * (Na + Nb) * C + static_cast<std::size_t>(Na) * C);
        }
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, B, Na, Nb, C] {
            const Tensor<T>& dy = nodes_[id].grad;
            for (int bb = 0; bb < B; ++bb) {
                const T* d = dy.ptr() + static_cast<std::size_t>(bb) * (Na + Nb) * C;
                if (needs(a)) vec_acc(ensure_grad(a).ptr() + static_cast<std::size_t>(bb) * Na * C, d, static_cast<std::size_t>(Na) * C);
                if (needs(b)) vec_acc(ensure_grad(b).ptr() + static_cast<std::size_t>(bb) * Nb * C, d + static_cast<std::size_t>(Na) * C, static_cast<std::size_t>(Nb) * C);
            }
        });
        return id;
    }

    // concat along the last dim: [..., C1] + [..., C2] -> [..., C1+C2]
    int concat_last(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int C1 = va.shape.back(), C2 = vb.shape.back();
        std::size_t rows = va.numel() / static_cast<std::size_t>(C1);
        if (vb.numel() / static_cast<std::size_t>(C2) != rows) throw ArgumentError("concat_last: row mismatch");
        std::vector<int> shp = va.shape;
        shp.back() = C1 + C2;
        Tensor<T> y(shp);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(va.ptr() + r * C1, va.ptr() + (r + 1) * C1, y.ptr() + r * (C1 + C2));
            std::copy(vb.ptr() + r * C2, vb.ptr() + (r + 1) * C2, y.ptr() + r * (C1 + C2) + C1);
        }
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, C1, C2] {
            const Tensor<T>& dy = nodes_[id].grad;
            std::size_t rows = dy.numel() / static_cast<std::size_t>(C1 + C2);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* d = dy.ptr() + r * (C1 + C2);
                if (needs(a)) vec_acc(ensure_grad(a).ptr() + r * C1, d, static_cast<std::size_t>(C1));
                if (needs(b)) vec_acc(ensure_grad(b).ptr() + r * C2, d + C1, static_cast<std::size_t>(C2));
            }
        });
        return id;
    }

    // rows n0..n1 of dim 1 of [B, N, C]
    int slice_mid(int a, int n0, int n1) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 3 || n0 < 0 || n1 > va.dim(1) || n0 >= n1) throw ArgumentError("slice_mid: bad range");
        int B = va.dim(0), N = va.dim(1), C = va.dim(2), M = n1 - n0;
        Tensor<T> y({B, M, C});
        for (int bb = 0; bb < B; ++bb)
            std::copy(va.ptr() + (static_cast<std::size_t>(bb) * N + n0) * C,
                      va.ptr() + (static_cast<std::size_t>(bb) * N + n1) * C,
                      y.ptr() + static_cast<std::size_t>(bb) * M * C);
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, B, N, C, n0, M] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& ga = ensure_grad(a);
            for (int bb = 0; bb < B; ++bb)
                vec_acc(ga.ptr() + (static_cast<std::size_t>(bb) * N + n0) * C,
                        dy.ptr() + static_cast<std::size_t>(bb) * M * C, static_cast<std::size_t>(M) * C);
        });
        return id;
    }

    // channels c0..c1 of the last dim
    int slice_last(int a, int c0, int c1) {
        const Tensor<T>& va = val(a);
        int C = va.shape.back();
        if (c0 < 0 || c1 > C || c0 >= c1) throw ArgumentError("slice_last: bad range");
        std::vector<int> shp = va.shape;
        shp.back() = c1 - c0;
        Tensor<T> y(shp);
        std::size_t rows = va.numel() / static_cast<std::size_t>(C);
        int M = c1 - c0;
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(va.ptr() + r * C + c0, va.ptr() + r * C + c1, y.ptr() + r * M);
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, C, c0, M] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& ga = ensure_grad(a);
            std::size_t rows = dy.numel() / static_cast<std::size_t>(M);
            for (std::size_t r = 0; r < rows; ++r)
                for (int c = 0; c < M; ++c) ga[r * C + c0 + c] += dy[r * M + c];
        });
        return id;
    }

    // table [V, C] gathered by constant row indices
    int gather_rows(int table, std::vector<int> ids) {
        const Tensor<T>& vt = val(table);
        int C = vt.dim(1);
        Tensor<T> y({static_cast<int>(ids.size()), C});
        for (std::size_t i = 0; i < ids.size(); ++i)
            std::copy(vt.ptr() + static_cast<std::size_t>(ids[i]) * C, vt.ptr() + static_cast<std::size_t>(ids[i] + 1) * C,
                      y.ptr() + i * C);
        int id = push(std::move(y), needs(table));
        record(id, [this, id, table, ids = std::move(ids), C] {
            if (!needs(table)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& gt = ensure_grad(table);
            for (std::size_t i = 0; i < ids.size(); ++i)
                vec_acc(gt.ptr() + static_cast<std::size_t>(ids[i]) * C, dy.ptr() + i * C, static_cast<std::size_t>(C));
        });
        return id;
    }

    // ---- linear algebra ----

    // a [..., K] x w [K, N] -> [..., N]
    int matmul(int a, int w) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vw = val(w);
        int K = va.shape.back();
        if (vw.rank() != 2 || vw.dim(0) != K) throw ArgumentError("matmul: inner dim mismatch");
        int N = vw.dim(1);
        int R = static_cast<int>(va.numel() / static_cast<std::size_t>(K));
        std::vector<int> shp = va.shape;
        shp.back() = N;
        Tensor<T> y(shp);
        kernels::gemm_nn(va.ptr(), vw.ptr(), y.ptr(), R, N, K, false);
        int id = push(std::move(y), needs(a) || needs(w));
        record(id, [this, id, a, w, R, N, K] {
            const Tensor<T>& dy = nodes_[id].grad;
            if (needs(a))
                kernels::gemm_nt(dy.ptr(), nodes_[w].val.ptr(), ensure_grad(a).ptr(), R, K, N, true, T(1));
            if (needs(w))
                kernels::gemm_tn(nodes_[a].val.ptr(), dy.ptr(), ensure_grad(w).ptr(), R, N, K, true);
        });
        return id;
    }

    // a [..., K] x b [N, K]^T -> [..., N], scaled by alpha (shared second operand)
    int matmul_nt(int a, int b, T alpha = T(1)) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        int K = va.shape.back();
        if (vb.rank() != 2 || vb.dim(1) != K) throw ArgumentError("matmul_nt: inner dim mismatch");
        int N = vb.dim(0);
        int R = static_cast<int>(va.numel() / static_cast<std::size_t>(K));
        std::vector<int> shp = va.shape;
        shp.back() = N;
        Tensor<T> y(shp);
        kernels::gemm_nt(va.ptr(), vb.ptr(), y.ptr(), R, N, K, false, alpha);
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, R, N, K, alpha] {
            Tensor<T> dy = nodes_[id].grad;
            if (alpha != T(1)) {
                dy = dy.clone();
                for (std::size_t i = 0; i < dy.numel(); ++i) dy[i] *= alpha;
            }
            if (needs(a))
                kernels::gemm_nn(dy.ptr(), nodes_[b].val.ptr(), ensure_grad(a).ptr(), R, K, N, true);
            if (needs(b))
                kernels::gemm_tn(dy.ptr(), nodes_[a].val.ptr(), ensure_grad(b).ptr(), R, K, N, true);
        });
        return id;
    }

    // batched scores: a [B, M, K] x b [B, N, K]^T -> [B, M, N]
    int bmm_nt(int a, int b, T alpha = T(1)) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.rank() != 3 || vb.rank() != 3 || va.dim(0) != vb.dim(0) || va.dim(2) != vb.dim(2))
            throw ArgumentError("bmm_nt: shape mismatch");
        int B = va.dim(0), M = va.dim(1), N = vb.dim(1), K = va.dim(2);
        Tensor<T> y({B, M, N});
        for (int bb = 0; bb < B; ++bb)
            kernels::gemm_nt(va.ptr() + static_cast<std::size_t>(bb) * M * K, vb.ptr() + static_cast<std::size_t>(bb) * N * K,
                             y.ptr() + static_cast<std::size_t>(bb) * M * N, M, N, K, false, alpha);
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, B, M, N, K, alpha] {
            const Tensor<T>& dyt = nodes_[id].grad;
            for (int bb = 0; bb < B; ++bb) {
                const T* dy = dyt.ptr() + static_cast<std::size_t>(bb) * M * N;
                Tensor<T> dys({M, N});
                for (std::size_t i = 0; i < dys.numel(); ++i) dys[i] = dy[i] * alpha;
                if (needs(a))
                    kernels::gemm_nn(dys.ptr(), nodes_[b].val.ptr() + static_cast<std::size_t>(bb) * N * K,
                                     ensure_grad(a).ptr() + static_cast<std::size_t>(bb) * M * K, M, K, N, true);
                if (needs(b))
                    kernels::gemm_tn(dys.ptr(), nodes_[a].val.ptr() + static_cast<std::size_t>(bb) * M * K,
                                     ensure_grad(b).ptr() + static_cast<std::size_t>(bb) * N * K, M, K, N, true);
            }
        });
        return id;
    }

    // batched combine: a [B, M, N] x v [B, N, K] -> [B, M, K]
    int bmm_nn(int a, int v) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vv = val(v);
        if (va.rank() != 3 || vv.rank() != 3 || va.dim(0) != vv.dim(0) || va.dim(2) != vv.dim(1))
            throw ArgumentError("bmm_nn: shape mismatch");
        int B = va.dim(0), M = va.dim(1), N = va.dim(2), K = vv.dim(2);
        Tensor<T> y({B, M, K});
        for (int bb = 0; bb < B; ++bb)
            kernels::gemm_nn(va.ptr() + static_cast<std::size_t>(bb) * M * N, vv.ptr() + static_cast<std::size_t>(bb) * N * K,
                             y.ptr() + static_cast<std::size_t>(bb) * M * K, M, K, N, false);
        int id = push(std::move(y), needs(a) || needs(v));
        record(id, [this, id, a, v, B, M, N, K] {
            const Tensor<T>& dyt = nodes_[id].grad;
            for (int bb = 0; bb < B; ++bb) {
                const T* dy = dyt.ptr() + static_cast<std::size_t>(bb) * M * K;
                if (needs(a))
                    kernels::gemm_nt(dy, nodes_[v].val.ptr() + static_cast<std::size_t>(bb) * N * K,
                                     ensure_grad(a).ptr() + static_cast<std::size_t>(bb) * M * N, M, N, K, true, T(1));
                if (needs(v))
                    kernels::gemm_tn(nodes_[a].val.ptr() + static_cast<std::size_t>(bb) * M * N, dy,
                                     ensure_grad(v).ptr() + static_cast<std::size_t>(bb) * N * K, M, K, N, true);
            }
        });
        return id;
    }

    // softmax over the last dim
    int softmax(int a) {
        const Tensor<T>& va = val(a);
        int N = va.shape.back();
        std::size_t rows = va.numel() / static_cast<std::size_t>(N);
        Tensor<T> y(va.shape);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* x = va.ptr() + r * N;
            T* o = y.ptr() + r * N;
            T mx = x[0];
            for (int i = 1; i < N; ++i) mx = std::max(mx, x[i]);
            T s = T(0);
            for (int i = 0; i < N; ++i) {
                o[i] = std::exp(x[i] - mx);
                s += o[i];
            }
            T inv = T(1) / s;
            for (int i = 0; i < N; ++i) o[i] *= inv;
        }
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, N] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& yv = nodes_[id].val;
            Tensor<T>& ga = ensure_grad(a);
            std::size_t rows = dy.numel() / static_cast<std::size_t>(N);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* d = dy.ptr() + r * N;
                const T* o = yv.ptr() + r * N;
                T dot = T(0);
                for (int i = 0; i < N; ++i) dot += d[i] * o[i];
                T* g = ga.ptr() + r * N;
                for (int i = 0; i < N; ++i) g[i] += (d[i] - dot) * o[i];
            }
        });
        return id;
    }

    // ---- normalization ----

    // x [B, ..., C] normalized per (sample, channel group); gamma/beta [C]
    int group_norm(int a, int gamma, int beta, int groups, T eps = T(1e-5)) {
        const Tensor<T>& va = val(a);
        int B = va.shape.front();
        int C = va.shape.back();
        if (C % groups != 0) throw ArgumentError("group_norm: channels not divisible by groups");
        int Cg = C / groups;
        std::size_t HW = va.numel() / (static_cast<std::size_t>(B) * C);
        std::size_t S = HW * static_cast<std::size_t>(Cg);
        Tensor<T> mean({B, groups}), invstd({B, groups});
        Tensor<T> y(va.shape);
        const Tensor<T>& vg = val(gamma);
        const Tensor<T>& vb = val(beta);
        for (int bb = 0; bb < B; ++bb) {
            for (int g = 0; g < groups; ++g) {
                T m = T(0), sq = T(0);
                for (std::size_t hw = 0; hw < HW; ++hw) {
                    const T* x = va.ptr() + (static_cast<std::size_t>(bb) * HW + hw) * C + g * Cg;
                    for (int c = 0; c < Cg; ++c) {
                        m += x[c];
                        sq += x[c] * x[c];
                    }
                }
                m /= static_cast<T>(S);
                T var = sq / static_cast<T>(S) - m * m;
                if (var < T(0)) var = T(0);
                T is = T(1) / std::sqrt(var + eps);
                mean[static_cast<std::size_t>(bb) * groups + g] = m;
                invstd[static_cast<std::size_t>(bb) * groups + g] = is;
                for (std::size_t hw = 0; hw < HW; ++hw) {
                    std::size_t off = (static_cast<std::size_t>(bb) * HW + hw) * C + static_cast<std::size_t>(g) * Cg;
                    for (int c = 0; c < Cg; ++c) {
                        T xh = (va[off + c] - m) * is;
                        y[off + c] = xh * vg[static_cast<std::size_t>(g * Cg + c)] + vb[static_cast<std::size_t>(g * Cg + c)];
                    }
                }
            }
        }
        int id = push(std::move(y), needs(a) || needs(gamma) || needs(beta));
        record(id, [this, id, a, gamma, beta, groups, B, C, Cg, HW, S, mean, invstd] {
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& x = nodes_[a].val;
            const Tensor<T>& vg = nodes_[gamma].val;
            if (needs(gamma) || needs(beta)) {
                Tensor<T>& gg = ensure_grad(gamma);
                Tensor<T>& gb = ensure_grad(beta);
                for (int bb = 0; bb < B; ++bb)
                    for (std::size_t hw = 0; hw < HW; ++hw) {
                        std::size_t off = (static_cast<std::size_t>(bb) * HW + hw) * C;
                        for (int c = 0; c < C; ++c) {
                            int g = c / Cg;
                            T m = mean[static_cast<std::size_t>(bb) * groups + g];
                            T is = invstd[static_cast<std::size_t>(bb) * groups + g];
                            T xh = (x[off + c] - m) * is;
                            if (needs(gamma)) gg[static_cast<std::size_t>(c)] += dy[off + c] * xh;
                            if (needs(beta)) gb[static_cast<std::size_t>(c)] += dy[off + c];
                        }
                    }
            }
            if (!needs(a)) return;
            Tensor<T>& ga = ensure_grad(a);
            for (int bb = 0; bb < B; ++bb) {
                for (int g = 0; g < groups; ++g) {
                    T m = mean[static_cast<std::size_t>(bb) * groups + g];
                    T is = invstd[static_cast<std::size_t>(bb) * groups + g];
                    T sum_dxh = T(0), sum_dxh_xh = T(0);
                    for (std::size_t hw = 0; hw < HW; ++hw) {
                        std::size_t off = (static_cast<std::size_t>(bb) * HW + hw) * C + static_cast<std::size_t>(g) * Cg;
                        for (int c = 0; c < Cg; ++c) {
                            T dxh = dy[off + c] * vg[static_cast<std::size_t>(g * Cg + c)];
                            T xh = (x[off + c] - m) * is;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                        }
                    }
                    T invS = T(1) / static_cast<T>(S);
                    for (std::size_t hw = 0; hw < HW; ++hw) {
                        std::size_t off = (static_cast<std::size_t>(bb) * HW + hw) * C + static_cast<std::size_t>(g) * Cg;
                        for (int c = 0; c < Cg; ++c) {
                            T dxh = dy[off + c] * vg[static_cast<std::size_t>(g * Cg + c)];
                            T xh = (x[off + c] - m) * is;
                            ga[off + c] += is * (dxh - invS * sum_dxh - xh * invS * sum_dxh_xh);
                        }
                    }
                }
            }
        });
        return id;
    }

    // x [..., C] normalized per row; gamma/beta [C]
    int layer_norm(int a, int gamma, int beta, T eps = T(1e-5)) {
        const Tensor<T>& va = val(a);
        int C = va.shape.back();
        std::size_t rows = va.numel() / static_cast<std::size_t>(C);
        Tensor<T> mean({static_cast<int>(rows)}), invstd({static_cast<int>(rows)});
        Tensor<T> y(va.shape);
        const Tensor<T>& vg = val(gamma);
        const Tensor<T>& vb = val(beta);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* x = va.ptr() + r * C;
            T m = T(0), sq = T(0);
            for (int c = 0; c < C; ++c) {
                m += x[c];
                sq += x[c] * x[c];
            }
            m /= static_cast<T>(C);
            T var = sq / static_cast<T>(C) - m * m;
            if (var < T(0)) var = T(0);
            T is = T(1) / std::sqrt(var + eps);
            mean[r] = m;
            invstd[r] = is;
            T* o = y.ptr() + r * C;
            for (int c = 0; c < C; ++c) o[c] = (x[c] - m) * is * vg[static_cast<std::size_t>(c)] + vb[static_cast<std::size_t>(c)];
        }
        int id = push(std::move(y), needs(a) || needs(gamma) || needs(beta));
        record(id, [this, id, a, gamma, beta, C, mean, invstd] {
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& x = nodes_[a].val;
            const Tensor<T>& vg = nodes_[gamma].val;
            std::size_t rows = dy.numel() / static_cast<std::size_t>(C);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* d = dy.ptr() + r * C;
                const T* xr = x.ptr() + r * C;
                T m = mean[r], is = invstd[r];
                if (needs(gamma) || needs(beta)) {
                    Tensor<T>& gg = ensure_grad(gamma);
                    Tensor<T>& gb = ensure_grad(beta);
                    for (int c = 0; c < C; ++c) {
                        if (needs(gamma)) gg[static_cast<std::size_t>(c)] += d[c] * (xr[c] - m) * is;
                        if (needs(beta)) gb[static_cast<std::size_t>(c)] += d[c];
                    }
                }
                if (!needs(a)) continue;
                T sum_dxh = T(0), sum_dxh_xh = T(0);
                for (int c = 0; c < C; ++c) {
                    T dxh = d[c] * vg[static_cast<std::size_t>(c)];
                    T xh = (xr[c] - m) * is;
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
                T invC = T(1) / static_cast<T>(C);
                T* g = ensure_grad(a).ptr() + r * C;
                for (int c = 0; c < C; ++c) {
                    T dxh = d[c] * vg[static_cast<std::size_t>(c)];
                    T xh = (xr[c] - m) * is;
                    g[c] += is * (dxh - invC * sum_dxh - xh * invC * sum_dxh_xh);
                }
            }
        });
        return id;
    }

    // ---- convolution ----

    // x [B, H, W, Ci], w [Co, K*K*Ci] (patch order ky, kx, ci), bias [Co].
    // Zero padding, square kernel, output [B, OH, OW, Co].
    int conv2d(int a, int w, int bias, int Kk, int stride, int pad) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vw = val(w);
        if (va.rank() != 4) throw ArgumentError("conv2d: input must be rank 4");
        int B = va.dim(0), H = va.dim(1), W = va.dim(2), Ci = va.dim(3);
        int Co = vw.dim(0);
        if (vw.dim(1) != Kk * Kk * Ci) throw ArgumentError("conv2d: weight/patch mismatch");
        int OH = (H + 2 * pad - Kk) / stride + 1;
        int OW = (W + 2 * pad - Kk) / stride + 1;
        int M = OH * OW;
        int Kdim = Kk * Kk * Ci;

        // W transposed once so the forward GEMM streams im2col rows.
        Tensor<T> wt({Kdim, Co});
        for (int co = 0; co < Co; ++co)
            for (int k = 0; k < Kdim; ++k) wt[static_cast<std::size_t>(k) * Co + co] = vw[static_cast<std::size_t>(co) * Kdim + k];

        Tensor<T> y({B, OH, OW, Co});
        std::vector<T> col(static_cast<std::size_t>(M) * Kdim);
        const Tensor<T>& vb = val(bias);
        for (int bb = 0; bb < B; ++bb) {
            im2col(va.ptr() + static_cast<std::size_t>(bb) * H * W * Ci, col.data(), H, W, Ci, Kk, stride, pad, OH, OW);
            T* out = y.ptr() + static_cast<std::size_t>(bb) * M * Co;
            kernels::gemm_nn(col.data(), wt.ptr(), out, M, Co, Kdim, false);
            for (int m = 0; m < M; ++m)
                for (int co = 0; co < Co; ++co) out[static_cast<std::size_t>(m) * Co + co] += vb[static_cast<std::size_t>(co)];
        }
        int id = push(std::move(y), needs(a) || needs(w) || needs(bias));
        record(id, [this, id, a, w, bias, B, H, W, Ci, Co, Kk, stride, pad, OH, OW, M, Kdim] {
            const Tensor<T>& dy = nodes_[id].grad;
            const Tensor<T>& x = nodes_[a].val;
            const Tensor<T>& vw = nodes_[w].val;
            std::vector<T> col(static_cast<std::size_t>(M) * Kdim);
            std::vector<T> dcol(static_cast<std::size_t>(M) * Kdim);
            for (int bb = 0; bb < B; ++bb) {
                const T* dout = dy.ptr() + static_cast<std::size_t>(bb) * M * Co;
                if (needs(w) || needs(a))
                    im2col(x.ptr() + static_cast<std::size_t>(bb) * H * W * Ci, col.data(), H, W, Ci, Kk, stride, pad, OH, OW);
                if (needs(w))
                    kernels::gemm_tn(dout, col.data(), ensure_grad(w).ptr(), M, Kdim, Co, true);
                if (needs(bias)) {
                    Tensor<T>& gb = ensure_grad(bias);
                    for (int m = 0; m < M; ++m)
                        for (int co = 0; co < Co; ++co) gb[static_cast<std::size_t>(co)] += dout[static_cast<std::size_t>(m) * Co + co];
                }
                if (needs(a)) {
                    kernels::gemm_nn(dout, vw.ptr(), dcol.data(), M, Kdim, Co, false);
                    col2im_acc(dcol.data(), ensure_grad(a).ptr() + static_cast<std::size_t>(bb) * H * W * Ci,
                               H, W, Ci, Kk, stride, pad, OH, OW);
                }
            }
        });
        return id;
    }

    // nearest-neighbour 2x upsample of [B, H, W, C]
    int upsample2x(int a) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 4) throw ArgumentError("upsample2x: input must be rank 4");
        int B = va.dim(0), H = va.dim(1), W = va.dim(2), C = va.dim(3);
        Tensor<T> y({B, H * 2, W * 2, C});
        for (int bb = 0; bb < B; ++bb)
            for (int h = 0; h < 2 * H; ++h)
                for (int w2 = 0; w2 < 2 * W; ++w2) {
                    const T* src = va.ptr() + ((static_cast<std::size_t>(bb) * H + h / 2) * W + w2 / 2) * C;
                    T* dst = y.ptr() + ((static_cast<std::size_t>(bb) * 2 * H + h) * 2 * W + w2) * C;
                    std::copy(src, src + C, dst);
                }
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a, B, H, W, C] {
            if (!needs(a)) return;
            const Tensor<T>& dy = nodes_[id].grad;
            Tensor<T>& ga = ensure_grad(a);
            for (int bb = 0; bb < B; ++bb)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w2 = 0; w2 < 2 * W; ++w2) {
                        const T* d = dy.ptr() + ((static_cast<std::size_t>(bb) * 2 * H + h) * 2 * W + w2) * C;
                        T* g = ga.ptr() + ((static_cast<std::size_t>(bb) * H + h / 2) * W + w2 / 2) * C;
                        for (int c = 0; c < C; ++c) g[c] += d[c];
                    }
        });
        return id;
    }

    // ---- reductions ----

    int sum_all(int a) {
        const Tensor<T>& va = val(a);
        Tensor<T> y({1});
        T s = T(0);
        for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
        y[0] = s;
        int id = push(std::move(y), needs(a));
        record(id, [this, id, a] {
            if (!needs(a)) return;
            T d = nodes_[id].grad[0];
            Tensor<T>& ga = ensure_grad(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += d;
        });
        return id;
    }

    // mean over batch of per-sample sum of squared error
    int sq_error_mean(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (!same_shape(va, vb)) throw ArgumentError("sq_error_mean: shape mismatch");
        int B = va.shape.front();
        Tensor<T> y({1});
        T s = T(0);
        for (std::size_t i = 0; i < va.numel(); ++i) {
            T d = va[i] - vb[i];
            s += d * d;
        }
        y[0] = s / static_cast<T>(B);
        int id = push(std::move(y), needs(a) || needs(b));
        record(id, [this, id, a, b, B] {
            T d = nodes_[id].grad[0] * T(2) / static_cast<T>(B);
            const Tensor<T>& va = nodes_[a].val;
            const Tensor<T>& vb = nodes_[b].val;
            if (needs(a)) {
                Tensor<T>& ga = ensure_grad(a);
                for (std::size_t i = 0; i < va.numel(); ++i) ga[i] += d * (va[i] - vb[i]);
            }
            if (needs(b)) {
                Tensor<T>& gb = ensure_grad(b);
                for (std::size_t i = 0; i < va.numel(); ++i) gb[i] -= d * (va[i] - vb[i]);
            }
        });
        return id;
    }

    void backward(int loss) {
        Tensor<T>& lg = ensure_grad(loss);
        if (lg.numel() != 1) throw ArgumentError("backward: loss must be scalar");
        lg[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty() || !n.back) continue;
            n.back();
        }
    }

    static void im2col(const T* x, T* col, int H, int W, int Ci, int Kk, int stride, int pad, int OH, int OW) {
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                T* dst = col + (static_cast<std::size_t>(oy) * OW + ox) * Kk * Kk * Ci;
                for (int ky = 0; ky < Kk; ++ky) {
                    int iy = oy * stride + ky - pad;
                    for (int kx = 0; kx < Kk; ++kx, dst += Ci) {
                        int ix = ox * stride + kx - pad;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                            std::fill(dst, dst + Ci, T(0));
                        } else {
                            const T* src = x + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                            std::copy(src, src + Ci, dst);
                        }
                    }
                }
            }
    }

    static void col2im_acc(const T* col, T* gx, int H, int W, int Ci, int Kk, int stride, int pad, int OH, int OW) {
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                const T* src = col + (static_cast<std::size_t>(oy) * OW + ox) * Kk * Kk * Ci;
                for (int ky = 0; ky < Kk; ++ky) {
                    int iy = oy * stride + ky - pad;
                    for (int kx = 0; kx < Kk; ++kx, src += Ci) {
                        int ix = ox * stride + kx - pad;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                        T* dst = gx + (static_cast<std::size_t>(iy) * W + ix) * Ci;
                        for (int c = 0; c < Ci; ++c) dst[c] += src[c];
                    }
                }
            }
    }

private:
    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    Tensor<T>& ensure_grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad = Tensor<T>(n.val.shape);
        return n.grad;
    }

    int push(Tensor<T> v, bool needs_grad) {
        nodes_.push_back(Node{std::move(v), {}, needs_grad, nullptr});
        return static_cast<int>(nodes_.size() - 1);
    }

    void record(int id, std::function<void()> fn) {
        if (recording_ && nodes_[static_cast<std::size_t>(id)].needs_grad)
            nodes_[static_cast<std::size_t>(id)].back = std::move(fn);
    }

    static void vadd(const T* a, const T* b, T* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
    }
    static void vmul(const T* a, const T* b, T* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
    }

    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> param_ids_;
    bool recording_;
};

}  // namespace unblur
