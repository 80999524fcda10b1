#pragma once

#include <string>
#include <vector>

#include "unblur/autograd.hpp"
#include "unblur/rng.hpp"

namespace unblur {

// Parameter book-keeping. Registration order is fixed by construction order,
// which makes optimizer traversal and checkpoints deterministic.
template <typename T>
struct ParamRegistry {
    std::vector<Param<T>*> params;

    void add(Param<T>* p) { params.push_back(p); }

    Param<T>* find(const std::string& name) {
        for (auto* p : params)
            if (p->name == name) return p;
        return nullptr;
    }

    std::size_t total_elems() const {
        std::size_t n = 0;
        for (auto* p : params) n += p->value.numel();
        return n;
    }
};

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
    Param<T> W;  // [in, out]
    Param<T> b;  // [out]

    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init = false) {
        W.name = name + ".w";
        b.name = name + ".b";
        W.value = zero_init ? Tensor<T>({in, out}) : randn<T>({in, out}, rng, 1.0 / std::sqrt(double(in)));
        b.value = Tensor<T>({out});
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&W);
        r.add(&b);
    }
    int forward(Tape<T>& tp, int x) { return tp.add_bias(tp.matmul(x, tp.param(W)), tp.param(b)); }
    // projection without bias
    int project(Tape<T>& tp, int x) { return tp.matmul(x, tp.param(W)); }
};

template <typename T>
struct Conv2dLayer {
    Param<T> W;  // [out, k*k*in], patch order (ky, kx, ci)
    Param<T> b;  // [out]
    int k = 3, stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int in, int out, int k_, int stride_, Rng& rng, bool zero_init = false)
        : k(k_), stride(stride_), pad((k_ - 1) / 2) {
        W.name = name + ".w";
        b.name = name + ".b";
        W.value = zero_init ? Tensor<T>({out, k * k * in})
                            : randn<T>({out, k * k * in}, rng, std::sqrt(2.0 / (double(k) * k * in)));
        b.value = Tensor<T>({out});
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&W);
        r.add(&b);
    }
    int forward(Tape<T>& tp, int x) { return tp.conv2d(x, tp.param(W), tp.param(b), k, stride, pad); }
};

template <typename T>
struct GroupNormLayer {
    Param<T> gamma, beta;
    int groups = 8;

    GroupNormLayer() = default;
    GroupNormLayer(const std::string& name, int channels, int groups_) : groups(groups_) {
        gamma.name = name + ".g";
        beta.name = name + ".b";
        gamma.value = Tensor<T>({channels});
        gamma.value.fill(T(1));
        beta.value = Tensor<T>({channels});
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&gamma);
        r.add(&beta);
    }
    int forward(Tape<T>& tp, int x) { return tp.group_norm(x, tp.param(gamma), tp.param(beta), groups); }
};

template <typename T>
struct LayerNormLayer {
    Param<T> gamma, beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(const std::string& name, int channels) {
        gamma.name = name + ".g";
        beta.name = name + ".b";
        gamma.value = Tensor<T>({channels});
        gamma.value.fill(T(1));
        beta.value = Tensor<T>({channels});
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&gamma);
        r.add(&beta);
    }
    int forward(Tape<T>& tp, int x) { return tp.layer_norm(x, tp.param(gamma), tp.param(beta)); }
};

template <typename T>
struct FeedForward {
    Linear<T> in, out;

    FeedForward() = default;
    FeedForward(const std::string& name, int d, int hidden, Rng& rng)
        : in(name + ".in", d, hidden, rng), out(name + ".out", hidden, d, rng) {}
    void reg(ParamRegistry<T>& r) {
        in.reg(r);
        out.reg(r);
    }
    int forward(Tape<T>& tp, int x) { return out.forward(tp, tp.silu(in.forward(tp, x))); }
};

// Single-head scaled dot-product attention, 1/sqrt(d) scores, no output
// projection. Queries are always [B, N, d]; keys/values either a shared
// [M, d] sequence or per-sample [B, M, d].
template <typename T>
struct Attention {
    Param<T> Wq, Wk, Wv;  // [d, d]
    int d = 0;

    Attention() = default;
    Attention(const std::string& name, int d_, Rng& rng, bool zero_v = false) : d(d_) {
        Wq.name = name + ".wq";
        Wk.name = name + ".wk";
        Wv.name = name + ".wv";
        double sd = 1.0 / std::sqrt(double(d));
        Wq.value = randn<T>({d, d}, rng, sd);
        Wk.value = randn<T>({d, d}, rng, sd);
        Wv.value = zero_v ? Tensor<T>({d, d}) : randn<T>({d, d}, rng, sd);
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&Wq);
        r.add(&Wk);
        r.add(&Wv);
    }

    int forward(Tape<T>& tp, int q_tokens, int kv_tokens, bool kv_batched) {
        T scale = T(1) / static_cast<T>(std::sqrt(double(d)));
        int q = tp.matmul(q_tokens, tp.param(Wq));
        int k = tp.matmul(kv_tokens, tp.param(Wk));
        int v = tp.matmul(kv_tokens, tp.param(Wv));
        if (kv_batched) {
            int scores = tp.bmm_nt(q, k, scale);
            return tp.bmm_nn(tp.softmax(scores), v);
        }
        int scores = tp.matmul_nt(q, k, scale);  // k shared across the batch
        return tp.matmul(tp.softmax(scores), v);
    }
};

// Text attention plus the added blur branch (shared queries):
//   Z' = Attn(Q, K, V) + Attn(Q, K', V'),  K' = c_b W'_k, V' = c_b W'_v.
// W'_v starts at zero so a fresh branch cannot perturb the base model.
// blur_evals counts branch evaluations for the inference-path audit.
template <typename T>
struct DualCrossAttention {
    Param<T> Wq, Wk, Wv;          // frozen after base pretraining
    Param<T> Wk_blur, Wv_blur;    // trainable in uid phases
    int d = 0;
    mutable long blur_evals = 0;

    DualCrossAttention() = default;
    DualCrossAttention(const std::string& name, int d_, Rng& rng) : d(d_) {
        double sd = 1.0 / std::sqrt(double(d));
        Wq.name = name + ".wq";
        Wk.name = name + ".wk";
        Wv.name = name + ".wv";
        Wk_blur.name = name + ".blur_k";
        Wv_blur.name = name + ".blur_v";
        Wq.value = randn<T>({d, d}, rng, sd);
        Wk.value = randn<T>({d, d}, rng, sd);
        Wv.value = randn<T>({d, d}, rng, sd);
        Wk_blur.value = randn<T>({d, d}, rng, sd);
        Wv_blur.value = Tensor<T>({d, d});  // zeros
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&Wq);
        r.add(&Wk);
        r.add(&Wv);
        r.add(&Wk_blur);
        r.add(&Wv_blur);
    }

    // z_tokens [B, N, d]; text [Lt, d] shared; f_b [B, Nb, d] or -1 when absent.
    int forward(Tape<T>& tp, int z_tokens, int text, int f_b) {
        T scale = T(1) / static_cast<T>(std::sqrt(double(d)));
        int q = tp.matmul(z_tokens, tp.param(Wq));
        int k = tp.matmul(text, tp.param(Wk));
        int v = tp.matmul(text, tp.param(Wv));
        int out = tp.matmul(tp.softmax(tp.matmul_nt(q, k, scale)), v);
        if (f_b >= 0) {
            ++blur_evals;
            int kb = tp.matmul(f_b, tp.param(Wk_blur));
            int vb = tp.matmul(f_b, tp.param(Wv_blur));
            int blur = tp.bmm_nn(tp.softmax(tp.bmm_nt(q, kb, scale)), vb);
            out = tp.add(out, blur);
        }
        return out;
    }
};

template <typename T>
struct TimeMlp {
    Linear<T> fc1, fc2;
    int dim = 0;

    TimeMlp() = default;
    TimeMlp(const std::string& name, int dim_, Rng& rng)
        : fc1(name + ".fc1", dim_, dim_, rng), fc2(name + ".fc2", dim_, dim_, rng), dim(dim_) {}
    void reg(ParamRegistry<T>& r) {
        fc1.reg(r);
        fc2.reg(r);
    }
    // sinusoidal features [B, dim] -> embedding [B, dim]
    int forward(Tape<T>& tp, int sin_feats) { return fc2.forward(tp, tp.silu(fc1.forward(tp, sin_feats))); }
};

// GN -> conv -> +time -> GN -> conv, with identity or 1x1 skip.
template <typename T>
struct ResBlock {
    GroupNormLayer<T> gn1, gn2;
    Conv2dLayer<T> conv1, conv2;
    Linear<T> time_proj;
    Linear<T> skip;  // only when channels change
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(const std::string& name, int c_in, int c_out, int time_dim, int groups, Rng& rng)
        : gn1(name + ".gn1", c_in, groups),
          gn2(name + ".gn2", c_out, groups),
          conv1(name + ".conv1", c_in, c_out, 3, 1, rng),
          conv2(name + ".conv2", c_out, c_out, 3, 1, rng),
          time_proj(name + ".temb", time_dim, c_out, rng) {
        if (c_in != c_out) {
            skip = Linear<T>(name + ".skip", c_in, c_out, rng);
            has_skip = true;
        }
    }
    void reg(ParamRegistry<T>& r) {
        gn1.reg(r);
        gn2.reg(r);
        conv1.reg(r);
        conv2.reg(r);
        time_proj.reg(r);
        if (has_skip) skip.reg(r);
    }

    int forward(Tape<T>& tp, int x, int temb) {
        int h = conv1.forward(tp, tp.silu(gn1.forward(tp, x)));
        h = tp.add_rows(h, time_proj.forward(tp, tp.silu(temb)));
        h = conv2.forward(tp, tp.silu(gn2.forward(tp, h)));
        int s = has_skip ? skip.forward(tp, x) : x;
        return tp.add(h, s);
    }
};

// Tokenized attention over an NHWC map: proj_in to d_model, transformer ops,
// proj_out back, residual. The cross branch is the dual text/blur attention.
template <typename T>
struct SpatialAttnBlock {
    GroupNormLayer<T> gn;
    Linear<T> proj_in, proj_out;
    LayerNormLayer<T> ln1, ln2, ln3;
    Attention<T> self_att;
    DualCrossAttention<T> cross;
    FeedForward<T> ff;
    int channels = 0, d = 0;

    SpatialAttnBlock() = default;
    SpatialAttnBlock(const std::string& name, int c, int d_model, int groups, Rng& rng)
        : gn(name + ".gn", c, groups),
          proj_in(name + ".proj_in", c, d_model, rng),
          proj_out(name + ".proj_out", d_model, c, rng),
          ln1(name + ".ln1", d_model),
          ln2(name + ".ln2", d_model),
          ln3(name + ".ln3", d_model),
          self_att(name + ".self", d_model, rng),
          cross(name + ".cross", d_model, rng),
          ff(name + ".ff", d_model, 2 * d_model, rng),
          channels(c),
          d(d_model) {}
    void reg(ParamRegistry<T>& r) {
        gn.reg(r);
        proj_in.reg(r);
        proj_out.reg(r);
        ln1.reg(r);
        ln2.reg(r);
        ln3.reg(r);
        self_att.reg(r);
        cross.reg(r);
        ff.reg(r);
    }

    // x [B, H, W, C]; text [Lt, d]; f_b [B, Nb, d] or -1
    int forward(Tape<T>& tp, int x, int text, int f_b) {
        const auto& shp = tp.val(x).shape;
        int B = shp[0], H = shp[1], W = shp[2];
        int tok = tp.reshape(proj_in.forward(tp, gn.forward(tp, x)), {B, H * W, d});
        int n1 = ln1.forward(tp, tok);
        int t1 = tp.add(tok, self_att.forward(tp, n1, n1, true));
        int t2 = tp.add(t1, cross.forward(tp, ln2.forward(tp, t1), text, f_b));
        int t3 = tp.add(t2, ff.forward(tp, ln3.forward(tp, t2)));
        int back = tp.reshape(proj_out.forward(tp, t3), {B, H, W, channels});
        return tp.add(x, back);
    }
};

// Adapter-style block: spatial tokens attend to conditioning tokens.
template <typename T>
struct CrossAttnBlock {
    GroupNormLayer<T> gn;
    Linear<T> proj_in, proj_out;
    LayerNormLayer<T> ln1, ln2;
    Attention<T> cross;
    FeedForward<T> ff;
    int channels = 0, d = 0;

    CrossAttnBlock() = default;
    CrossAttnBlock(const std::string& name, int c, int d_model, int groups, Rng& rng)
        : gn(name + ".gn", c, groups),
          proj_in(name + ".proj_in", c, d_model, rng),
          proj_out(name + ".proj_out", d_model, c, rng),
          ln1(name + ".ln1", d_model),
          ln2(name + ".ln2", d_model),
          cross(name + ".cross", d_model, rng),
          ff(name + ".ff", d_model, 2 * d_model, rng),
          channels(c),
          d(d_model) {}
    void reg(ParamRegistry<T>& r) {
        gn.reg(r);
        proj_in.reg(r);
        proj_out.reg(r);
        ln1.reg(r);
        ln2.reg(r);
        cross.reg(r);
        ff.reg(r);
    }

    // x [B, H, W, C]; cond [B, Nc, d]
    int forward(Tape<T>& tp, int x, int cond) {
        const auto& shp = tp.val(x).shape;
        int B = shp[0], H = shp[1], W = shp[2];
        int tok = tp.reshape(proj_in.forward(tp, gn.forward(tp, x)), {B, H * W, d});
        int t1 = tp.add(tok, cross.forward(tp, ln1.forward(tp, tok), cond, true));
        int t2 = tp.add(t1, ff.forward(tp, ln2.forward(tp, t1)));
        int back = tp.reshape(proj_out.forward(tp, t2), {B, H, W, channels});
        return tp.add(x, back);
    }
};

}  // namespace unblur
