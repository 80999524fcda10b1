#pragma once

#include <array>
#include <string>
#include <vector>

#include "unblur/nn.hpp"

namespace unblur {

// KL autoencoder: 64x64x3 <-> 8x8x4, three stride-2 stages 64/128/256 with a
// mirrored decoder. Values in [-1,1]; decode clamps.
template <typename T>
struct Vae {
    static constexpr int kLatentChannels = 4;
    static constexpr int kDownFactor = 8;

    // encoder
    Conv2dLayer<T> e1a, e1b, e2a, e2b, e3a, e3b;
    GroupNormLayer<T> eg1a, eg1b, eg2a, eg2b, eg3a, eg3b;
    Conv2dLayer<T> head;  // 1x1 -> mean | logvar
    // decoder
    Conv2dLayer<T> d_in;  // 1x1 4 -> 256
    Conv2dLayer<T> d1a, d1b, d2a, d2b, d3a, d3b, out_conv;
    GroupNormLayer<T> dg1a, dg1b, dg2a, dg2b, dg3a, dg3b;

    Vae() = default;
    explicit Vae(Rng& rng, const std::string& name = "vae")
        : e1a(name + ".e1a", 3, 64, 3, 2, rng),
          e1b(name + ".e1b", 64, 64, 3, 1, rng),
          e2a(name + ".e2a", 64, 128, 3, 2, rng),
          e2b(name + ".e2b", 128, 128, 3, 1, rng),
          e3a(name + ".e3a", 128, 256, 3, 2, rng),
          e3b(name + ".e3b", 256, 256, 3, 1, rng),
          eg1a(name + ".eg1a", 64, 8),
          eg1b(name + ".eg1b", 64, 8),
          eg2a(name + ".eg2a", 128, 8),
          eg2b(name + ".eg2b", 128, 8),
          eg3a(name + ".eg3a", 256, 8),
          eg3b(name + ".eg3b", 256, 8),
          head(name + ".head", 256, 2 * kLatentChannels, 1, 1, rng),
          d_in(name + ".din", kLatentChannels, 256, 1, 1, rng),
          d1a(name + ".d1a", 256, 256, 3, 1, rng),
          d1b(name + ".d1b", 256, 128, 3, 1, rng),
          d2a(name + ".d2a", 128, 128, 3, 1, rng),
          d2b(name + ".d2b", 128, 64, 3, 1, rng),
          d3a(name + ".d3a", 64, 64, 3, 1, rng),
          d3b(name + ".d3b", 64, 64, 3, 1, rng),
          out_conv(name + ".out", 64, 3, 3, 1, rng),
          dg1a(name + ".dg1a", 256, 8),
          dg1b(name + ".dg1b", 128, 8),
          dg2a(name + ".dg2a", 128, 8),
          dg2b(name + ".dg2b", 64, 8),
          dg3a(name + ".dg3a", 64, 8),
          dg3b(name + ".dg3b", 64, 8) {}

    void reg(ParamRegistry<T>& r) {
        for (auto* c : {&e1a, &e1b, &e2a, &e2b, &e3a, &e3b, &head, &d_in, &d1a, &d1b, &d2a, &d2b, &d3a, &d3b, &out_conv})
            c->reg(r);
        for (auto* g : {&eg1a, &eg1b, &eg2a, &eg2b, &eg3a, &eg3b, &dg1a, &dg1b, &dg2a, &dg2b, &dg3a, &dg3b}) g->reg(r);
    }
};

// Residual refiner blocks around the frozen VAE (one per stage each side).
// Zero-initialized output convs make both passes exact identities at init.
template <typename T>
struct EncRefinerBlock {
    Conv2dLayer<T> c1, c2;
    EncRefinerBlock() = default;
    EncRefinerBlock(const std::string& name, int c, Rng& rng)
        : c1(name + ".c1", c, c, 3, 1, rng), c2(name + ".c2", c, c, 3, 1, rng, /*zero_init=*/true) {}
    void reg(ParamRegistry<T>& r) {
        c1.reg(r);
        c2.reg(r);
    }
    int forward(Tape<T>& tp, int x) { return tp.add(x, c2.forward(tp, tp.silu(c1.forward(tp, x)))); }
};

template <typename T>
struct DecRefinerBlock {
    Conv2dLayer<T> skip_proj;  // 1x1 on the paired encoder feature
    Conv2dLayer<T> c1, c2;
    DecRefinerBlock() = default;
    DecRefinerBlock(const std::string& name, int c, Rng& rng)
        : skip_proj(name + ".proj", c, c, 1, 1, rng),
          c1(name + ".c1", 2 * c, c, 3, 1, rng),
          c2(name + ".c2", c, c, 3, 1, rng, /*zero_init=*/true) {}
    void reg(ParamRegistry<T>& r) {
        skip_proj.reg(r);
        c1.reg(r);
        c2.reg(r);
    }
    int forward(Tape<T>& tp, int h, int skip) {
        int cat = tp.concat_last(h, skip_proj.forward(tp, skip));
        return tp.add(h, c2.forward(tp, tp.silu(c1.forward(tp, cat))));
    }
};

template <typename T>
struct VaeRefiners {
    EncRefinerBlock<T> enc1, enc2, enc3;   // after encoder stages (64@H/2, 128@H/4, 256@H/8)
    DecRefinerBlock<T> dec0, dec1, dec2;   // after d_in (256@H/8), stage1 (128@H/4), stage2 (64@H/2)

    VaeRefiners() = default;
    explicit VaeRefiners(Rng& rng)
        : enc1("refiner_enc.b1", 64, rng),
          enc2("refiner_enc.b2", 128, rng),
          enc3("refiner_enc.b3", 256, rng),
          dec0("refiner_dec.b0", 256, rng),
          dec1("refiner_dec.b1", 128, rng),
          dec2("refiner_dec.b2", 64, rng) {}
    void reg(ParamRegistry<T>& r) {
        enc1.reg(r);
        enc2.reg(r);
        enc3.reg(r);
        dec0.reg(r);
        dec1.reg(r);
        dec2.reg(r);
    }
};

template <typename T>
struct EncodeNodes {
    int stage1 = -1, stage2 = -1, stage3 = -1;  // refined when a refiner was given
    int mean = -1, logvar = -1;
};

// x [B, H, W, 3] node -> stage features and latent stats. When `ref` is
// non-null every stage output passes through its refiner block first.
template <typename T>
EncodeNodes<T> vae_encode_graph(Tape<T>& tp, Vae<T>& v, int x, VaeRefiners<T>* ref) {
    EncodeNodes<T> out;
    int h = tp.silu(v.eg1a.forward(tp, v.e1a.forward(tp, x)));
    h = tp.silu(v.eg1b.forward(tp, v.e1b.forward(tp, h)));
    if (ref) h = ref->enc1.forward(tp, h);
    out.stage1 = h;
    h = tp.silu(v.eg2a.forward(tp, v.e2a.forward(tp, h)));
    h = tp.silu(v.eg2b.forward(tp, v.e2b.forward(tp, h)));
    if (ref) h = ref->enc2.forward(tp, h);
    out.stage2 = h;
    h = tp.silu(v.eg3a.forward(tp, v.e3a.forward(tp, h)));
    h = tp.silu(v.eg3b.forward(tp, v.e3b.forward(tp, h)));
    if (ref) h = ref->enc3.forward(tp, h);
    out.stage3 = h;
    int stats = v.head.forward(tp, h);
    out.mean = tp.slice_last(stats, 0, Vae<T>::kLatentChannels);
    out.logvar = tp.slice_last(stats, Vae<T>::kLatentChannels, 2 * Vae<T>::kLatentChannels);
    return out;
}

// z [B, h, w, 4] node -> image node (pre-clamp). Skips pair by resolution:
// stage3 -> after d_in, stage2 -> after stage 1, stage1 -> after stage 2.
template <typename T>
int vae_decode_graph(Tape<T>& tp, Vae<T>& v, int z, VaeRefiners<T>* ref, const EncodeNodes<T>* skips) {
    if (ref && !skips) throw ArgumentError("refined decode needs encoder skip features");
    int h = v.d_in.forward(tp, z);
    if (ref) h = ref->dec0.forward(tp, h, skips->stage3);
    h = tp.silu(v.dg1a.forward(tp, v.d1a.forward(tp, h)));
    h = tp.silu(v.dg1b.forward(tp, v.d1b.forward(tp, tp.upsample2x(h))));
    if (ref) h = ref->dec1.forward(tp, h, skips->stage2);
    h = tp.silu(v.dg2a.forward(tp, v.d2a.forward(tp, h)));
    h = tp.silu(v.dg2b.forward(tp, v.d2b.forward(tp, tp.upsample2x(h))));
    if (ref) h = ref->dec2.forward(tp, h, skips->stage1);
    h = tp.silu(v.dg3a.forward(tp, v.d3a.forward(tp, h)));
    h = tp.silu(v.dg3b.forward(tp, v.d3b.forward(tp, tp.upsample2x(h))));
    return v.out_conv.forward(tp, h);
}

template <typename T>
void check_encodable(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(3) != 3) throw ArgumentError("vae: expected [B,H,W,3], got " + shape_str(x.shape));
    if (x.dim(1) % Vae<T>::kDownFactor != 0 || x.dim(2) % Vae<T>::kDownFactor != 0)
        throw ArgumentError("vae: image dims must be divisible by 8");
}

enum class EncodeMode { kMean, kSample };

template <typename T>
Tensor<T> vae_encode(Vae<T>& v, const Tensor<T>& x, EncodeMode mode = EncodeMode::kMean, std::uint64_t seed = 0) {
    check_encodable(x);
    Tape<T> tp(false);
    auto nodes = vae_encode_graph(tp, v, tp.input(x), nullptr);
    if (mode == EncodeMode::kMean) return tp.val(nodes.mean);
    const Tensor<T>& mean = tp.val(nodes.mean);
    const Tensor<T>& logvar = tp.val(nodes.logvar);
    Rng rng(seed);
    Tensor<T> z(mean.shape);
    for (std::size_t i = 0; i < z.numel(); ++i)
        z[i] = mean[i] + std::exp(T(0.5) * logvar[i]) * static_cast<T>(rng.normal());
    return z;
}

template <typename T>
Tensor<T> clamp_image(Tensor<T> img) {
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = std::min(T(1), std::max(T(-1), img[i]));
    return img;
}

template <typename T>
Tensor<T> vae_decode(Vae<T>& v, const Tensor<T>& z) {
    Tape<T> tp(false);
    int img = vae_decode_graph(tp, v, tp.input(z), nullptr, nullptr);
    return clamp_image(tp.val(img).clone());
}

template <typename T>
struct RefinedEncoding {
    Tensor<T> latent;                  // refined mean
    std::array<Tensor<T>, 3> skips;    // refined stage1..3 features
};

template <typename T>
RefinedEncoding<T> vae_encode_refined(Vae<T>& v, VaeRefiners<T>& ref, const Tensor<T>& y) {
    check_encodable(y);
    Tape<T> tp(false);
    auto nodes = vae_encode_graph(tp, v, tp.input(y), &ref);
    RefinedEncoding<T> out;
    out.latent = tp.val(nodes.mean);
    out.skips = {tp.val(nodes.stage1), tp.val(nodes.stage2), tp.val(nodes.stage3)};
    return out;
}

template <typename T>
Tensor<T> vae_decode_refined(Vae<T>& v, VaeRefiners<T>& ref, const Tensor<T>& z, const std::array<Tensor<T>, 3>& skips) {
    Tape<T> tp(false);
    EncodeNodes<T> sk;
    sk.stage1 = tp.input(skips[0]);
    sk.stage2 = tp.input(skips[1]);
    sk.stage3 = tp.input(skips[2]);
    int img = vae_decode_graph(tp, v, tp.input(z), &ref, &sk);
    return clamp_image(tp.val(img).clone());
}

// reconstruction MSE (mean over pixels) + beta_kl * KL(N(mu, sigma) || N(0,1))
// with KL summed per image, averaged over the batch.
template <typename T>
int vae_pretrain_loss_graph(Tape<T>& tp, Vae<T>& v, int x, int xi, T beta_kl = T(1e-6)) {
    auto enc = vae_encode_graph(tp, v, x, nullptr);
    int sigma = tp.exp(tp.scale(enc.logvar, T(0.5)));
    int z = tp.add(enc.mean, tp.mul(sigma, xi));
    int recon = vae_decode_graph(tp, v, z, nullptr, nullptr);
    const auto& xs = tp.val(x).shape;
    std::size_t pixels = static_cast<std::size_t>(xs[1]) * xs[2] * xs[3];
    int B = xs[0];
    int mse = tp.scale(tp.sq_error_mean(recon, x), T(1) / static_cast<T>(pixels));
    // KL = 0.5 sum(mu^2 + exp(logvar) - 1 - logvar)
    int mu2 = tp.mul(enc.mean, enc.mean);
    int kl_terms = tp.sub(tp.add(mu2, tp.exp(enc.logvar)), tp.add_const(enc.logvar, T(1)));
    int kl = tp.scale(tp.sum_all(kl_terms), T(0.5) / static_cast<T>(B));
    return tp.add(mse, tp.scale(kl, beta_kl));
}

}  // namespace unblur
