#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unblur/diffusion.hpp"
#include "unblur/nn.hpp"

namespace unblur {

struct UNetSpec {
    int latent_h = 8, latent_w = 8;
    int latent_channels = 4;
    std::vector<std::pair<int, bool>> levels = {{64, true}, {128, true}};  // (channels, has_attention)
    int base_channels = 64;
    int d_model = 128;
    int time_embed_dim = 128;
    int gn_groups = 8;

    void validate() const {
        if (levels.size() < 2) throw ConfigError("unet needs at least 2 levels");
        if (!levels.back().second) throw ConfigError("unet needs attention at the lowest resolution");
    }
};

// Denoiser eps_theta(z_t, t, c) with per-block dual text/blur cross-attention
// and optional additive residuals on each down block output and the middle
// block output (the adapter's injection sites).
template <typename T>
struct UNet {
    UNetSpec spec;
    TimeMlp<T> time_mlp;
    Conv2dLayer<T> conv_in;
    std::vector<ResBlock<T>> down_res;
    std::vector<SpatialAttnBlock<T>> down_att;  // parallel to levels with has_attention
    std::vector<char> down_has_att;
    std::vector<Conv2dLayer<T>> downsample;  // between levels, stride 2
    ResBlock<T> mid_res1, mid_res2;
    SpatialAttnBlock<T> mid_att;
    std::vector<ResBlock<T>> up_res;               // reversed level order
    std::vector<SpatialAttnBlock<T>> up_att;
    std::vector<Conv2dLayer<T>> upsample_conv;     // after level i (i>0): c_i -> c_{i-1}
    GroupNormLayer<T> out_gn;
    Conv2dLayer<T> conv_out;

    UNet() = default;
    UNet(const UNetSpec& sp, Rng& rng, const std::string& name = "unet") : spec(sp) {
        spec.validate();
        int n = static_cast<int>(spec.levels.size());
        time_mlp = TimeMlp<T>(name + ".time", spec.time_embed_dim, rng);
        conv_in = Conv2dLayer<T>(name + ".in", spec.latent_channels, spec.levels[0].first, 3, 1, rng);
        for (int i = 0; i < n; ++i) {
            // channel changes happen in the downsample convs; res blocks keep width
            int c = spec.levels[std::size_t(i)].first;
            down_res.emplace_back(name + ".down" + std::to_string(i) + ".res", c, c, spec.time_embed_dim,
                                  spec.gn_groups, rng);
            down_has_att.push_back(spec.levels[std::size_t(i)].second ? 1 : 0);
            if (spec.levels[std::size_t(i)].second)
                down_att.emplace_back(name + ".down" + std::to_string(i) + ".att", c, spec.d_model, spec.gn_groups, rng);
            if (i + 1 < n)
                downsample.emplace_back(name + ".down" + std::to_string(i) + ".ds", c, spec.levels[std::size_t(i + 1)].first,
                                        3, 2, rng);
        }
        int c_last = spec.levels.back().first;
        mid_res1 = ResBlock<T>(name + ".mid.res1", c_last, c_last, spec.time_embed_dim, spec.gn_groups, rng);
        mid_att = SpatialAttnBlock<T>(name + ".mid.att", c_last, spec.d_model, spec.gn_groups, rng);
        mid_res2 = ResBlock<T>(name + ".mid.res2", c_last, c_last, spec.time_embed_dim, spec.gn_groups, rng);
        for (int i = n - 1; i >= 0; --i) {
            int c = spec.levels[std::size_t(i)].first;
            up_res.emplace_back(name + ".up" + std::to_string(i) + ".res", 2 * c, c, spec.time_embed_dim, spec.gn_groups, rng);
            if (spec.levels[std::size_t(i)].second)
                up_att.emplace_back(name + ".up" + std::to_string(i) + ".att", c, spec.d_model, spec.gn_groups, rng);
            if (i > 0)
                upsample_conv.emplace_back(name + ".up" + std::to_string(i) + ".us", c, spec.levels[std::size_t(i - 1)].first,
                                           3, 1, rng);
        }
        out_gn = GroupNormLayer<T>(name + ".out.gn", spec.levels[0].first, spec.gn_groups);
        conv_out = Conv2dLayer<T>(name + ".out.conv", spec.levels[0].first, spec.latent_channels, 3, 1, rng);
    }

    void reg(ParamRegistry<T>& r) {
        time_mlp.reg(r);
        conv_in.reg(r);
        for (auto& m : down_res) m.reg(r);
        for (auto& m : down_att) m.reg(r);
        for (auto& m : downsample) m.reg(r);
        mid_res1.reg(r);
        mid_att.reg(r);
        mid_res2.reg(r);
        for (auto& m : up_res) m.reg(r);
        for (auto& m : up_att) m.reg(r);
        for (auto& m : upsample_conv) m.reg(r);
        out_gn.reg(r);
        conv_out.reg(r);
    }

    int n_injection_sites() const { return static_cast<int>(spec.levels.size()) + 1; }

    long blur_eval_count() const {
        long c = mid_att.cross.blur_evals;
        for (const auto& m : down_att) c += m.cross.blur_evals;
        for (const auto& m : up_att) c += m.cross.blur_evals;
        return c;
    }

    // z_t [B, h, w, latent_c]; ts one timestep per sample; text [Lt, d] node;
    // f_b [B, Nb, d] node or -1; residuals one node per injection site (may be
    // empty). Returns eps_hat with the latent shape.
    int forward(Tape<T>& tp, int z_t, const std::vector<int>& ts, int text, int f_b,
                const std::vector<int>& residuals) {
        const auto& zshape = tp.val(z_t).shape;
        if (zshape.size() != 4 || zshape[3] != spec.latent_channels)
            throw ArgumentError("unet: latent shape mismatch, got " + shape_str(zshape));
        if (!residuals.empty() && static_cast<int>(residuals.size()) != n_injection_sites())
            throw ArgumentError("unet: expected " + std::to_string(n_injection_sites()) + " residuals");
        int n = static_cast<int>(spec.levels.size());

        int temb = time_mlp.forward(tp, tp.input(time_embedding<T>(ts, spec.time_embed_dim)));
        int h = conv_in.forward(tp, z_t);
        std::vector<int> skips;
        std::size_t att_idx = 0;
        for (int i = 0; i < n; ++i) {
            h = down_res[std::size_t(i)].forward(tp, h, temb);
            if (down_has_att[std::size_t(i)]) h = down_att[att_idx++].forward(tp, h, text, f_b);
            if (!residuals.empty()) {
                if (!same_shape(tp.val(h), tp.val(residuals[std::size_t(i)])))
                    throw ArgumentError("unet: residual " + std::to_string(i) + " shape mismatch");
                h = tp.add(h, residuals[std::size_t(i)]);
            }
            skips.push_back(h);
            if (i + 1 < n) h = downsample[std::size_t(i)].forward(tp, h);
        }
        h = mid_res1.forward(tp, h, temb);
        h = mid_att.forward(tp, h, text, f_b);
        h = mid_res2.forward(tp, h, temb);
        if (!residuals.empty()) {
            if (!same_shape(tp.val(h), tp.val(residuals[std::size_t(n)])))
                throw ArgumentError("unet: middle residual shape mismatch");
            h = tp.add(h, residuals[std::size_t(n)]);
        }

        std::size_t up_att_idx = 0;
        for (int i = n - 1; i >= 0; --i) {
            h = tp.concat_last(h, skips[std::size_t(i)]);
            h = up_res[std::size_t(n - 1 - i)].forward(tp, h, temb);
            if (spec.levels[std::size_t(i)].second) h = up_att[up_att_idx++].forward(tp, h, text, f_b);
            if (i > 0) h = upsample_conv[std::size_t(n - 1 - i)].forward(tp, tp.upsample2x(h));
        }
        return conv_out.forward(tp, tp.silu(out_gn.forward(tp, h)));
    }
};

// Structure adapter: a small copy of the down path taking z_t and the
// timestep, with f_s entering every block via cross-attention. Each injection
// site ends in a zero-initialized 1x1 conv, so a fresh adapter is silent.
template <typename T>
struct Adapter {
    UNetSpec spec;
    TimeMlp<T> time_mlp;
    Conv2dLayer<T> conv_in;
    std::vector<ResBlock<T>> res;
    std::vector<CrossAttnBlock<T>> cross;
    std::vector<Conv2dLayer<T>> zero_out;  // one per injection site
    std::vector<Conv2dLayer<T>> downsample;

    Adapter() = default;
    Adapter(const UNetSpec& sp, Rng& rng, const std::string& name = "adapter") : spec(sp) {
        int n = static_cast<int>(spec.levels.size());
        time_mlp = TimeMlp<T>(name + ".time", spec.time_embed_dim, rng);
        conv_in = Conv2dLayer<T>(name + ".in", spec.latent_channels, spec.levels[0].first, 3, 1, rng);
        for (int i = 0; i <= n; ++i) {
            int c = i < n ? spec.levels[std::size_t(i)].first : spec.levels.back().first;
            std::string base = i < n ? name + ".down" + std::to_string(i) : name + ".mid";
            res.emplace_back(base + ".res", c, c, spec.time_embed_dim, spec.gn_groups, rng);
            cross.emplace_back(base + ".att", c, spec.d_model, spec.gn_groups, rng);
            zero_out.emplace_back(base + ".zero", c, c, 1, 1, rng, /*zero_init=*/true);
            if (i + 1 < n)
                downsample.emplace_back(name + ".down" + std::to_string(i) + ".ds", c,
                                        spec.levels[std::size_t(i + 1)].first, 3, 2, rng);
        }
    }

    void reg(ParamRegistry<T>& r) {
        time_mlp.reg(r);
        conv_in.reg(r);
        for (auto& m : res) m.reg(r);
        for (auto& m : cross) m.reg(r);
        for (auto& m : zero_out) m.reg(r);
        for (auto& m : downsample) m.reg(r);
    }

    // z_t [B, h, w, latent_c], f_s [B, Nq, d] -> one residual per site
    std::vector<int> forward(Tape<T>& tp, int z_t, const std::vector<int>& ts, int f_s) {
        int n = static_cast<int>(spec.levels.size());
        int temb = time_mlp.forward(tp, tp.input(time_embedding<T>(ts, spec.time_embed_dim)));
        int h = conv_in.forward(tp, z_t);
        std::vector<int> out;
        for (int i = 0; i <= n; ++i) {
            h = res[std::size_t(i)].forward(tp, h, temb);
            h = cross[std::size_t(i)].forward(tp, h, f_s);
            out.push_back(zero_out[std::size_t(i)].forward(tp, h));
            if (i + 1 < n) h = downsample[std::size_t(i)].forward(tp, h);
        }
        return out;
    }
};

}  // namespace unblur
