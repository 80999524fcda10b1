#pragma once

#include <string>
#include <vector>

#include "unblur/nn.hpp"

namespace unblur {

inline constexpr int kNumQueryTokens = 16;

// Closed prompt vocabulary with one learned embedding per word; the empty
// prompt maps to a single learned null token (the CFG unconditional branch).
template <typename T>
struct PromptTable {
    // word ids: 0 <null>, 1 structure, 2 blur, 3 sharp, 4 and, 5 clean, 6 image, 7 blurry
    Param<T> table;  // [8, d]
    int d = 0;

    PromptTable() = default;
    PromptTable(int d_model, Rng& rng, const std::string& name = "prompt") : d(d_model) {
        table.name = name + ".table";
        table.value = randn<T>({8, d_model}, rng, 0.02);
    }
    void reg(ParamRegistry<T>& r) { r.add(&table); }

    static std::vector<int> tokenize(const std::string& prompt) {
        if (prompt.empty()) return {0};
        if (prompt == "structure") return {1};
        if (prompt == "blur") return {2};
        if (prompt == "sharp and clean image") return {3, 4, 5, 6};
        if (prompt == "blurry image") return {7, 6};
        throw ConfigError("unknown prompt: \"" + prompt + "\"");
    }

    // [len, d] token node
    int embed(Tape<T>& tp, const std::string& prompt) { return tp.gather_rows(tp.param(table), tokenize(prompt)); }

    // null token repeated len times (dropout replacement; attention over
    // identical keys equals a single null token)
    int embed_null(Tape<T>& tp, int len) {
        return tp.gather_rows(tp.param(table), std::vector<int>(static_cast<std::size_t>(len), 0));
    }
};

// Toy stand-in for the frozen pretrained image encoder: three stride-2 convs
// turning 64x64x3 into 64 patch tokens of width d_model. Never trained.
template <typename T>
struct ImageEncoder {
    Conv2dLayer<T> c1, c2, c3;
    int d = 0;

    ImageEncoder() = default;
    ImageEncoder(int d_model, Rng& rng, const std::string& name = "img_enc")
        : c1(name + ".c1", 3, 32, 3, 2, rng), c2(name + ".c2", 32, 64, 3, 2, rng), c3(name + ".c3", 64, d_model, 3, 2, rng), d(d_model) {}
    void reg(ParamRegistry<T>& r) {
        c1.reg(r);
        c2.reg(r);
        c3.reg(r);
    }

    // img [B, 64, 64, 3] -> tokens [B, 64, d]
    int forward(Tape<T>& tp, int img) {
        const auto& s = tp.val(img).shape;
        if (s.size() != 4 || s[1] != 64 || s[2] != 64 || s[3] != 3)
            throw ArgumentError("image encoder expects [B,64,64,3], got " + shape_str(s));
        int h = tp.silu(c1.forward(tp, img));
        h = tp.silu(c2.forward(tp, h));
        h = c3.forward(tp, h);
        return tp.reshape(h, {s[0], 64, d});
    }

    Tensor<T> encode(const Tensor<T>& img) {
        Tape<T> tp(false);
        return tp.val(forward(tp, tp.input(img)));
    }
};

// Query transformer: 16 learnable queries self-attend together with the
// prompt tokens, cross-attend to image tokens (value projection starts at
// zero), feed-forward; output is the query positions.
template <typename T>
struct QFormerBlock {
    LayerNormLayer<T> ln1, ln2, ln3;
    Attention<T> self_att;
    Attention<T> cross_att;  // zero-init value projection
    FeedForward<T> ff;

    QFormerBlock() = default;
    QFormerBlock(const std::string& name, int d, Rng& rng)
        : ln1(name + ".ln1", d),
          ln2(name + ".ln2", d),
          ln3(name + ".ln3", d),
          self_att(name + ".self", d, rng),
          cross_att(name + ".cross", d, rng, /*zero_v=*/true),
          ff(name + ".ff", d, 2 * d, rng) {}
    void reg(ParamRegistry<T>& r) {
        ln1.reg(r);
        ln2.reg(r);
        ln3.reg(r);
        self_att.reg(r);
        cross_att.reg(r);
        ff.reg(r);
    }
};

template <typename T>
struct QFormer {
    Param<T> queries;  // [16, d]
    std::vector<QFormerBlock<T>> blocks;
    std::string prompt;
    int d = 0;

    QFormer() = default;
    QFormer(const std::string& name, const std::string& prompt_, int d_model, int n_blocks, Rng& rng)
        : prompt(prompt_), d(d_model) {
        queries.name = name + ".queries";
        queries.value = randn<T>({kNumQueryTokens, d_model}, rng, 0.02);
        for (int i = 0; i < n_blocks; ++i) blocks.emplace_back(name + ".blk" + std::to_string(i), d_model, rng);
    }
    void reg(ParamRegistry<T>& r) {
        r.add(&queries);
        for (auto& b : blocks) b.reg(r);
    }

    // img_tokens [B, Ni, d]; prompt_tokens [Lp, d] -> [B, 16, d]
    int forward(Tape<T>& tp, int img_tokens, int prompt_tokens) {
        int B = tp.val(img_tokens).dim(0);
        int Lp = tp.val(prompt_tokens).dim(0);
        int seq = tp.concat_mid(tp.broadcast0(tp.param(queries), B), tp.broadcast0(prompt_tokens, B));
        for (auto& blk : blocks) {
            int n1 = blk.ln1.forward(tp, seq);
            seq = tp.add(seq, blk.self_att.forward(tp, n1, n1, true));
            int q = tp.slice_mid(seq, 0, kNumQueryTokens);
            int q2 = tp.add(q, blk.cross_att.forward(tp, blk.ln2.forward(tp, q), img_tokens, true));
            seq = tp.concat_mid(q2, tp.slice_mid(seq, kNumQueryTokens, kNumQueryTokens + Lp));
            seq = tp.add(seq, blk.ff.forward(tp, blk.ln3.forward(tp, seq)));
        }
        return tp.slice_mid(seq, 0, kNumQueryTokens);
    }
};

// Extractor bundle: shared frozen image encoder feeding the structure and
// blur Q-Formers with their fixed prompts.
template <typename T>
struct Extractors {
    ImageEncoder<T> image_encoder;
    PromptTable<T> prompts;
    QFormer<T> q_s, q_b;

    Extractors() = default;
    Extractors(int d_model, int n_blocks, Rng& rng)
        : image_encoder(d_model, rng),
          prompts(d_model, rng),
          q_s("qformer_s", "structure", d_model, n_blocks, rng),
          q_b("qformer_b", "blur", d_model, n_blocks, rng) {}

    void reg(ParamRegistry<T>& r) {
        image_encoder.reg(r);
        prompts.reg(r);
        q_s.reg(r);
        q_b.reg(r);
    }

    // img_tokens node -> f_s / f_b [B, 16, d]
    int extract_structure(Tape<T>& tp, int img_tokens) {
        return q_s.forward(tp, img_tokens, prompts.embed(tp, q_s.prompt));
    }
    int extract_blur(Tape<T>& tp, int img_tokens) {
        return q_b.forward(tp, img_tokens, prompts.embed(tp, q_b.prompt));
    }

    Tensor<T> extract_structure(const Tensor<T>& img) {
        Tape<T> tp(false);
        return tp.val(extract_structure(tp, image_encoder.forward(tp, tp.input(img))));
    }
    Tensor<T> extract_blur(const Tensor<T>& img) {
        Tape<T> tp(false);
        return tp.val(extract_blur(tp, image_encoder.forward(tp, tp.input(img))));
    }
};

}  // namespace unblur
