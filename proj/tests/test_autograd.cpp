#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "unblur/autograd.hpp"
#include "unblur/rng.hpp"

using namespace unblur;
using testutil::gradcheck;

namespace {

Param<double> make_param(const std::string& name, std::vector<int> shape, Rng& rng, double sd = 0.5) {
    Param<double> p;
    p.name = name;
    p.value = randn<double>(std::move(shape), rng, sd);
    p.trainable = true;
    return p;
}

}  // namespace

TEST_CASE("autograd: elementwise and reduction ops match finite differences") {
    Rng rng(101);
    auto a = make_param("a", {3, 5}, rng);
    auto b = make_param("b", {3, 5}, rng);
    auto bias = make_param("bias", {5}, rng);

    auto res = gradcheck(
        [&](Tape<double>& tp, int& loss) {
            int ia = tp.param(a);
            int ib = tp.param(b);
            int ibias = tp.param(bias);
            int x = tp.add(ia, tp.mul(ib, tp.silu(ia)));
            x = tp.add_bias(x, ibias);
            x = tp.sub(x, tp.scale(ib, 0.3));
            x = tp.exp(tp.scale(x, 0.1));
            x = tp.add_const(x, -1.0);
            loss = tp.sum_all(tp.mul(x, x));
        },
        {&a, &b, &bias});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("autograd: matmul family matches finite differences") {
    Rng rng(202);
    auto a = make_param("a", {2, 4, 6}, rng);   // batched rows
    auto w = make_param("w", {6, 3}, rng);
    auto bt = make_param("bt", {5, 6}, rng);    // shared nt operand
    auto kv = make_param("kv", {2, 5, 6}, rng); // batched nt operand
    auto v = make_param("v", {2, 5, 3}, rng);

    auto res = gradcheck(
        [&](Tape<double>& tp, int& loss) {
            int ia = tp.param(a);
            int proj = tp.matmul(ia, tp.param(w));                  // [2,4,3]
            int scores = tp.matmul_nt(ia, tp.param(bt), 0.408);     // [2,4,5]
            int bscores = tp.bmm_nt(ia, tp.param(kv), 0.5);         // [2,4,5]
            int attn = tp.softmax(tp.add(scores, bscores));
            int out = tp.bmm_nn(attn, tp.param(v));                 // [2,4,3]
            loss = tp.sq_error_mean(out, proj);
        },
        {&a, &w, &bt, &kv, &v});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("autograd: normalization ops match finite differences") {
    Rng rng(303);
    auto x = make_param("x", {2, 3, 3, 8}, rng);
    auto gamma = make_param("gamma", {8}, rng, 0.2);
    auto beta = make_param("beta", {8}, rng, 0.2);
    for (std::size_t i = 0; i < gamma.value.numel(); ++i) gamma.value[i] += 1.0;

    auto res = gradcheck(
        [&](Tape<double>& tp, int& loss) {
            int ix = tp.param(x);
            int g = tp.group_norm(ix, tp.param(gamma), tp.param(beta), 4);
            int flat = tp.reshape(g, {2 * 9, 8});
            int l = tp.layer_norm(flat, tp.param(gamma), tp.param(beta));
            loss = tp.sum_all(tp.mul(l, tp.silu(flat)));
        },
        {&x, &gamma, &beta});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("autograd: conv2d and upsample match finite differences") {
    Rng rng(404);
    auto x = make_param("x", {2, 5, 5, 3}, rng);
    auto w = make_param("w", {4, 3 * 3 * 3}, rng, 0.3);
    auto b = make_param("b", {4}, rng, 0.1);
    auto w2 = make_param("w2", {2, 3 * 3 * 4}, rng, 0.3);
    auto b2 = make_param("b2", {2}, rng, 0.1);

    auto res = gradcheck(
        [&](Tape<double>& tp, int& loss) {
            int ix = tp.param(x);
            int c1 = tp.conv2d(ix, tp.param(w), tp.param(b), 3, 1, 1);   // [2,5,5,4]
            int a1 = tp.silu(c1);
            int c2 = tp.conv2d(a1, tp.param(w2), tp.param(b2), 3, 2, 1); // [2,3,3,2]
            int up = tp.upsample2x(c2);                                  // [2,6,6,2]
            loss = tp.scale(tp.sum_all(tp.mul(up, up)), 0.5);
        },
        {&x, &w, &b, &w2, &b2});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("autograd: shape ops match finite differences") {
    Rng rng(505);
    auto a = make_param("a", {4, 6}, rng);
    auto tbl = make_param("tbl", {7, 6}, rng);
    auto tvec = make_param("tvec", {2, 6}, rng);

    auto res = gradcheck(
        [&](Tape<double>& tp, int& loss) {
            int ia = tp.param(a);
            int emb = tp.gather_rows(tp.param(tbl), {3, 0, 3, 6});       // [4,6]
            int ba = tp.broadcast0(ia, 2);                                // [2,4,6]
            int be = tp.broadcast0(emb, 2);
            int cat = tp.concat_mid(ba, be);                              // [2,8,6]
            int mid = tp.slice_mid(cat, 2, 6);                            // [2,4,6]
            int rows = tp.add_rows(mid, tp.param(tvec));
            int last = tp.slice_last(rows, 1, 5);                         // [2,4,4]
            loss = tp.sum_all(tp.mul(last, last));
        },
        {&a, &tbl, &tvec});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("autograd: frozen params receive no gradient") {
    Rng rng(606);
    auto a = make_param("a", {3, 3}, rng);
    auto w = make_param("w", {3, 3}, rng);
    w.trainable = false;

    Tape<double> tp(true);
    int ia = tp.param(a);
    int iw = tp.param(w);
    int y = tp.matmul(ia, iw);
    int loss = tp.sum_all(tp.mul(y, y));
    tp.backward(loss);
    CHECK(!tp.param_grad(a).empty());
    CHECK(tp.param_grad(w).empty());
}

TEST_CASE("autograd: softmax rows sum to one") {
    Rng rng(707);
    Tape<float> tp(false);
    int x = tp.input(randn<float>({17, 9}, rng, 3.0));
    int s = tp.softmax(x);
    const auto& v = tp.val(s);
    for (int r = 0; r < 17; ++r) {
        float sum = 0.0f;
        for (int c = 0; c < 9; ++c) sum += v[std::size_t(r) * 9 + c];
        CHECK(std::fabs(sum - 1.0f) < 1e-6f);
    }
}
