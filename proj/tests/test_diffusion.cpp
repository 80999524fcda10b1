#include <doctest.h>

#include <cmath>
#include <cstring>

#include "unblur/diffusion.hpp"
#include "unblur/rng.hpp"

using namespace unblur;

TEST_CASE("linear schedule hand cases") {
    auto s1 = make_linear_schedule(1, 0.1, 0.1);
    CHECK(s1.betas.size() == 1);
    CHECK(s1.betas[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(s1.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-14));

    auto s2 = make_linear_schedule(2, 0.1, 0.2);
    CHECK(s2.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(s2.alpha_bars[1] == doctest::Approx(0.72).epsilon(1e-14));
}

TEST_CASE("1000-step schedule: monotone, product invariant, small terminal value") {
    auto s = make_linear_schedule(1000, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 0; t < 1000; ++t) {
        prod *= 1.0 - s.betas[std::size_t(t)];
        CHECK(std::fabs(s.alpha_bars[std::size_t(t)] - prod) <= 1e-12);
        if (t > 0) CHECK(s.alpha_bars[std::size_t(t)] < s.alpha_bars[std::size_t(t - 1)]);
    }
    CHECK(s.alpha_bars.back() < 0.01);
    // frozen from an independent double-precision product
    CHECK(s.alpha_bars.back() == doctest::Approx(4.035829765376e-05).epsilon(1e-9));
}

TEST_CASE("schedule rejects invalid ranges") {
    CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.2), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 1.0), ConfigError);
}

TEST_CASE("add_noise closed form") {
    auto s = make_linear_schedule(2, 0.1, 0.2);  // abar[1] = 0.72
    Tensor<float> z0({1});
    Tensor<float> eps({1});

    // abar = 1 limit (terminal convention t = -1): identity
    z0[0] = 0.37f;
    eps[0] = 5.0f;
    CHECK(add_noise(z0, eps, -1, s)[0] == 0.37f);

    z0[0] = 1.0f;
    eps[0] = 0.0f;
    CHECK(add_noise(z0, eps, 1, s)[0] == doctest::Approx(std::sqrt(0.72)).epsilon(1e-6));

    eps[0] = 1.0f;
    CHECK(add_noise(z0, eps, 1, s)[0] == doctest::Approx(std::sqrt(0.72) + std::sqrt(0.28)).epsilon(1e-6));

    Tensor<float> bad({2});
    CHECK_THROWS_AS(add_noise(z0, bad, 1, s), ArgumentError);
}

TEST_CASE("ddim single-step inversion recovers z0 (100 random draws)") {
    auto s = make_linear_schedule(256, 1e-4, 0.02);
    Rng rng(1234);
    for (int rep = 0; rep < 100; ++rep) {
        int t = static_cast<int>(rng.below(256));
        Tensor<float> z0 = randn<float>({4, 4, 2}, rng);
        Tensor<float> eps = randn<float>({4, 4, 2}, rng);
        Tensor<float> zt = add_noise(z0, eps, t, s);
        Tensor<float> rec = ddim_step(zt, eps, t, -1, s);
        for (std::size_t i = 0; i < rec.numel(); ++i)
            CHECK(std::fabs(rec[i] - z0[i]) <= 1e-5f);
    }
}

TEST_CASE("ddim step simplifications and argument checks") {
    auto s = make_linear_schedule(8, 0.01, 0.2);
    Rng rng(5);
    Tensor<float> z = randn<float>({3, 3}, rng);
    Tensor<float> zero({3, 3});

    int t = 5;
    Tensor<float> out = ddim_step(z, zero, t, t - 1, s);
    float ratio = std::sqrt(static_cast<float>(s.alpha_bars[4] / s.alpha_bars[5]));
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out[i] == doctest::Approx(z[i] * ratio).epsilon(1e-6));

    Tensor<float> out0 = ddim_step(zero, zero, t, t - 1, s);
    for (std::size_t i = 0; i < out0.numel(); ++i) CHECK(out0[i] == 0.0f);

    CHECK_THROWS_AS(ddim_step(z, zero, t, t, s), ArgumentError);
    CHECK_THROWS_AS(ddim_step(z, zero, t, t + 1, s), ArgumentError);
}

TEST_CASE("cfg combine collapse cases and affinity in the scale") {
    Tensor<float> u({1}), c({1});
    u[0] = 0.2f;
    c[0] = 0.4f;
    CHECK(cfg_combine(u, c, 1.0)[0] == 0.4f);
    CHECK(cfg_combine(u, c, 0.0)[0] == 0.2f);
    CHECK(cfg_combine(u, c, 7.5)[0] == doctest::Approx(1.7f).epsilon(1e-7));

    Rng rng(77);
    Tensor<float> a = randn<float>({16}, rng);
    Tensor<float> b = randn<float>({16}, rng);
    double s1 = 2.7, s2 = -1.3;
    Tensor<float> lhs1 = cfg_combine(a, b, s1);
    Tensor<float> lhs2 = cfg_combine(a, b, s2);
    Tensor<float> rhs = cfg_combine(a, b, (s1 + s2) / 2.0);
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(std::fabs(lhs1[i] + lhs2[i] - 2.0f * rhs[i]) < 1e-6f);
}

TEST_CASE("sampler: telescoping with a zero denoiser, step count, determinism") {
    const int T = 16;
    auto s = make_linear_schedule(T, 0.01, 0.1);
    Rng rng(9);
    Tensor<float> init = randn<float>({2, 2}, rng);

    int calls = 0;
    DenoiseFn<float> zero_denoiser = [&](const Tensor<float>& z, int, bool) {
        ++calls;
        Tensor<float> e(z.shape);
        return e;
    };

    Tensor<float> out = sample<float>(zero_denoiser, init.clone(), T, 1.0, s);
    CHECK(calls == T);
    double scale = std::sqrt(1.0 / s.alpha_bars[std::size_t(T - 1)]);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out[i] == doctest::Approx(init[i] * scale).epsilon(1e-5));

    calls = 0;
    Tensor<float> one = sample<float>(zero_denoiser, init.clone(), 1, 1.0, s);
    CHECK(calls == 1);  // single ddim step straight to t = -1
    double s1 = 1.0 / std::sqrt(s.alpha_bars[std::size_t(T - 1)]);
    for (std::size_t i = 0; i < one.numel(); ++i)
        CHECK(one[i] == doctest::Approx(init[i] * s1).epsilon(1e-5));

    // determinism: bitwise identical reruns
    DenoiseFn<float> affine = [&](const Tensor<float>& z, int t, bool cond) {
        Tensor<float> e(z.shape);
        for (std::size_t i = 0; i < e.numel(); ++i)
            e[i] = 0.1f * z[i] + (cond ? 0.01f : -0.02f) * static_cast<float>(t % 7);
        return e;
    };
    Tensor<float> r1 = sample<float>(affine, init.clone(), 8, 3.0, s);
    Tensor<float> r2 = sample<float>(affine, init.clone(), 8, 3.0, s);
    CHECK(std::memcmp(r1.ptr(), r2.ptr(), r1.numel() * sizeof(float)) == 0);
}

TEST_CASE("sampler flags non-finite denoiser output with step index") {
    auto s = make_linear_schedule(8, 0.01, 0.1);
    Tensor<float> init({2});
    init[0] = 1.0f;
    DenoiseFn<float> bad = [&](const Tensor<float>& z, int t, bool) {
        Tensor<float> e(z.shape);
        if (t < 4) e[0] = std::nanf("");
        return e;
    };
    CHECK_THROWS_AS(sample<float>(bad, init.clone(), 8, 1.0, s), NumericError);
}

TEST_CASE("timestep subsequences are descending, endpoint-inclusive, in range") {
    for (int T : {8, 256}) {
        for (int steps : {1, 2, 5, 8}) {
            auto ts = sample_timesteps(T - 1, steps);
            CHECK(ts.front() == T - 1);
            if (steps > 1) CHECK(ts.back() == 0);
            for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
        }
    }
    CHECK_THROWS_AS(sample_timesteps(4, 9), ArgumentError);
}
