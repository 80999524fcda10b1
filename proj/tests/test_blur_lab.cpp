#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "unblur/blur_lab.hpp"
#include "unblur/rng.hpp"

using namespace unblur;
namespace fs = std::filesystem;

namespace {

// Independent quadruple-loop correlation oracle in double precision,
// reflect-101 padding, no noise.
Image conv_oracle(const Image& x, const BlurKernel& k) {
    int h = x.dim(0), w = x.dim(1), r = k.size / 2;
    Image y({h, w, 3});
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
        }
        return i;
    };
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int ky = 0; ky < k.size; ++ky)
                    for (int kx = 0; kx < k.size; ++kx)
                        acc += k.at(ky, kx) *
                               double(x[(std::size_t(reflect(yy + ky - r, h)) * w + reflect(xx + kx - r, w)) * 3 +
                                        std::size_t(c)]);
                y[(std::size_t(yy) * w + xx) * 3 + std::size_t(c)] = float(std::min(1.0, std::max(-1.0, acc)));
            }
    return y;
}

DomainSpec fixed_linear(double len, double ang) {
    DomainSpec d;
    d.name = "lin";
    d.family = BlurFamily::kLinearMotion;
    d.length_min = d.length_max = len;
    d.angle_min = d.angle_max = ang;
    return d;
}

}  // namespace

TEST_CASE("delta family is the 1x1 identity kernel") {
    DomainSpec d;
    d.name = "delta";
    BlurKernel k = make_kernel(d, 7);
    CHECK(k.size == 1);
    CHECK(k.k[0] == 1.0);
}

TEST_CASE("linear motion length 3 angle 0 is the uniform 3-tap row") {
    BlurKernel k = make_kernel(fixed_linear(3.0, 0.0), 123);
    REQUIRE(k.size == 3);
    for (int x = 0; x < 3; ++x) CHECK(k.at(1, x) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    for (int x = 0; x < 3; ++x) {
        CHECK(k.at(0, x) == 0.0);
        CHECK(k.at(2, x) == 0.0);
    }
}

TEST_CASE("sampled kernels stay normalized and nonnegative (per-family sweep)") {
    std::vector<DomainSpec> fams = {default_synthetic_domain(), default_target_domain()};
    DomainSpec defoc;
    defoc.name = "defocus";
    defoc.family = BlurFamily::kDefocus;
    defoc.radius_min = 0.5;
    defoc.radius_max = 4.0;
    fams.push_back(defoc);
    for (const auto& d : fams)
        for (std::uint64_t s = 0; s < 1000; ++s) {
            BlurKernel k = make_kernel(d, s);
            k.validate();  // odd size, nonneg, sums to 1 within 1e-9
        }
}

TEST_CASE("random_walk(9, 1, seed 7) kernel is a valid psf") {
    DomainSpec d;
    d.name = "walk";
    d.family = BlurFamily::kRandomWalk;
    d.walk_steps = 9;
    d.walk_sigma = 1.0;
    BlurKernel k = make_kernel(d, 7);
    k.validate();
    CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k.size <= 13);
}

TEST_CASE("apply_blur: identity, impulse response, kernel-too-large") {
    Image x = gen_scene(3, 32);
    DomainSpec d;
    d.name = "delta";
    BlurKernel delta = make_kernel(d, 0);
    Image y = apply_blur(x, delta, 0.0, 0);
    CHECK(std::memcmp(x.ptr(), y.ptr(), x.numel() * sizeof(float)) == 0);

    Image imp({9, 9, 3});
    imp.fill(0.0f);
    for (int c = 0; c < 3; ++c) imp[(4 * 9 + 4) * 3 + std::size_t(c)] = 1.0f;
    BlurKernel tap3 = make_kernel(fixed_linear(3.0, 0.0), 1);
    Image r = apply_blur(imp, tap3, 0.0, 0);
    for (int c = 0; c < 3; ++c) {
        CHECK(r[(4 * 9 + 3) * 3 + std::size_t(c)] == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(r[(4 * 9 + 4) * 3 + std::size_t(c)] == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(r[(4 * 9 + 5) * 3 + std::size_t(c)] == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(r[(4 * 9 + 2) * 3 + std::size_t(c)] == 0.0f);
    }

    BlurKernel big;
    big.size = 33;
    big.k.assign(33 * 33, 1.0 / (33.0 * 33.0));
    CHECK_THROWS_AS(apply_blur(Image({16, 16, 3}), big, 0.0, 0), ArgumentError);
}

TEST_CASE("apply_blur matches the quadruple-loop oracle on 50 random cases") {
    Rng rng(99);
    std::vector<DomainSpec> fams = {default_synthetic_domain(), default_target_domain()};
    for (int rep = 0; rep < 50; ++rep) {
        Image x = gen_scene(1000 + std::uint64_t(rep), 24);
        BlurKernel k = make_kernel(fams[std::size_t(rep % 2)], 500 + std::uint64_t(rep));
        Image mine = apply_blur(x, k, 0.0, 0);
        Image ref = conv_oracle(x, k);
        double max_err = 0.0;
        for (std::size_t i = 0; i < mine.numel(); ++i)
            max_err = std::max(max_err, std::fabs(double(mine[i]) - double(ref[i])));
        CHECK(max_err <= 1e-6);
    }
}

TEST_CASE("blur preserves the image mean for interior-supported kernels") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        Image x = gen_scene(s, 64);
        BlurKernel k = make_kernel(default_target_domain(), s);
        Image y = apply_blur(x, k, 0.0, 0);
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            mx += x[i];
            my += y[i];
        }
        CHECK(std::fabs(mx - my) / double(x.numel()) < 0.01);
    }
}

TEST_CASE("gen_scene: deterministic, in range, strong edge for seeds 0..999") {
    Image a = gen_scene(42, 64);
    Image b = gen_scene(42, 64);
    CHECK(std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0);
    for (std::uint64_t s = 0; s < 1000; ++s) {
        Image img = gen_scene(s, 64);
        float lo = 1e9f, hi = -1e9f;
        for (std::size_t i = 0; i < img.numel(); ++i) {
            lo = std::min(lo, img[i]);
            hi = std::max(hi, img[i]);
        }
        CHECK(lo >= -1.0f);
        CHECK(hi <= 1.0f);
        CHECK(max_edge_strength(img) > 0.5);
    }
}

TEST_CASE("png roundtrip preserves quantized pixels") {
    Image img = gen_scene(5, 32);
    fs::path p = fs::temp_directory_path() / "unblur_roundtrip.png";
    write_png(p.string(), img);
    Image back = read_png(p.string());
    auto q0 = quantize_image(img);
    auto q1 = quantize_image(back);
    CHECK(q0 == q1);
    fs::remove(p);
}

TEST_CASE("table of reference split statistics") {
    SplitStats g = reference_split("gopro");
    CHECK(g.sharp == 1261);
    CHECK(g.blur == 842);
    CHECK(g.synthetic == 4210);
    CHECK(g.test == 1111);
    SplitStats toy = toy_default_split();
    // toy counts mirror the reference sharp:blur and synthetic:sharp ratios
    CHECK(double(toy.sharp) / toy.blur == doctest::Approx(double(g.sharp) / g.blur).epsilon(0.05));
    CHECK(double(toy.synthetic) / toy.sharp == doctest::Approx(double(g.synthetic) / g.sharp).epsilon(0.05));
}

TEST_CASE("build_dataset: disjoint splits, re-derivable pairs, overwrite guard") {
    fs::path dir = fs::temp_directory_path() / "unblur_ds_test";
    fs::remove_all(dir);
    DatasetCounts counts{12, 8, 20, 5};
    DatasetManifest m = build_dataset(default_synthetic_domain(), default_target_domain(), counts, 77, dir.string());
    CHECK(m.by_role("sharp").size() == 12);
    CHECK(m.by_role("blur").size() == 8);
    CHECK(m.by_role("synth_pair").size() == 20);
    CHECK(m.by_role("test_pair").size() == 5);
    m.validate();

    DatasetManifest loaded = load_manifest(dir.string());
    CHECK(loaded.entries.size() == m.entries.size());
    CHECK(loaded.target_domain.family_name() == "random_walk");

    // audit: stored blurry file equals apply_blur of its stored sharp file
    // under the recorded seeds (quantization included)
    int audited = 0;
    for (const auto* e : loaded.by_role("synth_pair")) {
        if (audited >= 20) break;
        Image sharp = read_png((dir / e->sharp_file).string());
        Image expect = apply_blur(sharp, make_kernel(loaded.synthetic_domain, e->kernel_seed),
                                  loaded.synthetic_domain.noise_sigma, e->noise_seed);
        Image stored = read_png((dir / e->file).string());
        CHECK(quantize_image(expect) == quantize_image(stored));
        ++audited;
    }
    CHECK(audited == 20);

    CHECK_THROWS_AS(
        build_dataset(default_synthetic_domain(), default_target_domain(), counts, 77, dir.string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("dataset rejects identical domain names and bad counts") {
    DatasetCounts counts{2, 2, 2, 2};
    CHECK_THROWS_AS(build_dataset(default_target_domain(), default_target_domain(), counts, 1, "/tmp/x"),
                    ConfigError);
    DatasetCounts bad{0, 2, 2, 2};
    CHECK_THROWS_AS(build_dataset(default_synthetic_domain(), default_target_domain(), bad, 1, "/tmp/x"),
                    ConfigError);
}
