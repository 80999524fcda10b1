#include "unblur/blur_lab.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "unblur/common.hpp"
#include "unblur/rng.hpp"

namespace unblur {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

double BlurKernel::sum() const {
    double s = 0.0;
    for (double v : k) s += v;
    return s;
}

void BlurKernel::normalize() {
    double s = sum();
    if (s <= 0.0) throw NumericError("degenerate blur kernel (zero mass)");
    for (double& v : k) v /= s;
}

void BlurKernel::validate() const {
    if (size < 1 || size % 2 == 0) throw ArgumentError("kernel size must be odd and positive");
    if (k.size() != static_cast<std::size_t>(size) * size) throw ArgumentError("kernel storage mismatch");
    for (double v : k)
        if (!(v >= 0.0)) throw ArgumentError("kernel entries must be nonnegative");
    if (std::fabs(sum() - 1.0) > 1e-9) throw ArgumentError("kernel must sum to 1");
}

void DomainSpec::validate() const {
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    switch (family) {
        case BlurFamily::kDelta:
            break;
        case BlurFamily::kLinearMotion:
            if (!(length_min >= 0.0) || length_max < length_min) throw ConfigError("bad linear_motion length range");
            if (angle_max < angle_min) throw ConfigError("bad linear_motion angle range");
            break;
        case BlurFamily::kRandomWalk:
            if (walk_steps < 1 || !(walk_sigma > 0.0)) throw ConfigError("bad random_walk parameters");
            break;
        case BlurFamily::kDefocus:
            if (!(radius_min >= 0.0) || radius_max < radius_min) throw ConfigError("bad defocus radius range");
            break;
    }
}

std::string DomainSpec::family_name() const {
    switch (family) {
        case BlurFamily::kDelta: return "delta";
        case BlurFamily::kLinearMotion: return "linear_motion";
        case BlurFamily::kRandomWalk: return "random_walk";
        case BlurFamily::kDefocus: return "defocus";
    }
    return "?";
}

static json domain_to_json(const DomainSpec& d) {
    json j;
    j["name"] = d.name;
    j["family"] = d.family_name();
    j["noise_sigma"] = d.noise_sigma;
    switch (d.family) {
        case BlurFamily::kDelta: break;
        case BlurFamily::kLinearMotion:
            j["length"] = {d.length_min, d.length_max};
            j["angle"] = {d.angle_min, d.angle_max};
            break;
        case BlurFamily::kRandomWalk:
            j["steps"] = d.walk_steps;
            j["step_sigma"] = d.walk_sigma;
            break;
        case BlurFamily::kDefocus:
            j["radius"] = {d.radius_min, d.radius_max};
            break;
    }
    return j;
}

static DomainSpec domain_from_json(const json& j) {
    DomainSpec d;
    d.name = j.at("name").get<std::string>();
    std::string fam = j.at("family").get<std::string>();
    d.noise_sigma = j.at("noise_sigma").get<double>();
    if (fam == "delta") {
        d.family = BlurFamily::kDelta;
    } else if (fam == "linear_motion") {
        d.family = BlurFamily::kLinearMotion;
        d.length_min = j.at("length")[0].get<double>();
        d.length_max = j.at("length")[1].get<double>();
        d.angle_min = j.at("angle")[0].get<double>();
        d.angle_max = j.at("angle")[1].get<double>();
    } else if (fam == "random_walk") {
        d.family = BlurFamily::kRandomWalk;
        d.walk_steps = j.at("steps").get<int>();
        d.walk_sigma = j.at("step_sigma").get<double>();
    } else if (fam == "defocus") {
        d.family = BlurFamily::kDefocus;
        d.radius_min = j.at("radius")[0].get<double>();
        d.radius_max = j.at("radius")[1].get<double>();
    } else {
        throw ConfigError("unknown blur family: " + fam);
    }
    d.validate();
    return d;
}

std::string domain_to_json_string(const DomainSpec& d) { return domain_to_json(d).dump(); }
DomainSpec domain_from_json_string(const std::string& s) { return domain_from_json(json::parse(s)); }

DomainSpec default_synthetic_domain() {
    DomainSpec d;
    d.name = "synthetic_motion";
    d.family = BlurFamily::kLinearMotion;
    d.length_min = 3.0;
    d.length_max = 9.0;
    d.angle_min = 0.0;
    d.angle_max = 3.14159265358979323846;
    d.noise_sigma = 0.01;
    return d;
}

DomainSpec default_target_domain() {
    DomainSpec d;
    d.name = "target_walk";
    d.family = BlurFamily::kRandomWalk;
    d.walk_steps = 12;
    d.walk_sigma = 1.1;
    d.noise_sigma = 0.02;
    return d;
}

namespace {

BlurKernel delta_kernel() {
    BlurKernel k;
    k.size = 1;
    k.k = {1.0};
    return k;
}

// Exact per-cell segment coverage: the segment of the sampled length through
// the kernel center, weights proportional to arc length inside each cell.
BlurKernel linear_motion_kernel(double length, double angle) {
    if (length <= 1.0) return delta_kernel();
    double c = std::cos(angle), s = std::sin(angle);
    double hx = 0.5 * length * c, hy = 0.5 * length * s;
    // cells receive mass at segment-interval midpoints, all strictly inside
    // max(|hx|,|hy|), so the support radius is ceil(h - 0.5)
    double h = std::max(std::fabs(hx), std::fabs(hy));
    int r = std::max(0, static_cast<int>(std::ceil(h - 0.5 - 1e-12)));
    BlurKernel k;
    k.size = 2 * r + 1;
    k.k.assign(static_cast<std::size_t>(k.size) * k.size, 0.0);

    // crossing parameters with the half-integer cell grid
    std::vector<double> ts = {0.0, 1.0};
    auto add_crossings = [&](double p0, double p1) {
        double lo = std::min(p0, p1), hi = std::max(p0, p1);
        for (double b = std::floor(lo - 0.5) + 0.5; b <= hi; b += 1.0) {
            if (b <= lo || b >= hi) continue;
            ts.push_back((b - p0) / (p1 - p0));
        }
    };
    if (std::fabs(c) > 1e-12) add_crossings(-hx, hx);
    if (std::fabs(s) > 1e-12) add_crossings(-hy, hy);
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        double t0 = ts[i], t1 = ts[i + 1];
        if (t1 - t0 <= 1e-15) continue;
        double tm = 0.5 * (t0 + t1);
        int x = static_cast<int>(std::lround(-hx + tm * 2.0 * hx));
        int y = static_cast<int>(std::lround(-hy + tm * 2.0 * hy));
        x = std::clamp(x, -r, r);
        y = std::clamp(y, -r, r);
        k.k[static_cast<std::size_t>(y + r) * k.size + (x + r)] += (t1 - t0) * length;
    }
    k.normalize();
    return k;
}

BlurKernel random_walk_kernel(int steps, double sigma, Rng& rng) {
    const int r_max = 6;
    std::vector<std::pair<double, double>> pts;
    double x = 0.0, y = 0.0;
    pts.emplace_back(x, y);
    for (int i = 1; i < steps; ++i) {
        x += rng.normal() * sigma;
        y += rng.normal() * sigma;
        x = std::clamp(x, -(r_max - 0.501), r_max - 0.501);
        y = std::clamp(y, -(r_max - 0.501), r_max - 0.501);
        pts.emplace_back(x, y);
    }
    // recenter at the centroid so the blur does not translate the image
    double mx = 0.0, my = 0.0;
    for (auto& p : pts) {
        mx += p.first;
        my += p.second;
    }
    mx /= pts.size();
    my /= pts.size();
    for (auto& p : pts) {
        p.first = std::clamp(p.first - mx, -(r_max - 0.501), r_max - 0.501);
        p.second = std::clamp(p.second - my, -(r_max - 0.501), r_max - 0.501);
    }
    double ext = 0.0;
    for (auto& p : pts) ext = std::max({ext, std::fabs(p.first), std::fabs(p.second)});
    int r = std::min(r_max, static_cast<int>(std::ceil(ext + 0.5)));
    BlurKernel k;
    k.size = 2 * r + 1;
    k.k.assign(static_cast<std::size_t>(k.size) * k.size, 0.0);
    double w = 1.0 / steps;
    for (auto& p : pts) {  // bilinear splat
        double fx = p.first + r, fy = p.second + r;
        int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
        double ax = fx - x0, ay = fy - y0;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                int xx = std::clamp(x0 + dx, 0, k.size - 1);
                int yy = std::clamp(y0 + dy, 0, k.size - 1);
                double wt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
                k.k[static_cast<std::size_t>(yy) * k.size + xx] += w * wt;
            }
    }
    k.normalize();
    return k;
}

BlurKernel defocus_kernel(double radius) {
    if (radius < 0.5) return delta_kernel();
    int r = static_cast<int>(std::ceil(radius + 0.5));
    BlurKernel k;
    k.size = 2 * r + 1;
    k.k.assign(static_cast<std::size_t>(k.size) * k.size, 0.0);
    const int ss = 4;  // supersampling per axis
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            double cov = 0.0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    double px = x - 0.5 + (sx + 0.5) / ss;
                    double py = y - 0.5 + (sy + 0.5) / ss;
                    if (px * px + py * py <= radius * radius) cov += 1.0;
                }
            k.k[static_cast<std::size_t>(y + r) * k.size + (x + r)] = cov;
        }
    k.normalize();
    return k;
}

}  // namespace

BlurKernel make_kernel(const DomainSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed_chain(seed, hash_str("kernel")));
    BlurKernel k;
    switch (spec.family) {
        case BlurFamily::kDelta:
            k = delta_kernel();
            break;
        case BlurFamily::kLinearMotion: {
            double len = spec.length_min + (spec.length_max - spec.length_min) * rng.uniform();
            double ang = spec.angle_min + (spec.angle_max - spec.angle_min) * rng.uniform();
            k = linear_motion_kernel(len, ang);
            break;
        }
        case BlurFamily::kRandomWalk:
            k = random_walk_kernel(spec.walk_steps, spec.walk_sigma, rng);
            break;
        case BlurFamily::kDefocus: {
            double rad = spec.radius_min + (spec.radius_max - spec.radius_min) * rng.uniform();
            k = defocus_kernel(rad);
            break;
        }
    }
    k.validate();
    return k;
}

// Fixed-length/angle variant used by tests and the blur-transfer demo.
Image apply_blur(const Image& x, const BlurKernel& k, double noise_sigma, std::uint64_t seed) {
    if (x.rank() != 3 || x.dim(2) != 3) throw ArgumentError("apply_blur: expected [H,W,3]");
    int h = x.dim(0), w = x.dim(1);
    if (k.size > h || k.size > w) throw ArgumentError("apply_blur: kernel larger than image");
    int r = k.size / 2;
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
                for (int ky = -r; ky <= r; ++ky)
                    for (int kx = -r; kx <= r; ++kx) {
                        double kv = k.at(ky + r, kx + r);
                        if (kv == 0.0) continue;
                        int sy = reflect(yy + ky, h);
                        int sx = reflect(xx + kx, w);
                        acc += kv * x[(static_cast<std::size_t>(sy) * w + sx) * 3 + static_cast<std::size_t>(c)];
                    }
                y[(static_cast<std::size_t>(yy) * w + xx) * 3 + static_cast<std::size_t>(c)] = static_cast<float>(acc);
            }
    if (noise_sigma > 0.0) {
        Rng rng(seed_chain(seed, hash_str("readnoise")));
        for (std::size_t i = 0; i < y.numel(); ++i)
            y[i] = static_cast<float>(y[i] + noise_sigma * rng.normal());
    }
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::min(1.0f, std::max(-1.0f, y[i]));
    return y;
}

// ---------------------------------------------------------------------------
// procedural scenes
// ---------------------------------------------------------------------------

namespace {

struct Color {
    float r, g, b;
};

Color rand_color(Rng& rng, float lo = -0.95f, float hi = 0.95f) {
    auto u = [&] { return static_cast<float>(lo + (hi - lo) * rng.uniform()); };
    return {u(), u(), u()};
}

void blend(Image& img, int y, int x, const Color& c, float cov) {
    if (cov <= 0.0f) return;
    std::size_t off = (static_cast<std::size_t>(y) * img.dim(1) + x) * 3;
    img[off] = img[off] * (1.0f - cov) + c.r * cov;
    img[off + 1] = img[off + 1] * (1.0f - cov) + c.g * cov;
    img[off + 2] = img[off + 2] * (1.0f - cov) + c.b * cov;
}

float coverage(float sdf) { return std::clamp(0.5f - sdf, 0.0f, 1.0f); }

}  // namespace

Image gen_scene(std::uint64_t seed, int size) {
    Rng rng(seed_chain(seed, hash_str("scene")));
    Image img({size, size, 3});

    // gradient background
    Color c0 = rand_color(rng, -0.8f, 0.8f);
    Color c1 = rand_color(rng, -0.8f, 0.8f);
    double ang = rng.uniform() * 6.283185307179586;
    double dx = std::cos(ang), dy = std::sin(ang);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = ((x * dx + y * dy) / size + 1.0) / 2.0;
            std::size_t off = (static_cast<std::size_t>(y) * size + x) * 3;
            img[off] = static_cast<float>(c0.r + (c1.r - c0.r) * t);
            img[off + 1] = static_cast<float>(c0.g + (c1.g - c0.g) * t);
            img[off + 2] = static_cast<float>(c0.b + (c1.b - c0.b) * t);
        }
    float bg_mean = 0.0f;
    for (std::size_t i = 0; i < img.numel(); ++i) bg_mean += img[i];
    bg_mean /= static_cast<float>(img.numel());

    (void)bg_mean;
    int n_prims = 3 + static_cast<int>(rng.below(6));  // 3..8
    for (int p = 0; p < n_prims; ++p) {
        Color col = rand_color(rng);
        int kind = static_cast<int>(rng.below(4));
        float cx = static_cast<float>(rng.uniform() * size);
        float cy = static_cast<float>(rng.uniform() * size);
        switch (kind) {
            case 0: {  // disk
                float rad = static_cast<float>(3.0 + rng.uniform() * size / 4.0);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - rad;
                        blend(img, y, x, col, coverage(d));
                    }
                break;
            }
            case 1: {  // axis-aligned rectangle
                float hw = static_cast<float>(2.0 + rng.uniform() * size / 4.0);
                float hh = static_cast<float>(2.0 + rng.uniform() * size / 4.0);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        float qx = std::fabs(x - cx) - hw;
                        float qy = std::fabs(y - cy) - hh;
                        float d = std::max(qx, qy);
                        blend(img, y, x, col, coverage(d));
                    }
                break;
            }
            case 2: {  // capsule line
                double la = rng.uniform() * 6.283185307179586;
                float len = static_cast<float>(5.0 + rng.uniform() * size / 2.0);
                float half = static_cast<float>(0.7 + rng.uniform() * 2.0);
                float ex = static_cast<float>(std::cos(la)) * len / 2.0f;
                float ey = static_cast<float>(std::sin(la)) * len / 2.0f;
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        float px = x - cx, py = y - cy;
                        float tproj = std::clamp((px * ex + py * ey) / (ex * ex + ey * ey + 1e-9f), -1.0f, 1.0f);
                        float ddx = px - tproj * ex, ddy = py - tproj * ey;
                        float d = std::sqrt(ddx * ddx + ddy * ddy) - half;
                        blend(img, y, x, col, coverage(d));
                    }
                break;
            }
            default: {  // bar grating inside a disk
                float rad = static_cast<float>(4.0 + rng.uniform() * size / 4.0);
                double ga = rng.uniform() * 3.141592653589793;
                double freq = 0.4 + rng.uniform() * 1.2;
                Color col2 = rand_color(rng);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - rad;
                        float cov = coverage(d);
                        if (cov <= 0.0f) continue;
                        double phase = (x * std::cos(ga) + y * std::sin(ga)) * freq;
                        float m = 0.5f + 0.5f * static_cast<float>(std::sin(phase));
                        Color mixc = {col.r + (col2.r - col.r) * m, col.g + (col2.g - col.g) * m,
                                      col.b + (col2.b - col.b) * m};
                        blend(img, y, x, mixc, cov);
                    }
                break;
            }
        }
    }
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], -1.0f, 1.0f);
    return img;
}

double max_edge_strength(const Image& img) {
    int h = img.dim(0), w = img.dim(1);
    auto lum = [&](int y, int x) {
        std::size_t off = (static_cast<std::size_t>(y) * w + x) * 3;
        return (double(img[off]) + img[off + 1] + img[off + 2]) / 3.0;
    };
    double best = 0.0;
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
            double gx = lum(y, x + 1) - lum(y, x);
            double gy = lum(y + 1, x) - lum(y, x);
            best = std::max(best, std::sqrt(gx * gx + gy * gy));
        }
    return best;
}

// ---------------------------------------------------------------------------
// dataset protocol
// ---------------------------------------------------------------------------

SplitStats reference_split(const std::string& dataset) {
    if (dataset == "gopro") return {1261, 842, 4210, 1111};
    if (dataset == "reds") return {14400, 9600, 48000, 3000};
    if (dataset == "realblur-j" || dataset == "realblur-r") return {2064, 1375, 6875, 1474};
    throw ConfigError("unknown reference dataset: " + dataset);
}

SplitStats toy_default_split() { return {600, 400, 2000, 200}; }

std::vector<const ManifestEntry*> DatasetManifest::by_role(const std::string& role) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.role == role) out.push_back(&e);
    return out;
}

void DatasetManifest::validate() const {
    std::set<int> sharp_ids, blur_ids, test_ids;
    std::set<std::string> sharp_files;
    for (const auto& e : entries) {
        if (e.role == "sharp") {
            sharp_ids.insert(e.scene_id);
            sharp_files.insert(e.file);
        } else if (e.role == "blur") {
            blur_ids.insert(e.scene_id);
        } else if (e.role == "test_pair") {
            test_ids.insert(e.scene_id);
        }
    }
    for (const auto& e : entries) {
        if (e.role == "synth_pair") {
            if (sharp_ids.count(e.scene_id) == 0)
                throw IntegrityError("synthetic pair references unknown sharp scene " + std::to_string(e.scene_id));
            if (sharp_files.count(e.sharp_file) == 0)
                throw IntegrityError("synthetic pair references unknown sharp file " + e.sharp_file);
        }
    }
    for (int id : blur_ids)
        if (sharp_ids.count(id)) throw IntegrityError("sharp/blur scene sets overlap at id " + std::to_string(id));
    for (int id : test_ids)
        if (sharp_ids.count(id) || blur_ids.count(id))
            throw IntegrityError("test scene leaks into training splits: " + std::to_string(id));
}

static std::string pad_id(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", v);
    return buf;
}

DatasetManifest build_dataset(const DomainSpec& syn_domain, const DomainSpec& target_domain,
                              const DatasetCounts& counts, std::uint64_t seed, const std::string& out_dir,
                              bool overwrite, int image_size) {
    if (counts.sharp <= 0 || counts.blur <= 0 || counts.synthetic <= 0 || counts.test <= 0)
        throw ConfigError("dataset counts must be positive");
    if (syn_domain.name == target_domain.name)
        throw ConfigError("synthetic and target domains must have distinct names");
    syn_domain.validate();
    target_domain.validate();

    fs::path root(out_dir);
    if (fs::exists(root / "manifest.json") && !overwrite)
        throw IoError("output dir already holds a dataset (pass overwrite): " + out_dir);
    fs::create_directories(root / "sharp");
    fs::create_directories(root / "blur");
    fs::create_directories(root / "synth");
    fs::create_directories(root / "test");

    DatasetManifest m;
    m.seed = seed;
    m.synthetic_domain = syn_domain;
    m.target_domain = target_domain;
    m.image_size = image_size;
    m.root = out_dir;

    // scene id blocks keep the splits disjoint by construction
    const int kBlurBase = 100000, kTestBase = 200000;

    std::vector<std::string> sharp_files(static_cast<std::size_t>(counts.sharp));
    for (int i = 0; i < counts.sharp; ++i) {
        Image img = gen_scene(seed_chain(seed, hash_str("sharp"), i), image_size);
        std::string file = "sharp/s" + pad_id(i) + ".png";
        write_png((root / file).string(), img);
        sharp_files[static_cast<std::size_t>(i)] = file;
        m.entries.push_back({"sharp", i, file, "", "none", 0, 0});
    }

    for (int i = 0; i < counts.blur; ++i) {
        int sid = kBlurBase + i;
        Image scene = gen_scene(seed_chain(seed, hash_str("blurscene"), i), image_size);
        std::uint64_t ks = seed_chain(seed, hash_str("blurker"), i);
        std::uint64_t ns = seed_chain(seed, hash_str("blurnoise"), i);
        Image y = apply_blur(scene, make_kernel(target_domain, ks), target_domain.noise_sigma, ns);
        std::string file = "blur/b" + pad_id(i) + ".png";
        write_png((root / file).string(), y);
        m.entries.push_back({"blur", sid, file, "", target_domain.name, ks, ns});
    }

    Rng pick(seed_chain(seed, hash_str("pairpick")));
    for (int i = 0; i < counts.synthetic; ++i) {
        int sid = static_cast<int>(pick.below(static_cast<std::uint64_t>(counts.sharp)));
        // blur the quantized file content so the pair can be re-derived from disk
        Image sharp = read_png((root / sharp_files[static_cast<std::size_t>(sid)]).string());
        std::uint64_t ks = seed_chain(seed, hash_str("synker"), i);
        std::uint64_t ns = seed_chain(seed, hash_str("synnoise"), i);
        Image y = apply_blur(sharp, make_kernel(syn_domain, ks), syn_domain.noise_sigma, ns);
        std::string file = "synth/p" + pad_id(i) + ".png";
        write_png((root / file).string(), y);
        m.entries.push_back({"synth_pair", sid, file, sharp_files[static_cast<std::size_t>(sid)], syn_domain.name, ks, ns});
    }

    for (int i = 0; i < counts.test; ++i) {
        int sid = kTestBase + i;
        Image scene = gen_scene(seed_chain(seed, hash_str("testscene"), i), image_size);
        std::string sfile = "test/t" + pad_id(i) + "_sharp.png";
        write_png((root / sfile).string(), scene);
        Image sharp_q = read_png((root / sfile).string());
        std::uint64_t ks = seed_chain(seed, hash_str("testker"), i);
        std::uint64_t ns = seed_chain(seed, hash_str("testnoise"), i);
        Image y = apply_blur(sharp_q, make_kernel(target_domain, ks), target_domain.noise_sigma, ns);
        std::string file = "test/t" + pad_id(i) + "_blur.png";
        write_png((root / file).string(), y);
        m.entries.push_back({"test_pair", sid, file, sfile, target_domain.name, ks, ns});
    }

    m.validate();
    save_manifest(m, out_dir);
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& dir) {
    json j;
    j["format"] = m.format;
    j["seed"] = m.seed;
    j["image_size"] = m.image_size;
    j["domains"]["synthetic"] = domain_to_json(m.synthetic_domain);
    j["domains"]["target"] = domain_to_json(m.target_domain);
    json entries = json::array();
    for (const auto& e : m.entries) {
        json je;
        je["role"] = e.role;
        je["scene_id"] = e.scene_id;
        je["file"] = e.file;
        je["domain"] = e.domain;
        je["kernel_seed"] = e.kernel_seed;
        je["noise_seed"] = e.noise_seed;
        if (!e.sharp_file.empty()) je["sharp_file"] = e.sharp_file;
        entries.push_back(je);
    }
    j["entries"] = std::move(entries);
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << j.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("no manifest.json in " + dir);
    json j = json::parse(f, nullptr, /*allow_exceptions=*/true);
    DatasetManifest m;
    m.format = j.at("format").get<int>();
    if (m.format != 1) throw IntegrityError("unsupported manifest format " + std::to_string(m.format));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.at("image_size").get<int>();
    m.synthetic_domain = domain_from_json(j.at("domains").at("synthetic"));
    m.target_domain = domain_from_json(j.at("domains").at("target"));
    m.root = dir;
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.role = je.at("role").get<std::string>();
        e.scene_id = je.at("scene_id").get<int>();
        e.file = je.at("file").get<std::string>();
        e.domain = je.at("domain").get<std::string>();
        e.kernel_seed = je.at("kernel_seed").get<std::uint64_t>();
        e.noise_seed = je.at("noise_seed").get<std::uint64_t>();
        if (je.contains("sharp_file")) e.sharp_file = je.at("sharp_file").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

}  // namespace unblur
