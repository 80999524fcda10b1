#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unblur/image_io.hpp"

namespace unblur {

// Point-spread function: K x K, K odd, nonnegative, unit sum.
struct BlurKernel {
    int size = 1;
    std::vector<double> k;  // row-major [size, size]

    double at(int y, int x) const { return k[static_cast<std::size_t>(y) * size + x]; }
    double sum() const;
    void normalize();
    void validate() const;
};

enum class BlurFamily { kDelta, kLinearMotion, kRandomWalk, kDefocus };

// Parameterized blur family plus a noise level: one "capture device".
struct DomainSpec {
    std::string name;
    BlurFamily family = BlurFamily::kDelta;
    double length_min = 0.0, length_max = 0.0;  // linear_motion
    double angle_min = 0.0, angle_max = 0.0;
    int walk_steps = 0;                          // random_walk
    double walk_sigma = 0.0;
    double radius_min = 0.0, radius_max = 0.0;   // defocus
    double noise_sigma = 0.0;

    void validate() const;
    std::string family_name() const;
};

DomainSpec domain_from_json_string(const std::string& s);
std::string domain_to_json_string(const DomainSpec& d);

// Default toy domains: synthetic supervision is linear motion; the "unknown"
// target domain is random-walk blur with read noise.
DomainSpec default_synthetic_domain();
DomainSpec default_target_domain();

BlurKernel make_kernel(const DomainSpec& spec, std::uint64_t seed);

// Channelwise 2-D correlation with reflect-101 padding, then Gaussian read
// noise, clamped to [-1,1]. Deterministic per seed.
Image apply_blur(const Image& x, const BlurKernel& k, double noise_sigma, std::uint64_t seed);

// Procedural scene: gradient background plus 3..8 anti-aliased primitives
// (rectangles, disks, capsule lines, bar gratings). Deterministic per seed;
// always contains at least one strong edge.
Image gen_scene(std::uint64_t seed, int size = 64);

// max gradient magnitude of the channel mean (forward differences)
double max_edge_strength(const Image& img);

struct SplitStats {
    int sharp = 0, blur = 0, synthetic = 0, test = 0;
};
// Reference statistics for the real datasets this protocol mirrors.
SplitStats reference_split(const std::string& dataset);
SplitStats toy_default_split();

struct ManifestEntry {
    std::string role;  // sharp | blur | synth_pair | test_pair
    int scene_id = 0;
    std::string file;        // the (blurry) image for pair roles
    std::string sharp_file;  // pair roles only
    std::string domain;
    std::uint64_t kernel_seed = 0;
    std::uint64_t noise_seed = 0;
};

struct DatasetManifest {
    int format = 1;
    std::uint64_t seed = 0;
    DomainSpec synthetic_domain;
    DomainSpec target_domain;
    int image_size = 64;
    std::vector<ManifestEntry> entries;
    std::string root;  // directory holding the files

    std::vector<const ManifestEntry*> by_role(const std::string& role) const;
    void validate() const;  // split disjointness + referential integrity
};

struct DatasetCounts {
    int sharp = 600, blur = 400, synthetic = 2000, test = 200;
};

DatasetManifest build_dataset(const DomainSpec& syn_domain, const DomainSpec& target_domain,
                              const DatasetCounts& counts, std::uint64_t seed, const std::string& out_dir,
                              bool overwrite = false, int image_size = 64);

DatasetManifest load_manifest(const std::string& dir);
void save_manifest(const DatasetManifest& m, const std::string& dir);

}  // namespace unblur
