#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadis/image.hpp"

namespace cadis::degrade {

enum class Kind { GaussianBlur, GaussianNoise, Jpeg, Quantization };

const char* kind_name(Kind k);
Kind kind_from_string(const std::string& s);
bool kind_is_stochastic(Kind k);

struct DegradationSpec {
    Kind kind = Kind::GaussianBlur;
    int level = 1;  // 1..5, higher is worse
    std::uint64_t seed = 0;  // noise kinds only

    void validate() const;
};

// Per-kind parameter schedules, strictly monotone in level.
struct DegradationProtocol {
    std::vector<Kind> kinds = {Kind::GaussianBlur, Kind::GaussianNoise, Kind::Jpeg,
                               Kind::Quantization};
    std::vector<double> blur_sigma = {0.8, 1.6, 2.4, 3.2, 4.0};
    std::vector<double> noise_std = {0.02, 0.05, 0.10, 0.18, 0.30};
    std::vector<int> jpeg_quality = {60, 40, 25, 15, 7};
    std::vector<int> quant_bits = {6, 5, 4, 3, 2};

    int levels() const { return static_cast<int>(blur_sigma.size()); }
    void validate() const;

    std::string to_json() const;
    static DegradationProtocol from_json(const std::string& text);
    static DegradationProtocol load(const std::string& path);
    void save(const std::string& path) const;
};

struct ManifestRecord {
    std::string ref_path;
    std::string dist_path;
    Kind kind = Kind::GaussianBlur;
    int level = 1;
    std::uint64_t seed = 0;
    std::string split = "pretrain";  // pretrain | finetune | test
    std::optional<double> mos;
};

struct Manifest {
    std::vector<ManifestRecord> records;

    void save(const std::string& path) const;
    static Manifest load(const std::string& path);

    std::vector<ManifestRecord> split(const std::string& name) const;
    std::vector<std::string> pristine_paths() const;  // unique, sorted
    // Throws if a pristine path appears in both a train split and test, or a
    // referenced file is missing / size-mismatched.
    void validate_invariants(bool check_files = false) const;
};

// Pure, deterministic in (img, spec).
Image apply_degradation(const Image& img, const DegradationSpec& spec,
                        const DegradationProtocol& protocol = {});

// Which pseudo-label to store in the mos column of synthetic datasets (the
// desk-scale stand-in for human ratings; "none" leaves mos null).
enum class PseudoMos { None, Psnr, Ssim, NegGmsd };
PseudoMos pseudo_mos_from_string(const std::string& s);

// Synthesizes every (pristine, kind, level) combination exactly once and
// writes degraded PNGs plus manifest.jsonl under out_dir.
Manifest build_dataset(const std::string& pristine_dir, const DegradationProtocol& protocol,
                       const std::string& out_dir, std::uint64_t seed,
                       PseudoMos pseudo = PseudoMos::None);

// Assigns splits at the pristine-image level.
Manifest split_manifest(const Manifest& m, double r_pretrain, double r_finetune, double r_test,
                        std::uint64_t seed);

// Helpers shared with tests.
Image gaussian_blur(const Image& img, double sigma);
double laplacian_variance(const Image& img);

}  // namespace cadis::degrade
