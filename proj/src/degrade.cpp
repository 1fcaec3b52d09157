#include "cadis/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cadis/metrics.hpp"
#include "cadis/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace cadis::degrade {

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::GaussianBlur: return "gaussian_blur";
        case Kind::GaussianNoise: return "gaussian_noise";
        case Kind::Jpeg: return "jpeg";
        case Kind::Quantization: return "quantization";
    }
    return "?";
}

Kind kind_from_string(const std::string& s) {
    if (s == "gaussian_blur") return Kind::GaussianBlur;
    if (s == "gaussian_noise") return Kind::GaussianNoise;
    if (s == "jpeg") return Kind::Jpeg;
    if (s == "quantization") return Kind::Quantization;
    throw std::invalid_argument("unknown degradation kind: " + s);
}

bool kind_is_stochastic(Kind k) { return k == Kind::GaussianNoise; }

void DegradationSpec::validate() const {
    if (level < 1 || level > 5)
        throw std::invalid_argument("degradation level out of range [1,5]: " +
                                    std::to_string(level));
}

void DegradationProtocol::validate() const {
    std::size_t n = blur_sigma.size();
    if (n < 1 || noise_std.size() != n || jpeg_quality.size() != n || quant_bits.size() != n)
        throw std::invalid_argument("protocol schedules must share one length");
    for (std::size_t i = 1; i < n; ++i) {
        if (blur_sigma[i] <= blur_sigma[i - 1])
            throw std::invalid_argument("blur sigma schedule must be strictly increasing");
        if (noise_std[i] <= noise_std[i - 1])
            throw std::invalid_argument("noise std schedule must be strictly increasing");
        if (jpeg_quality[i] >= jpeg_quality[i - 1])
            throw std::invalid_argument("jpeg quality schedule must be strictly decreasing");
        if (quant_bits[i] >= quant_bits[i - 1])
            throw std::invalid_argument("quantization bits schedule must be strictly decreasing");
    }
    if (kinds.empty()) throw std::invalid_argument("protocol must list at least one kind");
}

std::string DegradationProtocol::to_json() const {
    json j;
    json ks = json::array();
    for (Kind k : kinds) ks.push_back(kind_name(k));
    j["kinds"] = ks;
    j["blur_sigma"] = blur_sigma;
    j["noise_std"] = noise_std;
    j["jpeg_quality"] = jpeg_quality;
    j["quant_bits"] = quant_bits;
    return j.dump(2);
}

DegradationProtocol DegradationProtocol::from_json(const std::string& text) {
    json j = json::parse(text);
    DegradationProtocol p;
    if (j.contains("kinds")) {
        p.kinds.clear();
        for (const auto& k : j["kinds"]) p.kinds.push_back(kind_from_string(k.get<std::string>()));
    }
    if (j.contains("blur_sigma")) p.blur_sigma = j["blur_sigma"].get<std::vector<double>>();
    if (j.contains("noise_std")) p.noise_std = j["noise_std"].get<std::vector<double>>();
    if (j.contains("jpeg_quality")) p.jpeg_quality = j["jpeg_quality"].get<std::vector<int>>();
    if (j.contains("quant_bits")) p.quant_bits = j["quant_bits"].get<std::vector<int>>();
    p.validate();
    return p;
}

DegradationProtocol DegradationProtocol::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open protocol file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void DegradationProtocol::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write protocol file: " + path);
    out << to_json() << "\n";
}

// ---- kernels ----

Image gaussian_blur(const Image& img, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double s = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        s += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= s;
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    Image tmp(img.h, img.w, img.c), out(img.h, img.w, img.c);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           img.at(y, reflect(x + i, img.w), ch);
                tmp.at(y, x, ch) = acc;
            }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           tmp.at(reflect(y + i, img.h), x, ch);
                out.at(y, x, ch) = acc;
            }
    out.clamp01();
    return out;
}

double laplacian_variance(const Image& img) {
    auto g = to_gray(img);
    int h = img.h, w = img.w;
    std::vector<double> lap;
    lap.reserve(static_cast<std::size_t>((h - 2)) * (w - 2));
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            double v = g[static_cast<std::size_t>(y - 1) * w + x] +
                       g[static_cast<std::size_t>(y + 1) * w + x] +
                       g[static_cast<std::size_t>(y) * w + x - 1] +
                       g[static_cast<std::size_t>(y) * w + x + 1] -
                       4.0 * g[static_cast<std::size_t>(y) * w + x];
            lap.push_back(v);
        }
    double mean = 0.0;
    for (double v : lap) mean += v;
    mean /= static_cast<double>(lap.size());
    double var = 0.0;
    for (double v : lap) var += (v - mean) * (v - mean);
    return var / static_cast<double>(lap.size());
}

Image apply_degradation(const Image& img, const DegradationSpec& spec,
                        const DegradationProtocol& protocol) {
    spec.validate();
    protocol.validate();
    if (spec.level > protocol.levels())
        throw std::invalid_argument("level exceeds protocol schedule length");
    int idx = spec.level - 1;
    for (double v : img.data)
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("image values must lie in [0,1]");
    switch (spec.kind) {
        case Kind::GaussianBlur:
            return gaussian_blur(img, protocol.blur_sigma[static_cast<std::size_t>(idx)]);
        case Kind::GaussianNoise: {
            double std_dev = protocol.noise_std[static_cast<std::size_t>(idx)];
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.level)));
            Image out = img;
            for (auto& v : out.data) v += rng.normal(0.0, std_dev);
            out.clamp01();
            return out;
        }
        case Kind::Jpeg: {
            Image out =
                jpeg_roundtrip(img, protocol.jpeg_quality[static_cast<std::size_t>(idx)]);
            out.clamp01();
            return out;
        }
        case Kind::Quantization: {
            int bits = protocol.quant_bits[static_cast<std::size_t>(idx)];
            double q = static_cast<double>((1 << bits) - 1);
            Image out = img;
            for (auto& v : out.data) v = std::round(v * q) / q;
            out.clamp01();
            return out;
        }
    }
    throw std::invalid_argument("unknown degradation kind");
}

// ---- manifest ----

namespace {

json record_to_json(const ManifestRecord& r) {
    json j;
    j["ref_path"] = r.ref_path;
    j["dist_path"] = r.dist_path;
    j["kind"] = kind_name(r.kind);
    j["level"] = r.level;
    j["seed"] = r.seed;
    j["split"] = r.split;
    if (r.mos)
        j["mos"] = *r.mos;
    else
        j["mos"] = nullptr;
    return j;
}

ManifestRecord record_from_json(const json& j) {
    ManifestRecord r;
    r.ref_path = j.at("ref_path").get<std::string>();
    r.dist_path = j.at("dist_path").get<std::string>();
    r.kind = kind_from_string(j.at("kind").get<std::string>());
    r.level = j.at("level").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.split = j.at("split").get<std::string>();
    if (!j.at("mos").is_null()) r.mos = j.at("mos").get<double>();
    return r;
}

}  // namespace

void Manifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        m.records.push_back(record_from_json(json::parse(line)));
    }
    return m;
}

std::vector<ManifestRecord> Manifest::split(const std::string& name) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
        if (r.split == name) out.push_back(r);
    return out;
}

std::vector<std::string> Manifest::pristine_paths() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.ref_path);
    return {s.begin(), s.end()};
}

void Manifest::validate_invariants(bool check_files) const {
    std::set<std::string> train_refs, test_refs;
    for (const auto& r : records) {
        if (r.split == "test")
            test_refs.insert(r.ref_path);
        else
            train_refs.insert(r.ref_path);
    }
    for (const auto& p : test_refs)
        if (train_refs.count(p))
            throw std::runtime_error("manifest invariant violated: pristine image " + p +
                                     " appears in both a train split and test");
    if (check_files) {
        std::map<std::string, std::pair<int, int>> ref_sizes;
        for (const auto& r : records) {
            auto it = ref_sizes.find(r.ref_path);
            if (it == ref_sizes.end()) {
                Image ref = load_image(r.ref_path);
                it = ref_sizes.emplace(r.ref_path, std::make_pair(ref.h, ref.w)).first;
            }
            Image dist = load_image(r.dist_path);
            if (dist.h != it->second.first || dist.w != it->second.second)
                throw std::runtime_error("manifest invariant violated: size mismatch for " +
                                         r.dist_path);
        }
    }
}

// ---- dataset building ----

PseudoMos pseudo_mos_from_string(const std::string& s) {
    if (s == "none") return PseudoMos::None;
    if (s == "psnr") return PseudoMos::Psnr;
    if (s == "ssim") return PseudoMos::Ssim;
    if (s == "neg_gmsd") return PseudoMos::NegGmsd;
    throw std::invalid_argument("unknown pseudo-mos mode: " + s);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

double pseudo_label(PseudoMos mode, const Image& ref, const Image& dist) {
    switch (mode) {
        case PseudoMos::Psnr: return metrics::psnr(ref, dist);
        case PseudoMos::Ssim: return metrics::ssim(ref, dist);
        case PseudoMos::NegGmsd: return -metrics::gmsd(ref, dist);
        case PseudoMos::None: break;
    }
    return 0.0;
}

}  // namespace

Manifest build_dataset(const std::string& pristine_dir, const DegradationProtocol& protocol,
                       const std::string& out_dir, std::uint64_t seed, PseudoMos pseudo) {
    protocol.validate();
    if (!fs::is_directory(pristine_dir))
        throw std::invalid_argument("pristine dir does not exist: " + pristine_dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(pristine_dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            names.push_back(e.path().filename().string());
    }
    if (names.empty())
        throw std::invalid_argument("no decodable images in pristine dir: " + pristine_dir);
    std::sort(names.begin(), names.end());
    fs::create_directories(out_dir);

    Manifest m;
    for (const auto& name : names) {
        std::string ref_path = (fs::path(pristine_dir) / name).string();
        Image ref = load_image(ref_path);
        std::string stem = fs::path(name).stem().string();
        for (Kind k : protocol.kinds) {
            for (int level = 1; level <= protocol.levels(); ++level) {
                ManifestRecord r;
                r.ref_path = ref_path;
                r.kind = k;
                r.level = level;
                r.seed = kind_is_stochastic(k)
                             ? mix_seed(mix_seed(seed, fnv1a(name)),
                                        (static_cast<std::uint64_t>(k) << 8) |
                                            static_cast<std::uint64_t>(level))
                             : 0;
                DegradationSpec spec{k, level, r.seed};
                Image dist = apply_degradation(ref, spec, protocol);
                std::string fname = stem + "__" + kind_name(k) + "_l" + std::to_string(level) +
                                    ".png";
                r.dist_path = (fs::path(out_dir) / fname).string();
                save_png(dist, r.dist_path);
                if (pseudo != PseudoMos::None) r.mos = pseudo_label(pseudo, ref, dist);
                m.records.push_back(r);
            }
        }
    }
    // Deterministic order: names are sorted, kinds/levels follow the protocol.
    m.save((fs::path(out_dir) / "manifest.jsonl").string());
    return m;
}

Manifest split_manifest(const Manifest& m, double r_pretrain, double r_finetune, double r_test,
                        std::uint64_t seed) {
    if (r_pretrain < 0 || r_finetune < 0 || r_test < 0 ||
        std::fabs(r_pretrain + r_finetune + r_test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    auto pristine = m.pristine_paths();
    std::size_t n = pristine.size();
    int nonzero = (r_pretrain > 0) + (r_finetune > 0) + (r_test > 0);
    if (static_cast<int>(n) < nonzero)
        throw std::invalid_argument("fewer pristine images than nonzero splits");
    Rng rng(seed);
    rng.shuffle(pristine.begin(), pristine.end());
    auto n_pre = static_cast<std::size_t>(std::llround(r_pretrain * static_cast<double>(n)));
    auto n_ft = static_cast<std::size_t>(std::llround(r_finetune * static_cast<double>(n)));
    if (r_pretrain > 0 && n_pre == 0) n_pre = 1;
    if (r_finetune > 0 && n_ft == 0) n_ft = 1;
    while (n_pre + n_ft > n - (r_test > 0 ? 1 : 0)) {
        if (n_pre >= n_ft && n_pre > 1)
            --n_pre;
        else if (n_ft > 1)
            --n_ft;
        else
            break;
    }
    std::map<std::string, std::string> assignment;
    for (std::size_t i = 0; i < n; ++i)
        assignment[pristine[i]] = i < n_pre ? "pretrain" : (i < n_pre + n_ft ? "finetune" : "test");
    Manifest out = m;
    for (auto& r : out.records) r.split = assignment[r.ref_path];
    out.validate_invariants();
    return out;
}

}  // namespace cadis::degrade
