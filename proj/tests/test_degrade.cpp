#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cadis/degrade.hpp"
#include "cadis/image.hpp"
#include "cadis/rng.hpp"

using namespace cadis;
namespace fs = std::filesystem;

namespace {

Image textured_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = 0.5 + 0.3 * std::sin(0.4 * x + c) * std::cos(0.3 * y) +
                           0.15 * rng.uniform(-1.0, 1.0);
                img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
    return img;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("spec and protocol validation") {
    degrade::DegradationSpec s;
    CHECK_NOTHROW(s.validate());
    s.level = 6;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.level = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    degrade::DegradationProtocol p;
    CHECK_NOTHROW(p.validate());
    p.blur_sigma = {2.0, 1.0, 3.0, 4.0, 5.0};  // not monotone
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);

    degrade::DegradationProtocol q;
    auto round_trip = degrade::DegradationProtocol::from_json(q.to_json());
    CHECK(round_trip.blur_sigma == q.blur_sigma);
    CHECK(round_trip.jpeg_quality == q.jpeg_quality);

    CHECK(degrade::kind_from_string("jpeg") == degrade::Kind::Jpeg);
    CHECK_THROWS_AS(degrade::kind_from_string("bokeh"), std::invalid_argument);
    CHECK(degrade::kind_is_stochastic(degrade::Kind::GaussianNoise));
    CHECK_FALSE(degrade::kind_is_stochastic(degrade::Kind::GaussianBlur));
}

TEST_CASE("apply_degradation basic contracts") {
    Image img = textured_image(32, 1);

    SUBCASE("shape, range, determinism") {
        for (auto kind : {degrade::Kind::GaussianBlur, degrade::Kind::GaussianNoise,
                          degrade::Kind::Jpeg, degrade::Kind::Quantization})
            for (int level : {1, 3, 5}) {
                degrade::DegradationSpec s{kind, level, 42};
                Image out = degrade::apply_degradation(img, s);
                CHECK(out.h == img.h);
                CHECK(out.w == img.w);
                CHECK(out.c == img.c);
                for (double v : out.data) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                Image again = degrade::apply_degradation(img, s);
                CHECK(out.data == again.data);
            }
    }

    SUBCASE("blur of a constant image is the constant") {
        Image flat(16, 16, 3);
        for (auto& v : flat.data) v = 0.37;
        for (int level = 1; level <= 5; ++level) {
            Image out = degrade::apply_degradation(
                flat, {degrade::Kind::GaussianBlur, level, 0});
            for (double v : out.data) CHECK(std::fabs(v - 0.37) < 1e-6);
        }
    }

    SUBCASE("8-bit quantization of 8-bit data is the identity") {
        Image eight(8, 8, 1);
        Rng rng(5);
        for (auto& v : eight.data) v = static_cast<double>(rng.below(256)) / 255.0;
        degrade::DegradationProtocol p;
        p.quant_bits = {8, 7, 6, 5, 4};
        Image out = degrade::apply_degradation(eight, {degrade::Kind::Quantization, 1, 0}, p);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(eight.data[i]).epsilon(1e-12));
    }

    SUBCASE("quantization is idempotent") {
        degrade::DegradationSpec s{degrade::Kind::Quantization, 3, 0};
        Image once = degrade::apply_degradation(img, s);
        Image twice = degrade::apply_degradation(once, s);
        CHECK(once.data == twice.data);
    }

    SUBCASE("input outside [0,1] rejected") {
        Image bad = img;
        bad.data[0] = 1.5;
        CHECK_THROWS_AS(degrade::apply_degradation(bad, {degrade::Kind::GaussianBlur, 1, 0}),
                        std::invalid_argument);
    }
}

TEST_CASE("monotonicity over levels") {
    Image img = textured_image(48, 2);

    SUBCASE("noise MSE strictly increasing, 10-seed average") {
        double prev = -1.0;
        for (int level = 1; level <= 5; ++level) {
            double acc = 0;
            for (std::uint64_t seed = 0; seed < 10; ++seed)
                acc += image_mse(img, degrade::apply_degradation(
                                          img, {degrade::Kind::GaussianNoise, level, seed}));
            acc /= 10;
            CHECK(acc > prev);
            prev = acc;
        }
    }

    SUBCASE("blur reduces Laplacian variance monotonically") {
        double prev = degrade::laplacian_variance(img);
        for (int level = 1; level <= 5; ++level) {
            double lv = degrade::laplacian_variance(
                degrade::apply_degradation(img, {degrade::Kind::GaussianBlur, level, 0}));
            CHECK(lv <= prev);
            prev = lv;
        }
    }

    SUBCASE("noise kinds differ by seed, deterministic per seed") {
        Image a = degrade::apply_degradation(img, {degrade::Kind::GaussianNoise, 3, 1});
        Image b = degrade::apply_degradation(img, {degrade::Kind::GaussianNoise, 3, 2});
        CHECK(a.data != b.data);
    }
}

TEST_CASE("build_dataset, split_manifest, manifest io") {
    TempDir tmp("cadis_degrade_test");
    fs::path pristine = tmp.path / "pristine";
    fs::create_directories(pristine);
    for (int i = 0; i < 4; ++i)
        save_png(textured_image(32, static_cast<std::uint64_t>(i)),
                 (pristine / ("img" + std::to_string(i) + ".png")).string());

    degrade::DegradationProtocol protocol;
    protocol.kinds = {degrade::Kind::GaussianBlur, degrade::Kind::GaussianNoise};

    SUBCASE("cardinality and determinism") {
        auto m1 = degrade::build_dataset(pristine.string(), protocol,
                                         (tmp.path / "d1").string(), 11);
        CHECK(m1.records.size() == 4 * 2 * 5);
        auto m2 = degrade::build_dataset(pristine.string(), protocol,
                                         (tmp.path / "d2").string(), 11);
        CHECK(read_file((tmp.path / "d1" / "manifest.jsonl").string()) !=  "");
        // same seed: identical records except for the out_dir prefix
        REQUIRE(m1.records.size() == m2.records.size());
        for (std::size_t i = 0; i < m1.records.size(); ++i) {
            CHECK(m1.records[i].kind == m2.records[i].kind);
            CHECK(m1.records[i].level == m2.records[i].level);
            CHECK(m1.records[i].seed == m2.records[i].seed);
            CHECK(fs::path(m1.records[i].dist_path).filename() ==
                  fs::path(m2.records[i].dist_path).filename());
            CHECK(read_file(m1.records[i].dist_path) == read_file(m2.records[i].dist_path));
        }

        // different seed: same count, different noise-kind bytes
        auto m3 = degrade::build_dataset(pristine.string(), protocol,
                                         (tmp.path / "d3").string(), 12);
        CHECK(m3.records.size() == m1.records.size());
        bool any_noise_differs = false;
        for (std::size_t i = 0; i < m1.records.size(); ++i)
            if (m1.records[i].kind == degrade::Kind::GaussianNoise &&
                read_file(m1.records[i].dist_path) != read_file(m3.records[i].dist_path))
                any_noise_differs = true;
        CHECK(any_noise_differs);
    }

    SUBCASE("split assignment and invariants") {
        auto m = degrade::build_dataset(pristine.string(), protocol,
                                        (tmp.path / "ds").string(), 3);
        auto s1 = degrade::split_manifest(m, 0.5, 0.25, 0.25, 9);
        auto s2 = degrade::split_manifest(m, 0.5, 0.25, 0.25, 9);
        for (std::size_t i = 0; i < s1.records.size(); ++i)
            CHECK(s1.records[i].split == s2.records[i].split);
        CHECK_NOTHROW(s1.validate_invariants(true));

        // all distortions of one pristine image share a split
        std::map<std::string, std::set<std::string>> by_ref;
        for (const auto& r : s1.records) by_ref[r.ref_path].insert(r.split);
        for (const auto& [ref, splits] : by_ref) CHECK(splits.size() == 1);

        CHECK_THROWS_AS(degrade::split_manifest(m, 0.5, 0.25, 0.1, 9), std::invalid_argument);

        // round-trip through jsonl
        fs::path mpath = tmp.path / "m.jsonl";
        s1.save(mpath.string());
        auto loaded = degrade::Manifest::load(mpath.string());
        REQUIRE(loaded.records.size() == s1.records.size());
        for (std::size_t i = 0; i < s1.records.size(); ++i) {
            CHECK(loaded.records[i].ref_path == s1.records[i].ref_path);
            CHECK(loaded.records[i].split == s1.records[i].split);
            CHECK(loaded.records[i].mos == s1.records[i].mos);
        }

        // corrupting disjointness is detected
        auto broken = s1;
        for (auto& r : broken.records)
            if (r.split == "test") {
                r.ref_path = broken.records[0].ref_path;  // collide with a train pristine
                break;
            }
        CHECK_THROWS(broken.validate_invariants(false));
    }

    SUBCASE("ten pristine at (0.6, 0.2, 0.2) split 6/2/2") {
        degrade::Manifest synth;
        for (int i = 0; i < 10; ++i)
            for (int level = 1; level <= 2; ++level) {
                degrade::ManifestRecord r;
                r.ref_path = "ref" + std::to_string(i) + ".png";
                r.dist_path = "dist" + std::to_string(i) + "_" + std::to_string(level) + ".png";
                r.kind = degrade::Kind::GaussianBlur;
                r.level = level;
                synth.records.push_back(r);
            }
        auto s = degrade::split_manifest(synth, 0.6, 0.2, 0.2, 1);
        std::map<std::string, std::set<std::string>> refs_per_split;
        for (const auto& r : s.records) refs_per_split[r.split].insert(r.ref_path);
        CHECK(refs_per_split["pretrain"].size() == 6);
        CHECK(refs_per_split["finetune"].size() == 2);
        CHECK(refs_per_split["test"].size() == 2);

        degrade::Manifest two;
        two.records = {synth.records[0], synth.records[2]};
        CHECK_THROWS_AS(degrade::split_manifest(two, 0.4, 0.3, 0.3, 1), std::invalid_argument);
    }

    SUBCASE("pseudo mos labels populated and correlated with level") {
        auto m = degrade::build_dataset(pristine.string(), protocol,
                                        (tmp.path / "dp").string(), 5,
                                        degrade::PseudoMos::Psnr);
        for (const auto& r : m.records) {
            REQUIRE(r.mos.has_value());
            CHECK(std::isfinite(*r.mos));
        }
        // within one (ref, kind) group, psnr-mos decreases with level
        for (std::size_t i = 0; i + 1 < m.records.size(); ++i)
            if (m.records[i].ref_path == m.records[i + 1].ref_path &&
                m.records[i].kind == m.records[i + 1].kind &&
                m.records[i].level + 1 == m.records[i + 1].level)
                CHECK(*m.records[i].mos > *m.records[i + 1].mos);
    }

    SUBCASE("empty pristine dir rejected") {
        fs::path empty = tmp.path / "empty";
        fs::create_directories(empty);
        CHECK_THROWS(degrade::build_dataset(empty.string(), protocol,
                                            (tmp.path / "de").string(), 1));
    }
}
