// Command-line front end binding dataset synthesis, training, scoring,
// evaluation, and reporting into reproducible pipelines.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadis/degrade.hpp"
#include "cadis/evalproto.hpp"
#include "cadis/image.hpp"
#include "cadis/metrics.hpp"
#include "cadis/rng.hpp"
#include "cadis/score.hpp"
#include "cadis/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cadis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

losses::LossWeights parse_loss_subset(const std::string& subset) {
    losses::LossWeights base;  // defaults carry the weights; subset gates them
    losses::LossWeights w;
    w.w_mse = w.w_perc = w.w_adv = 0.0;
    std::stringstream ss(subset);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "mse") w.w_mse = base.w_mse;
        else if (tok == "vgg") w.w_perc = base.w_perc;
        else if (tok == "gan") w.w_adv = base.w_adv;
        else if (!tok.empty()) throw std::invalid_argument("unknown loss term: " + tok);
    }
    w.validate();
    return w;
}

// ---- scores.csv ----

struct ScoreRow {
    std::string ref_path, dist_path, kind;
    int level = 0;
    std::optional<double> y, m_hat, mos;
};

std::string opt_str(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}

void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "ref_path,dist_path,kind,level,y,m_hat,mos\n";
    for (const auto& r : rows)
        out << r.ref_path << "," << r.dist_path << "," << r.kind << "," << r.level << ","
            << opt_str(r.y) << "," << opt_str(r.m_hat) << "," << opt_str(r.mos) << "\n";
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scores file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty scores file: " + path);
    if (line != "ref_path,dist_path,kind,level,y,m_hat,mos")
        throw std::invalid_argument("unexpected scores.csv header: " + line);
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        while (cols.size() < 7) cols.push_back("");
        ScoreRow r;
        r.ref_path = cols[0];
        r.dist_path = cols[1];
        r.kind = cols[2];
        r.level = std::stoi(cols[3]);
        if (!cols[4].empty()) r.y = std::stod(cols[4]);
        if (!cols[5].empty()) r.m_hat = std::stod(cols[5]);
        if (!cols[6].empty()) r.mos = std::stod(cols[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- feature cache ----

std::vector<score::FeatureVector> cached_features(const nn::Model& model,
                                                  const std::vector<degrade::ManifestRecord>& recs,
                                                  const std::string& cache_key) {
    const char* cache_dir = std::getenv("CADIS_CACHE");
    fs::path cache_file;
    if (cache_dir) {
        fs::create_directories(cache_dir);
        cache_file = fs::path(cache_dir) / ("feat_" + std::to_string(fnv1a(cache_key)) + ".json");
        if (fs::exists(cache_file)) {
            std::ifstream in(cache_file);
            json j = json::parse(in);
            if (j.value("key", std::string()) == cache_key)
                return j.at("features").get<std::vector<score::FeatureVector>>();
        }
    }
    std::vector<Image> refs, dists;
    int res = model.cfg.resolution;
    for (const auto& r : recs) {
        refs.push_back(resize_bilinear(load_image(r.ref_path), res, res));
        dists.push_back(resize_bilinear(load_image(r.dist_path), res, res));
    }
    std::vector<score::FeatureVector> feats;
    // bound peak memory: forward in small batches
    for (std::size_t b = 0; b < refs.size(); b += 16) {
        std::size_t e = std::min(refs.size(), b + 16);
        std::vector<Image> rb(refs.begin() + static_cast<std::ptrdiff_t>(b),
                              refs.begin() + static_cast<std::ptrdiff_t>(e));
        std::vector<Image> db(dists.begin() + static_cast<std::ptrdiff_t>(b),
                              dists.begin() + static_cast<std::ptrdiff_t>(e));
        auto part = score::extract_features(model, rb, db);
        feats.insert(feats.end(), part.begin(), part.end());
    }
    if (cache_dir) {
        json j;
        j["key"] = cache_key;
        j["features"] = feats;
        std::ofstream out(cache_file, std::ios::binary);
        out << j.dump() << "\n";
    }
    return feats;
}

// ---- report assembly (shared by evaluate and report) ----

eval::EvalReport build_report(const std::vector<ScoreRow>& rows, const std::string& column) {
    std::vector<double> s, mos;
    std::vector<std::string> kinds, refs;
    std::vector<int> levels;
    for (const auto& r : rows) {
        if (!r.mos)
            throw std::invalid_argument(
                "evaluate: scores file is missing values in required column 'mos'");
        std::optional<double> v = (column == "m_hat") ? r.m_hat : r.y;
        if (column == "auto") v = r.y ? r.y : r.m_hat;
        if (!v)
            throw std::invalid_argument("evaluate: scores file is missing values in column '" +
                                        (column == "auto" ? std::string("y/m_hat") : column) + "'");
        s.push_back(*v);
        mos.push_back(*r.mos);
        kinds.push_back(r.kind);
        levels.push_back(r.level);
        refs.push_back(r.ref_path);
    }
    if (s.size() < 5) throw std::invalid_argument("evaluate: need at least 5 scored rows");

    eval::EvalReport rep;
    auto mapped = score::logistic_map(s, mos);
    rep.plcc = metrics::plcc(mapped, mos);
    rep.srcc = metrics::srcc(s, mos);
    rep.rmse = metrics::rmse(mapped, mos);
    rep.per_level = eval::fixed_level_ranking(s, mos, kinds, levels, &rep.warnings);
    int used = 0;
    for (const auto& st : rep.per_level) {
        if (st.skipped) continue;
        rep.mean_level_srcc += st.srcc;
        rep.mean_level_plcc += st.plcc;
        rep.mean_pairwise_acc += st.pairwise_acc;
        ++used;
    }
    if (used > 0) {
        rep.mean_level_srcc /= used;
        rep.mean_level_plcc /= used;
        rep.mean_pairwise_acc /= used;
    }
    try {
        rep.sensitivity = eval::sensitivity_alignment(s, mos, levels, refs);
    } catch (const std::exception& e) {
        rep.warnings.push_back(std::string("sensitivity skipped: ") + e.what());
    }
    return rep;
}

void write_scatter_plot(const std::string& path, const std::vector<double>& x,
                        const std::vector<double>& y) {
    const int size = 256, margin = 16;
    Image img(size, size, 3);
    for (auto& v : img.data) v = 1.0;
    auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    double xr = std::max(*xmax - *xmin, 1e-12), yr = std::max(*ymax - *ymin, 1e-12);
    for (int p = margin; p < size - margin; ++p) {
        img.at(size - margin, p, 0) = img.at(size - margin, p, 1) = img.at(size - margin, p, 2) = 0.6;
        img.at(p, margin, 0) = img.at(p, margin, 1) = img.at(p, margin, 2) = 0.6;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        int px = margin + static_cast<int>((x[i] - *xmin) / xr * (size - 2 * margin));
        int py = size - margin - static_cast<int>((y[i] - *ymin) / yr * (size - 2 * margin));
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int yy = std::clamp(py + dy, 0, size - 1), xx = std::clamp(px + dx, 0, size - 1);
                img.at(yy, xx, 0) = 0.1;
                img.at(yy, xx, 1) = 0.2;
                img.at(yy, xx, 2) = 0.8;
            }
    }
    save_png(img, path);
}

// Training flags shared by pretrain/finetune/train-head. Values left at the
// sentinel keep whatever the config file / profile provided (flag wins).
struct TrainFlags {
    std::string profile = "desk";
    std::string config_file;
    int epochs = -1, batch_size = -1, resize = -1;
    double lr = -1, flip_prob = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string loss_subset;
    bool no_causal = false, saturating = false;
    std::string precision, log_csv, checkpoint_dir;

    void attach(CLI::App* cmd) {
        cmd->add_option("--profile", profile, "desk or paper");
        cmd->add_option("--config", config_file, "key=value config file");
        cmd->add_option("--epochs", epochs);
        cmd->add_option("--batch-size", batch_size);
        cmd->add_option("--lr", lr);
        cmd->add_option("--resize", resize);
        cmd->add_option("--flip-prob", flip_prob);
        cmd->add_option("--seed", seed)->each([this](const std::string&) { seed_set = true; });
        cmd->add_option("--loss", loss_subset, "subset of mse,vgg,gan");
        cmd->add_flag("--no-causal-layer", no_causal);
        cmd->add_flag("--saturating-gan", saturating);
        cmd->add_option("--precision", precision, "checkpoint storage width: float32|float64");
        cmd->add_option("--log-csv", log_csv);
        cmd->add_option("--checkpoint-dir", checkpoint_dir);
    }

    train::TrainConfig resolve(const train::TrainConfig& base) const {
        train::TrainConfig c = base;
        if (!config_file.empty()) c.load_ini(config_file);
        if (epochs >= 0) c.epochs = epochs;
        if (batch_size >= 0) c.batch_size = batch_size;
        if (lr >= 0) c.lr = lr;
        if (resize >= 0) c.resize = resize;
        if (flip_prob >= 0) c.flip_prob = flip_prob;
        if (seed_set) c.seed = seed;
        if (!loss_subset.empty()) c.loss_weights = parse_loss_subset(loss_subset);
        if (no_causal) c.causal_layer_enabled = false;
        if (saturating) c.saturating_gan = true;
        if (!precision.empty()) c.precision = precision;
        if (!log_csv.empty()) c.log_csv = log_csv;
        if (!checkpoint_dir.empty()) c.checkpoint_dir = checkpoint_dir;
        return c;
    }
};

// ---- subcommand bodies ----

int cmd_build_dataset(const std::string& pristine, const std::string& out, std::uint64_t seed,
                      const std::string& pseudo, const std::string& protocol_file,
                      double r_pre, double r_fin, double r_test) {
    degrade::DegradationProtocol protocol;
    if (!protocol_file.empty()) protocol = degrade::DegradationProtocol::load(protocol_file);
    auto m = degrade::build_dataset(pristine, protocol, out, seed,
                                    degrade::pseudo_mos_from_string(pseudo));
    m = degrade::split_manifest(m, r_pre, r_fin, r_test, mix_seed(seed, 0x5717));
    m.validate_invariants(true);
    std::string path = (fs::path(out) / "manifest.jsonl").string();
    m.save(path);
    std::cout << "build-dataset ok records=" << m.records.size() << " manifest=" << path << "\n";
    return kExitOk;
}

int cmd_pretrain(const std::string& manifest_path, const std::string& out, const TrainFlags& tf,
                 bool skip) {
    auto profile = train::RunProfile::get(tf.profile);
    train::TrainConfig cfg = tf.resolve(profile.pretrain_cfg);
    auto manifest = degrade::Manifest::load(manifest_path);
    train::CheckpointBundle ckpt;
    if (skip) {
        nn::ModelConfig mc = profile.model;
        mc.resolution = cfg.resize;
        ckpt.model = std::make_shared<nn::Model>(mc, cfg.seed);
        ckpt.seed = cfg.seed;
        ckpt.phase = "init";
    } else {
        ckpt = train::pretrain(manifest, profile.model, cfg);
    }
    ckpt.save(out, cfg.precision);
    std::cout << "pretrain ok epochs=" << (skip ? 0 : cfg.epochs) << " seed=" << cfg.seed
              << " ckpt=" << out << "\n";
    return kExitOk;
}

int cmd_finetune(const std::string& manifest_path, const std::string& ckpt_dir,
                 const std::string& out, const TrainFlags& tf, bool skip) {
    auto profile = train::RunProfile::get(tf.profile);
    auto ckpt = train::CheckpointBundle::load(ckpt_dir);
    train::TrainConfig cfg = tf.resolve(profile.finetune_cfg);
    cfg.resize = ckpt.model->cfg.resolution;
    if (skip) {
        ckpt.save(out, cfg.precision);
        std::cout << "finetune skipped ckpt=" << out << "\n";
        return kExitOk;
    }
    auto manifest = degrade::Manifest::load(manifest_path);
    auto tuned = train::finetune(ckpt, manifest, cfg);
    tuned.save(out, cfg.precision);
    std::cout << "finetune ok epochs=" << cfg.epochs << " seed=" << cfg.seed << " ckpt=" << out
              << "\n";
    return kExitOk;
}

int cmd_train_head(const std::string& manifest_path, const std::string& ckpt_dir,
                   const std::string& out, const TrainFlags& tf, bool unfrozen) {
    auto profile = train::RunProfile::get(tf.profile);
    auto ckpt = train::CheckpointBundle::load(ckpt_dir);
    train::TrainConfig cfg = tf.resolve(profile.finetune_cfg);
    cfg.resize = ckpt.model->cfg.resolution;
    auto manifest = degrade::Manifest::load(manifest_path);
    auto trained = train::train_regression_head(ckpt, manifest, !unfrozen, cfg);
    trained.save(out, cfg.precision);
    std::cout << "train-head ok mode=" << (unfrozen ? "unfrozen" : "frozen") << " ckpt=" << out
              << "\n";
    return kExitOk;
}

int cmd_score(const std::string& manifest_path, const std::string& ckpt_dir,
              const std::string& out, const std::string& mode, const std::string& split,
              score::EmbeddingParams ep) {
    if (mode != "zeroshot" && mode != "supervised")
        throw std::invalid_argument("score: --mode must be zeroshot or supervised");
    auto ckpt = train::CheckpointBundle::load(ckpt_dir);
    auto manifest = degrade::Manifest::load(manifest_path);
    auto recs = split.empty() ? manifest.records : manifest.split(split);
    if (recs.empty()) throw std::invalid_argument("score: no records in split '" + split + "'");

    std::string cache_key = manifest_path + "|" + split + "|" + ckpt_dir;
    auto feats = cached_features(*ckpt.model, recs, cache_key);

    std::vector<ScoreRow> rows(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        rows[i].ref_path = recs[i].ref_path;
        rows[i].dist_path = recs[i].dist_path;
        rows[i].kind = degrade::kind_name(recs[i].kind);
        rows[i].level = recs[i].level;
        rows[i].mos = recs[i].mos;
    }

    score::Orientation orientation = score::Orientation::AsIs;
    if (mode == "zeroshot") {
        ep.validate();
        auto fvs = feats;
        if (ep.l2_normalize)
            for (auto& f : fvs) {
                double n = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0));
                if (n > 0)
                    for (auto& v : f) v /= n;
            }
        auto y = score::embed_1d(fvs, ep);
        // lowest present level per kind anchors the high-quality end
        std::map<std::string, int> min_level;
        for (const auto& r : rows) {
            auto it = min_level.find(r.kind);
            if (it == min_level.end() || r.level < it->second) min_level[r.kind] = r.level;
        }
        std::vector<std::size_t> anchors;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].level == min_level[rows[i].kind]) anchors.push_back(i);
        auto oriented = score::orient(y, anchors);
        orientation = oriented.orientation;
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].y = oriented.y[i];
    } else {
        if (!ckpt.head)
            throw std::invalid_argument("score: checkpoint has no regression head (run train-head)");
        for (std::size_t i = 0; i < rows.size(); ++i) {
            Tensor x({1, static_cast<std::int64_t>(feats[i].size())});
            x.data = feats[i];
            rows[i].m_hat = ckpt.head->head(ag::constant(x))->value.data[0];
        }
    }

    fs::create_directories(out);
    std::string csv = (fs::path(out) / "scores.csv").string();
    write_scores_csv(csv, rows);
    json side;
    side["mode"] = mode;
    side["n_neighbors"] = ep.n_neighbors;
    side["min_dist"] = ep.min_dist;
    side["seed"] = ep.seed;
    side["l2_normalize"] = ep.l2_normalize;
    side["orientation"] = orientation == score::Orientation::Flipped ? "flipped" : "as_is";
    std::ofstream sj((fs::path(out) / "embedding.json").string(), std::ios::binary);
    sj << side.dump(2) << "\n";
    std::cout << "score ok mode=" << mode << " rows=" << rows.size() << " out=" << csv << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& scores_path, const std::string& out,
                 const std::string& column, bool plot) {
    auto rows = read_scores_csv(scores_path);
    auto rep = build_report(rows, column);
    fs::create_directories(out);
    rep.save_json((fs::path(out) / "report.json").string());
    rep.save_csv((fs::path(out) / "report.csv").string());
    if (plot) {
        std::vector<double> s, m;
        for (const auto& r : rows) {
            std::optional<double> v = r.y ? r.y : r.m_hat;
            if (v && r.mos) {
                s.push_back(*v);
                m.push_back(*r.mos);
            }
        }
        write_scatter_plot((fs::path(out) / "scatter.png").string(), s, m);
    }
    std::cout << "evaluate ok plcc=" << rep.plcc << " srcc=" << rep.srcc
              << " out=" << (fs::path(out) / "report.json").string() << "\n";
    return kExitOk;
}

int cmd_transfer(const std::string& manifest_path, const std::string& ckpt_dir,
                 const std::string& out, int pairs, std::uint64_t seed, bool use_modulated) {
    auto ckpt = train::CheckpointBundle::load(ckpt_dir);
    auto manifest = degrade::Manifest::load(manifest_path);
    int res = ckpt.model->cfg.resolution;

    // index records by (ref, kind, level)
    std::map<std::string, std::map<std::pair<std::string, int>, std::string>> by_ref;
    for (const auto& r : manifest.records)
        by_ref[r.ref_path][{degrade::kind_name(r.kind), r.level}] = r.dist_path;
    std::vector<std::string> refs;
    for (const auto& [k, v] : by_ref) refs.push_back(k);
    if (refs.size() < 2) throw std::invalid_argument("transfer: need at least 2 references");

    std::vector<std::string> kinds;
    {
        std::set<std::string> ks;
        for (const auto& r : manifest.records) ks.insert(degrade::kind_name(r.kind));
        kinds.assign(ks.begin(), ks.end());
    }
    if (kinds.size() < 2) throw std::invalid_argument("transfer: need at least 2 kinds");

    Rng rng(seed);
    int success = 0, done = 0, attempts = 0;
    std::map<std::string, Image> img_cache;
    auto get = [&](const std::string& p) -> const Image& {
        auto it = img_cache.find(p);
        if (it == img_cache.end())
            it = img_cache.emplace(p, resize_bilinear(load_image(p), res, res)).first;
        return it->second;
    };
    while (done < pairs && attempts < pairs * 20) {
        ++attempts;
        const auto& r1 = refs[rng.below(refs.size())];
        const auto& r2 = refs[rng.below(refs.size())];
        if (r1 == r2) continue;
        const auto& k1 = kinds[rng.below(kinds.size())];
        const auto& k2 = kinds[rng.below(kinds.size())];
        if (k1 == k2) continue;
        int level = 1 + static_cast<int>(rng.below(5));
        auto& m1 = by_ref[r1];
        auto& m2 = by_ref[r2];
        auto src = m1.find({k1, level});
        auto same = m2.find({k1, level});
        auto other = m2.find({k2, level});
        if (src == m1.end() || same == m2.end() || other == m2.end()) continue;
        bool ok = eval::counterfactual_transfer(*ckpt.model, get(r1), get(src->second), get(r2),
                                                get(same->second), get(other->second),
                                                use_modulated);
        success += ok ? 1 : 0;
        ++done;
    }
    if (done == 0) throw std::invalid_argument("transfer: no usable transfer pairs in manifest");
    auto ci = eval::binomial_ci(success, done);
    double acc = static_cast<double>(success) / done;
    fs::create_directories(out);
    json j;
    j["counterfactual_acc"] = acc;
    j["ci_lo"] = ci.lo;
    j["ci_hi"] = ci.hi;
    j["n"] = done;
    j["use_modulated"] = use_modulated;
    std::ofstream oj((fs::path(out) / "transfer.json").string(), std::ios::binary);
    oj << j.dump(2) << "\n";
    std::cout << "transfer ok acc=" << acc << " n=" << done << " ci=[" << ci.lo << "," << ci.hi
              << "]\n";
    return kExitOk;
}

int cmd_config_diff(const std::string& from, const std::string& to) {
    auto a = train::RunProfile::get(from);
    auto b = train::RunProfile::get(to);
    for (const auto& line : train::RunProfile::diff(a, b)) std::cout << line << "\n";
    std::cout << "config-diff ok " << from << " vs " << to << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal-disentanglement full-reference IQA pipelines"};
    app.require_subcommand(1);

    // build-dataset
    auto* bd = app.add_subcommand("build-dataset", "synthesize degraded pairs and a manifest");
    std::string bd_pristine, bd_out, bd_pseudo = "none", bd_protocol;
    std::uint64_t bd_seed = 0;
    double bd_pre = 0.6, bd_fin = 0.2, bd_test = 0.2;
    bd->add_option("--pristine", bd_pristine)->required();
    bd->add_option("--out", bd_out)->required();
    bd->add_option("--seed", bd_seed);
    bd->add_option("--pseudo-mos", bd_pseudo, "none|psnr|ssim|neg_gmsd");
    bd->add_option("--protocol", bd_protocol, "protocol JSON overriding the default schedules");
    bd->add_option("--split-pretrain", bd_pre);
    bd->add_option("--split-finetune", bd_fin);
    bd->add_option("--split-test", bd_test);

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "reconstruction pretraining on synthetic pairs");
    std::string pt_manifest, pt_out;
    bool pt_skip = false;
    TrainFlags pt_flags;
    pt->add_option("--manifest", pt_manifest)->required();
    pt->add_option("--out", pt_out)->required();
    pt->add_flag("--skip-pretrain", pt_skip, "save an untrained initialization");
    pt_flags.attach(pt);

    // finetune
    auto* ft = app.add_subcommand("finetune", "continue training from a checkpoint");
    std::string ft_manifest, ft_ckpt, ft_out;
    bool ft_skip = false;
    TrainFlags ft_flags;
    ft->add_option("--manifest", ft_manifest)->required();
    ft->add_option("--ckpt", ft_ckpt)->required();
    ft->add_option("--out", ft_out)->required();
    ft->add_flag("--skip-finetune", ft_skip, "pass the checkpoint through unchanged");
    ft_flags.attach(ft);

    // train-head
    auto* th = app.add_subcommand("train-head", "fit the supervised regression head");
    std::string th_manifest, th_ckpt, th_out;
    bool th_unfrozen = false;
    TrainFlags th_flags;
    th->add_option("--manifest", th_manifest)->required();
    th->add_option("--ckpt", th_ckpt)->required();
    th->add_option("--out", th_out)->required();
    th->add_flag("--unfrozen", th_unfrozen, "update the backbone end to end");
    th_flags.attach(th);

    // score
    auto* sc = app.add_subcommand("score", "score (reference, distorted) pairs");
    std::string sc_manifest, sc_ckpt, sc_out, sc_mode = "zeroshot", sc_split = "test";
    score::EmbeddingParams sc_ep;
    sc->add_option("--manifest", sc_manifest)->required();
    sc->add_option("--ckpt", sc_ckpt)->required();
    sc->add_option("--out", sc_out)->required();
    sc->add_option("--mode", sc_mode, "zeroshot|supervised");
    sc->add_option("--split", sc_split, "manifest split to score (empty = all)");
    sc->add_option("--n-neighbors", sc_ep.n_neighbors);
    sc->add_option("--min-dist", sc_ep.min_dist);
    sc->add_option("--seed", sc_ep.seed);
    sc->add_flag("--l2-normalize", sc_ep.l2_normalize);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "correlation metrics against MOS");
    std::string ev_scores, ev_out, ev_column = "auto";
    ev->add_option("--scores", ev_scores)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--column", ev_column, "auto|y|m_hat");

    // transfer
    auto* tr = app.add_subcommand("transfer", "counterfactual degradation transfer accuracy");
    std::string tr_manifest, tr_ckpt, tr_out;
    int tr_pairs = 50;
    std::uint64_t tr_seed = 0;
    bool tr_modulated = false;
    tr->add_option("--manifest", tr_manifest)->required();
    tr->add_option("--ckpt", tr_ckpt)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--pairs", tr_pairs);
    tr->add_option("--seed", tr_seed);
    tr->add_flag("--use-modulated", tr_modulated, "transfer the post-modulation feature");

    // report
    auto* rp = app.add_subcommand("report", "evaluate plus artifacts (report.csv, scatter plot)");
    std::string rp_scores, rp_out, rp_column = "auto";
    bool rp_plot = false;
    rp->add_option("--scores", rp_scores)->required();
    rp->add_option("--out", rp_out)->required();
    rp->add_option("--column", rp_column, "auto|y|m_hat");
    rp->add_flag("--plot", rp_plot, "emit score-vs-MOS scatter PNG");

    // config-diff
    auto* cd = app.add_subcommand("config-diff", "fields that differ between two profiles");
    std::string cd_from = "desk", cd_to = "paper";
    cd->add_option("--from", cd_from);
    cd->add_option("--to", cd_to);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (bd->parsed())
            return cmd_build_dataset(bd_pristine, bd_out, bd_seed, bd_pseudo, bd_protocol, bd_pre,
                                     bd_fin, bd_test);
        if (pt->parsed()) return cmd_pretrain(pt_manifest, pt_out, pt_flags, pt_skip);
        if (ft->parsed()) return cmd_finetune(ft_manifest, ft_ckpt, ft_out, ft_flags, ft_skip);
        if (th->parsed()) return cmd_train_head(th_manifest, th_ckpt, th_out, th_flags, th_unfrozen);
        if (sc->parsed()) return cmd_score(sc_manifest, sc_ckpt, sc_out, sc_mode, sc_split, sc_ep);
        if (ev->parsed()) return cmd_evaluate(ev_scores, ev_out, ev_column, false);
        if (tr->parsed())
            return cmd_transfer(tr_manifest, tr_ckpt, tr_out, tr_pairs, tr_seed, tr_modulated);
        if (rp->parsed()) return cmd_evaluate(rp_scores, rp_out, rp_column, rp_plot);
        if (cd->parsed()) return cmd_config_diff(cd_from, cd_to);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
