#include "cadis/evalproto.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cadis/metrics.hpp"

using json = nlohmann::ordered_json;

namespace cadis::eval {

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("least_squares_slope: need >= 2 matched points");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0) throw std::invalid_argument("least_squares_slope: constant abscissa");
    return sxy / sxx;
}

std::vector<PerLevelStat> fixed_level_ranking(const std::vector<double>& scores,
                                              const std::vector<double>& mos,
                                              const std::vector<std::string>& kinds,
                                              const std::vector<int>& levels,
                                              std::vector<std::string>* warnings) {
    if (scores.size() != mos.size() || scores.size() != kinds.size() ||
        scores.size() != levels.size())
        throw std::invalid_argument("fixed_level_ranking: column length mismatch");
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < scores.size(); ++i) groups[{kinds[i], levels[i]}].push_back(i);

    std::vector<PerLevelStat> out;
    for (const auto& [key, idx] : groups) {
        PerLevelStat st;
        st.kind = key.first;
        st.level = key.second;
        st.group_size = static_cast<int>(idx.size());
        std::vector<double> s, m;
        for (auto i : idx) {
            s.push_back(scores[i]);
            m.push_back(mos[i]);
        }
        if (idx.size() < 2) {
            st.skipped = true;
            if (warnings)
                warnings->push_back("group (" + st.kind + ", level " + std::to_string(st.level) +
                                    ") skipped: fewer than 2 contents");
            out.push_back(st);
            continue;
        }
        try {
            st.srcc = metrics::srcc(s, m);
            st.plcc = metrics::plcc(s, m);
            st.pairwise_acc = metrics::pairwise_accuracy(s, m);
        } catch (const std::exception& e) {
            st.skipped = true;
            if (warnings)
                warnings->push_back("group (" + st.kind + ", level " + std::to_string(st.level) +
                                    ") skipped: " + e.what());
        }
        out.push_back(st);
    }
    return out;
}

SensitivityStats sensitivity_alignment(const std::vector<double>& scores,
                                       const std::vector<double>& mos,
                                       const std::vector<int>& levels,
                                       const std::vector<std::string>& ref_ids) {
    if (scores.size() != mos.size() || scores.size() != levels.size() ||
        scores.size() != ref_ids.size())
        throw std::invalid_argument("sensitivity_alignment: column length mismatch");
    std::map<std::string, std::vector<std::size_t>> by_ref;
    for (std::size_t i = 0; i < scores.size(); ++i) by_ref[ref_ids[i]].push_back(i);

    SensitivityStats st;
    std::vector<double> mos_slopes, score_slopes;
    for (const auto& [ref, idx] : by_ref) {
        if (idx.size() < 3) {
            ++st.skipped_refs;
            continue;
        }
        std::vector<double> lv, s, m;
        for (auto i : idx) {
            lv.push_back(static_cast<double>(levels[i]));
            s.push_back(scores[i]);
            m.push_back(mos[i]);
        }
        mos_slopes.push_back(least_squares_slope(lv, m));
        score_slopes.push_back(least_squares_slope(lv, s));
        ++st.used_refs;
    }
    if (st.used_refs < 2)
        throw std::invalid_argument("sensitivity_alignment: fewer than 2 usable references");
    st.slope_srcc = metrics::srcc(score_slopes, mos_slopes);
    st.slope_plcc = metrics::plcc(score_slopes, mos_slopes);

    // Level-mean curves.
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_level;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        by_level[levels[i]].first.push_back(scores[i]);
        by_level[levels[i]].second.push_back(mos[i]);
    }
    std::vector<double> curve_s, curve_m;
    for (const auto& [lvl, sm] : by_level) {
        curve_s.push_back(std::accumulate(sm.first.begin(), sm.first.end(), 0.0) /
                          static_cast<double>(sm.first.size()));
        curve_m.push_back(std::accumulate(sm.second.begin(), sm.second.end(), 0.0) /
                          static_cast<double>(sm.second.size()));
    }
    st.mean_curve_srcc = metrics::srcc(curve_s, curve_m);
    return st;
}

bool counterfactual_transfer(const nn::Model& model, const Image& i_r1, const Image& i_d1,
                             const Image& i_r2, const Image& same_kind_truth,
                             const Image& other_kind_truth, bool use_modulated) {
    if (i_r1.h != i_r2.h || i_r1.w != i_r2.w)
        throw std::invalid_argument("counterfactual_transfer: resolution mismatch");
    auto src_dist = ag::constant(to_tensor({i_d1}));
    auto target_ref = ag::constant(to_tensor({i_r2}));
    auto d = model.encode(src_dist);
    if (use_modulated) {
        auto src_ref = ag::constant(to_tensor({i_r1}));
        d = model.modulate(d, model.content_encode(src_ref));
    }
    auto recon = model.decode(target_ref, d);
    Image transferred = from_tensor(recon->value, 0);
    return image_mse(transferred, same_kind_truth) < image_mse(transferred, other_kind_truth);
}

BinomialCi binomial_ci(int successes, int trials, double z) {
    if (trials <= 0) throw std::invalid_argument("binomial_ci: trials must be positive");
    if (successes < 0 || successes > trials)
        throw std::invalid_argument("binomial_ci: successes out of range");
    double p = static_cast<double>(successes) / trials;
    double n = static_cast<double>(trials);
    double denom = 1.0 + z * z / n;
    double center = (p + z * z / (2 * n)) / denom;
    double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---- report serialization ----

namespace {

json stat_to_json(const PerLevelStat& s) {
    json j;
    j["kind"] = s.kind;
    j["level"] = s.level;
    j["srcc"] = s.srcc;
    j["plcc"] = s.plcc;
    j["pairwise_acc"] = s.pairwise_acc;
    j["group_size"] = s.group_size;
    j["skipped"] = s.skipped;
    return j;
}

PerLevelStat stat_from_json(const json& j) {
    PerLevelStat s;
    s.kind = j.at("kind").get<std::string>();
    s.level = j.at("level").get<int>();
    s.srcc = j.at("srcc").get<double>();
    s.plcc = j.at("plcc").get<double>();
    s.pairwise_acc = j.at("pairwise_acc").get<double>();
    s.group_size = j.at("group_size").get<int>();
    s.skipped = j.at("skipped").get<bool>();
    return s;
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["plcc"] = plcc;
    j["srcc"] = srcc;
    j["rmse"] = rmse;
    json pl = json::array();
    for (const auto& s : per_level) pl.push_back(stat_to_json(s));
    j["per_level"] = pl;
    j["mean_level_srcc"] = mean_level_srcc;
    j["mean_level_plcc"] = mean_level_plcc;
    j["mean_pairwise_acc"] = mean_pairwise_acc;
    j["sensitivity"] = {{"slope_srcc", sensitivity.slope_srcc},
                        {"slope_plcc", sensitivity.slope_plcc},
                        {"mean_curve_srcc", sensitivity.mean_curve_srcc},
                        {"used_refs", sensitivity.used_refs},
                        {"skipped_refs", sensitivity.skipped_refs}};
    if (counterfactual_acc) {
        j["counterfactual_acc"] = *counterfactual_acc;
        j["counterfactual_ci_lo"] = *counterfactual_ci_lo;
        j["counterfactual_ci_hi"] = *counterfactual_ci_hi;
        j["counterfactual_n"] = counterfactual_n;
    } else {
        j["counterfactual_acc"] = nullptr;
    }
    j["warnings"] = warnings;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport r;
    r.plcc = j.at("plcc").get<double>();
    r.srcc = j.at("srcc").get<double>();
    r.rmse = j.at("rmse").get<double>();
    for (const auto& s : j.at("per_level")) r.per_level.push_back(stat_from_json(s));
    r.mean_level_srcc = j.at("mean_level_srcc").get<double>();
    r.mean_level_plcc = j.at("mean_level_plcc").get<double>();
    r.mean_pairwise_acc = j.at("mean_pairwise_acc").get<double>();
    const auto& sj = j.at("sensitivity");
    r.sensitivity.slope_srcc = sj.at("slope_srcc").get<double>();
    r.sensitivity.slope_plcc = sj.at("slope_plcc").get<double>();
    r.sensitivity.mean_curve_srcc = sj.at("mean_curve_srcc").get<double>();
    r.sensitivity.used_refs = sj.at("used_refs").get<int>();
    r.sensitivity.skipped_refs = sj.at("skipped_refs").get<int>();
    if (!j.at("counterfactual_acc").is_null()) {
        r.counterfactual_acc = j.at("counterfactual_acc").get<double>();
        r.counterfactual_ci_lo = j.at("counterfactual_ci_lo").get<double>();
        r.counterfactual_ci_hi = j.at("counterfactual_ci_hi").get<double>();
        r.counterfactual_n = j.at("counterfactual_n").get<int>();
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

void EvalReport::save_json(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << to_json() << "\n";
}

void EvalReport::save_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << "metric,value\n";
    auto row = [&](const std::string& k, double v) { out << k << "," << v << "\n"; };
    row("plcc", plcc);
    row("srcc", srcc);
    row("rmse", rmse);
    row("mean_level_srcc", mean_level_srcc);
    row("mean_level_plcc", mean_level_plcc);
    row("mean_pairwise_acc", mean_pairwise_acc);
    row("slope_srcc", sensitivity.slope_srcc);
    row("slope_plcc", sensitivity.slope_plcc);
    row("mean_curve_srcc", sensitivity.mean_curve_srcc);
    if (counterfactual_acc) row("counterfactual_acc", *counterfactual_acc);
}

}  // namespace cadis::eval
