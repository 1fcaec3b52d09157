// Black-box tests of the cadis command line tool. argv[1] must point at the
// built binary; a scratch directory is created under the system temp dir.
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cadis/image.hpp"
#include "cadis/rng.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::cout << (ok ? "ok" : "FAILED") << ": " << what << "\n";
    if (!ok) ++failures;
}

std::string g_bin;
fs::path g_root;

int run(const std::string& args, const std::string& tag) {
    std::string cmd = g_bin + " " + args + " >" + (g_root / (tag + ".out")).string() + " 2>" +
                      (g_root / (tag + ".err")).string();
    int st = std::system(cmd.c_str());
    if (st == -1) return -1;
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-cadis-binary>\n";
        return 2;
    }
    g_bin = argv[1];
    g_root = fs::temp_directory_path() / "cadis_cli_test";
    fs::remove_all(g_root);
    fs::create_directories(g_root / "pristine");

    cadis::Rng rng(77);
    for (int i = 0; i < 6; ++i) {
        cadis::Image img(64, 64, 3);
        for (auto& v : img.data) v = std::clamp(0.5 + 0.25 * rng.normal(), 0.0, 1.0);
        cadis::save_png(img, (g_root / "pristine" / ("p" + std::to_string(i) + ".png")).string());
    }

    // unknown flag: usage text plus exit 1
    check(run("--definitely-not-a-flag", "badflag") == 1, "unknown flag exits 1");
    check(!slurp(g_root / "badflag.err").empty() || !slurp(g_root / "badflag.out").empty(),
          "unknown flag prints a message");
    check(run("score --manifest nope.jsonl", "missingreq") == 1,
          "missing required flag exits 1");

    // dataset build, with and without labels
    std::string pristine = (g_root / "pristine").string();
    check(run("build-dataset --pristine " + pristine + " --out " + (g_root / "data").string() +
                  " --seed 5 --pseudo-mos psnr",
              "bd") == 0,
          "build-dataset succeeds");
    std::string manifest = (g_root / "data" / "manifest.jsonl").string();
    {
        std::ifstream in(manifest);
        int lines = 0;
        for (std::string l; std::getline(in, l);)
            if (!l.empty()) ++lines;
        check(lines == 6 * 4 * 5, "manifest has one record per (pristine, kind, level)");
    }
    check(run("build-dataset --pristine " + pristine + " --out " +
                  (g_root / "data_unlabeled").string() + " --seed 5",
              "bdu") == 0,
          "unlabeled build-dataset succeeds");
    std::string unlabeled = (g_root / "data_unlabeled" / "manifest.jsonl").string();

    check(run("build-dataset --pristine " + (g_root / "no_such_dir").string() + " --out " +
                  (g_root / "dx").string(),
              "bdmissing") == 1,
          "missing pristine dir exits 1");

    // pretraining determinism across reruns
    std::string common = " --manifest " + manifest + " --epochs 1 --resize 32 --seed 7";
    check(run("pretrain --out " + (g_root / "ck1").string() + common, "pt1") == 0,
          "pretrain succeeds");
    check(run("pretrain --out " + (g_root / "ck2").string() + common, "pt2") == 0,
          "pretrain rerun succeeds");
    check(slurp(g_root / "ck1" / "weights.bin") == slurp(g_root / "ck2" / "weights.bin"),
          "rerun checkpoints are byte-identical");

    // zero-shot scoring: m_hat empty, reruns byte-identical
    std::string score_args = "score --manifest " + unlabeled + " --ckpt " +
                             (g_root / "ck1").string() + " --mode zeroshot --seed 3 --out ";
    check(run(score_args + (g_root / "s1").string(), "sc1") == 0, "zeroshot score succeeds");
    check(run(score_args + (g_root / "s2").string(), "sc2") == 0, "zeroshot score rerun");
    std::string csv1 = slurp(g_root / "s1" / "scores.csv");
    check(csv1 == slurp(g_root / "s2" / "scores.csv"), "scores.csv reruns byte-identical");
    {
        std::istringstream in(csv1);
        std::string header;
        std::getline(in, header);
        check(header == "ref_path,dist_path,kind,level,y,m_hat,mos",
              "scores.csv has the contract header");
        bool any_row = false, m_hat_empty = true, mos_empty = true;
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            any_row = true;
            std::vector<std::string> cols;
            std::istringstream ls(line);
            for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
            while (cols.size() < 7) cols.push_back("");
            if (!cols[5].empty()) m_hat_empty = false;
            if (!cols[6].empty()) mos_empty = false;
        }
        check(any_row, "scores.csv has rows");
        check(m_hat_empty, "zeroshot leaves m_hat empty");
        check(mos_empty, "unlabeled manifest leaves mos empty");
    }

    // evaluate: refused without mos, naming the column
    check(run("evaluate --scores " + (g_root / "s1" / "scores.csv").string() + " --out " +
                  (g_root / "r_fail").string(),
              "evfail") == 1,
          "evaluate without mos exits 1");
    std::string err = slurp(g_root / "evfail.err");
    check(err.find("mos") != std::string::npos, "error message names the mos column");

    // labeled pipeline: score against the labeled manifest, then evaluate
    check(run("score --manifest " + manifest + " --ckpt " + (g_root / "ck1").string() +
                  " --mode zeroshot --seed 3 --out " + (g_root / "s3").string(),
              "sc3") == 0,
          "score on labeled manifest succeeds");
    check(run("evaluate --scores " + (g_root / "s3" / "scores.csv").string() + " --out " +
                  (g_root / "rep").string(),
              "ev") == 0,
          "evaluate succeeds with labels");
    check(fs::exists(g_root / "rep" / "report.json"), "report.json written");
    check(run("evaluate --scores " + (g_root / "s3" / "scores.csv").string() + " --out " +
                  (g_root / "rep2").string(),
              "ev2") == 0,
          "evaluate rerun succeeds");
    check(slurp(g_root / "rep" / "report.json") == slurp(g_root / "rep2" / "report.json"),
          "report reruns byte-identical");

    // config-diff prints the differing fields and nothing for identical profiles
    check(run("config-diff --from desk --to paper", "cd") == 0, "config-diff succeeds");
    std::string diff = slurp(g_root / "cd.out");
    check(diff.find("epochs") != std::string::npos, "config-diff mentions epochs");
    check(diff.find("448") != std::string::npos, "config-diff mentions the paper resize");
    check(run("config-diff --from desk --to desk", "cdsame") == 0, "self config-diff succeeds");
    check(run("config-diff --from desk --to server", "cdbad") == 1,
          "unknown profile exits 1");

    std::cout << (failures == 0 ? "ALL OK" : "FAILURES: " + std::to_string(failures)) << "\n";
    if (failures == 0) fs::remove_all(g_root);
    return failures == 0 ? 0 : 1;
}
