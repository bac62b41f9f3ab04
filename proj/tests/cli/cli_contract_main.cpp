// End-to-end contract for the pdgait command line. Takes the binary path as
// argv[1], drives it against a fabricated corpus in a temp directory, and
// checks outputs, artifacts, and exit codes.
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pdgait/vgrf_data.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "ok  " : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class CliRunner {
 public:
  CliRunner(std::string binary, fs::path scratch)
      : binary_(std::move(binary)), scratch_(std::move(scratch)) {}

  CmdResult run(const std::string& args) {
    const fs::path out_file = scratch_ / "stdout.txt";
    const fs::path err_file = scratch_ / "stderr.txt";
    const std::string cmd =
        binary_ + " " + args + " >" + out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
  }

 private:
  std::string binary_;
  fs::path scratch_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <pdgait_cli binary>\n", argv[0]);
    return 2;
  }

  testsupport::TempDir tmp("cli");
  CliRunner cli(argv[1], tmp.path());

  testsupport::SyntheticSpec spec;
  spec.parkinson_subjects = 4;
  spec.control_subjects = 4;
  spec.samples_per_walk = 220;
  const fs::path data_dir = tmp.path() / "data";
  const fs::path manifest = testsupport::write_synthetic_tree(data_dir, spec);

  // version banner
  {
    const CmdResult r = cli.run("--version");
    check(r.exit_code == 0 && contains(r.out, "0.1.0"), "--version prints the tool version");
  }

  // ingest: counts and cache round trip
  const fs::path cache = tmp.path() / "corpus.cache";
  {
    const CmdResult r = cli.run("ingest --data-root " + data_dir.string() + " --manifest " +
                                manifest.string() + " --out " + cache.string());
    check(r.exit_code == 0, "ingest exits 0");
    check(contains(r.out, "subjects: 4 parkinson / 4 control"), "ingest reports subject counts");
    check(contains(r.out, "walks:    4 parkinson / 4 control (0 excluded by manifest)"),
          "ingest reports walk counts");
    check(contains(r.out, "windows:  24 (window_len 100, stride 50; 0 walks too short)"),
          "ingest reports the window count");
    check(fs::exists(cache), "ingest --out writes the cache file");

    const CmdResult from_cache = cli.run("ingest --cache " + cache.string());
    check(from_cache.exit_code == 0 &&
              contains(from_cache.out, "subjects: 4 parkinson / 4 control"),
          "ingest reads the dataset back from --cache");
  }

  // cv: detection run with artifacts
  const fs::path cv_dir = tmp.path() / "cv_out";
  const std::string tiny_flags =
      " --window-len 16 --stride 8 --normalize --channels L1,R1 --batch-size 32"
      " --patience 1 --halvings 0 --max-epochs 2 --jobs 1";
  {
    const CmdResult r = cli.run("cv --cache " + cache.string() +
                                " --task detection --folds 2 --seed 3" + tiny_flags +
                                " --out-dir " + cv_dir.string());
    check(r.exit_code == 0, "cv exits 0");
    check(contains(r.out, "detection, 2-fold subject-level cross validation"),
          "cv prints the report header");
    check(contains(r.out, "walks:"), "cv prints walk-level metrics");
    for (const char* name : {"fold_plan.txt", "report.txt", "metrics.csv", "walk_votes.csv",
                             "run_manifest.json"}) {
      check(fs::exists(cv_dir / name), std::string("cv writes ") + name);
    }
    for (const char* fold : {"fold_00", "fold_01"}) {
      check(fs::exists(cv_dir / fold / "train_log.csv") &&
                fs::exists(cv_dir / fold / "best.ckpt") &&
                fs::exists(cv_dir / fold / "round_0.ckpt"),
            std::string("cv writes ") + fold + " train log and checkpoints");
    }
    const std::string log = slurp(cv_dir / "fold_00" / "train_log.csv");
    check(contains(log,
                   "round,epoch,steps,learning_rate,train_loss,train_accuracy,val_loss,"
                   "val_accuracy,improved,seconds"),
          "train_log.csv carries the standard header");
    const std::string man = slurp(cv_dir / "run_manifest.json");
    check(contains(man, "\"command\": \"cv\"") && contains(man, "dataset_checksum"),
          "run_manifest.json records the command and dataset checksum");
    const std::string metrics = slurp(cv_dir / "metrics.csv");
    check(contains(metrics, "level,tp,fn,tn,fp,sensitivity,specificity,accuracy"),
          "metrics.csv uses the detection layout");
  }

  // predict: detection decision from the produced checkpoint
  {
    const fs::path walk = data_dir / "SynPt01_1.txt";
    const CmdResult r = cli.run("predict --checkpoint " + (cv_dir / "fold_00" / "best.ckpt").string() +
                                " --walk-file " + walk.string());
    check(r.exit_code == 0, "predict exits 0");
    check(contains(r.out, "windows: 26"), "predict reports the window count");
    check(contains(r.out, "decision: Parkinson") || contains(r.out, "decision: Control"),
          "predict prints a detection decision");
  }

  // cv + predict: severity head
  const fs::path sev_dir = tmp.path() / "sev_out";
  {
    const CmdResult r = cli.run("cv --cache " + cache.string() +
                                " --task severity --folds 2 --seed 4" + tiny_flags +
                                " --out-dir " + sev_dir.string());
    check(r.exit_code == 0, "severity cv exits 0");
    check(contains(r.out, "severity, 2-fold subject-level cross validation"),
          "severity cv prints the report header");
    check(contains(slurp(sev_dir / "metrics.csv"), "level,class,precision,recall,f1,support"),
          "severity metrics.csv uses the per-class layout");

    const CmdResult p = cli.run("predict --checkpoint " +
                                (sev_dir / "fold_00" / "best.ckpt").string() + " --walk-file " +
                                (data_dir / "SynCo01_1.txt").string());
    check(p.exit_code == 0 && contains(p.out, "class histogram:") &&
              contains(p.out, "decision: class "),
          "severity predict prints a histogram and class decision");
  }

  // ablate: one pair against a 4-channel baseline
  const fs::path ab_dir = tmp.path() / "ab_out";
  {
    const CmdResult r = cli.run("cv --help");
    check(r.exit_code == 0 && contains(r.out, "--out-dir"), "cv --help documents --out-dir");

    const CmdResult ab = cli.run("ablate --cache " + cache.string() +
                                 " --task detection --folds 2 --seed 5 --window-len 16 --stride 8"
                                 " --normalize --channels L1,R1,L2,R2 --batch-size 32 --patience 1"
                                 " --halvings 0 --max-epochs 2 --jobs 1 --pairs L1R1 --out-dir " +
                                 ab_dir.string());
    check(ab.exit_code == 0, "ablate exits 0");
    check(contains(ab.out, "sensor pair ablation"), "ablate prints the report");
    check(contains(ab.out, "L1R1"), "ablate reports the removed pair");
    check(fs::exists(ab_dir / "ablation_report.txt") && fs::exists(ab_dir / "ablation.csv") &&
              fs::exists(ab_dir / "run_manifest.json"),
          "ablate writes its artifacts");
    check(contains(slurp(ab_dir / "ablation.csv"), "removed,level,sensitivity,specificity,accuracy"),
          "ablation.csv uses the standard layout");
  }

  // usage errors exit 2
  {
    const CmdResult r = cli.run("cv --cache " + cache.string());
    check(r.exit_code == 2, "cv without --out-dir exits 2");

    const CmdResult folds = cli.run("cv --cache " + cache.string() + " --folds 1 --out-dir " +
                                    (tmp.path() / "bad").string());
    check(folds.exit_code == 2 && contains(folds.err, "--folds must be >= 2"),
          "cv --folds 1 exits 2 with a usage message");

    const CmdResult pair = cli.run("ablate --cache " + cache.string() +
                                   " --pairs L9R9 --out-dir " + (tmp.path() / "bad").string());
    check(pair.exit_code == 2 && contains(pair.err, "unknown pair"),
          "ablate with an unknown pair exits 2");

    const CmdResult chan = cli.run("cv --cache " + cache.string() + " --channels Q7 --out-dir " +
                                   (tmp.path() / "bad").string());
    check(chan.exit_code == 2 && contains(chan.err, "unknown channel"),
          "cv with an unknown channel exits 2");

    const CmdResult nodata = cli.run("cv --folds 2 --out-dir " + (tmp.path() / "bad").string());
    check(nodata.exit_code == 2 && contains(nodata.err, "--data-root"),
          "cv without a data source exits 2");
  }

  // data errors exit 3
  {
    const fs::path short_walk = tmp.path() / "short.txt";
    pdgait::write_walk_file(short_walk, Eigen::MatrixXd::Zero(10, 18));
    const CmdResult r = cli.run("predict --checkpoint " +
                                (cv_dir / "fold_00" / "best.ckpt").string() + " --walk-file " +
                                short_walk.string());
    check(r.exit_code == 3 && contains(r.err, "no full windows"),
          "predict on a too-short walk exits 3");

    const CmdResult missing = cli.run("predict --checkpoint " +
                                      (tmp.path() / "nope.ckpt").string() + " --walk-file " +
                                      short_walk.string());
    check(missing.exit_code == 3, "predict with a missing checkpoint exits 3");
  }

  if (g_failures == 0) {
    std::printf("cli contract: all checks passed\n");
    return 0;
  }
  std::printf("cli contract: %d checks failed\n", g_failures);
  return 1;
}
