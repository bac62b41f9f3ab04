// pdgait command line: ingest / cv / ablate / predict.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 training failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pdgait/checkpoint.hpp"
#include "pdgait/dataset_cache.hpp"
#include "pdgait/evaluation.hpp"
#include "pdgait/report.hpp"
#include "pdgait/training.hpp"
#include "pdgait/vgrf_data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdgait;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

struct DataArgs {
  std::string data_root;
  std::string manifest;
  std::string exclusions;
  std::string cache;
};

void add_data_flags(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--data-root", args.data_root, "directory of walk .txt files");
  cmd->add_option("--manifest", args.manifest, "demographics manifest");
  cmd->add_option("--exclusions", args.exclusions, "walk exclusion manifest");
  cmd->add_option("--cache", args.cache, "validated dataset cache from 'ingest --out'");
}

// Either a cache file or data-root + manifest.
Dataset load_data(const DataArgs& args) {
  if (!args.cache.empty()) return load_dataset_cache(args.cache);
  if (args.data_root.empty() || args.manifest.empty()) {
    throw ConfigError("need either --cache or both --data-root and --manifest");
  }
  fs::path excl;
  const fs::path* excl_ptr = nullptr;
  if (!args.exclusions.empty()) {
    excl = args.exclusions;
    excl_ptr = &excl;
  }
  return load_dataset(args.data_root, args.manifest, excl_ptr);
}

std::string utc_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<Channel> parse_channel_list(const std::vector<std::string>& names) {
  std::vector<Channel> out;
  for (const std::string& name : names) {
    const auto c = channel_from_string(name);
    if (!c) throw ConfigError("unknown channel '" + name + "'");
    out.push_back(*c);
  }
  if (out.empty()) throw ConfigError("channel list is empty");
  return out;
}

json channels_to_json(const std::vector<Channel>& channels) {
  json arr = json::array();
  for (Channel c : channels) arr.push_back(to_string(c));
  return arr;
}

// Config file keys (all optional): window_len, stride, normalize, channels,
// dropout {branch, concat, head}, train {batch_size, initial_lr, patience,
// lr_halvings, max_epochs_per_round}.
struct RunSettings {
  CvConfig cv;
  double branch_dropout = 0.5;
  double concat_dropout = 0.5;
  double head_dropout = 0.5;
  std::uint64_t config_hash = 0;
};

void apply_config_file(RunSettings& s, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  s.config_hash = detail::fnv1a(text);
  json cfg;
  try {
    cfg = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (cfg.contains("window_len")) s.cv.window_len = cfg["window_len"].get<int>();
  if (cfg.contains("stride")) s.cv.stride = cfg["stride"].get<int>();
  if (cfg.contains("normalize")) s.cv.normalize = cfg["normalize"].get<bool>();
  if (cfg.contains("channels")) {
    s.cv.channels = parse_channel_list(cfg["channels"].get<std::vector<std::string>>());
  }
  if (cfg.contains("dropout")) {
    const auto& d = cfg["dropout"];
    if (d.contains("branch")) s.branch_dropout = d["branch"].get<double>();
    if (d.contains("concat")) s.concat_dropout = d["concat"].get<double>();
    if (d.contains("head")) s.head_dropout = d["head"].get<double>();
  }
  if (cfg.contains("train")) {
    const auto& t = cfg["train"];
    if (t.contains("batch_size")) s.cv.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("initial_lr")) s.cv.train.initial_lr = t["initial_lr"].get<double>();
    if (t.contains("patience")) s.cv.train.patience = t["patience"].get<int>();
    if (t.contains("lr_halvings")) s.cv.train.lr_halvings = t["lr_halvings"].get<int>();
    if (t.contains("max_epochs_per_round")) {
      s.cv.train.max_epochs_per_round = t["max_epochs_per_round"].get<int>();
    }
  }
}

json settings_to_json(const RunSettings& s) {
  return json{{"task", s.cv.task == HeadKind::Detection ? "detection" : "severity"},
              {"folds", s.cv.folds},
              {"seed", s.cv.seed},
              {"window_len", s.cv.window_len},
              {"stride", s.cv.stride},
              {"normalize", s.cv.normalize},
              {"channels", channels_to_json(s.cv.channels)},
              {"dropout",
               {{"branch", s.branch_dropout}, {"concat", s.concat_dropout}, {"head", s.head_dropout}}},
              {"train",
               {{"batch_size", s.cv.train.batch_size},
                {"initial_lr", s.cv.train.initial_lr},
                {"patience", s.cv.train.patience},
                {"lr_halvings", s.cv.train.lr_halvings},
                {"max_epochs_per_round", s.cv.train.max_epochs_per_round}}},
              {"jobs", s.cv.jobs}};
}

void write_run_manifest(const fs::path& path, const char* command, const RunSettings& s,
                        const Dataset& ds, const json& extra) {
  json m = {{"tool_version", kToolVersion},
            {"command", command},
            {"created_utc", utc_now()},
            {"dataset_checksum", hex64(dataset_checksum(ds))},
            {"config", settings_to_json(s)}};
  if (s.config_hash != 0) m["config_file_hash"] = hex64(s.config_hash);
  for (const auto& [key, value] : extra.items()) m[key] = value;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << m.dump(2) << '\n';
}

CheckpointMeta meta_from(const WindowSet& train_ws, const std::vector<Channel>& channels) {
  CheckpointMeta meta;
  meta.stride = train_ws.stride();
  meta.normalized = train_ws.normalized();
  if (meta.normalized) {
    for (Channel c : channels) {
      meta.norm_mean.push_back(train_ws.norm_mean()(static_cast<int>(c)));
      meta.norm_std.push_back(train_ws.norm_std()(static_cast<int>(c)));
    }
  }
  return meta;
}

long total_windows(const Dataset& ds, int window_len, int stride, int* short_walks = nullptr) {
  long n = 0;
  int too_short = 0;
  for (const Walk& walk : ds.walks) {
    const auto starts = window_starts(static_cast<int>(walk.samples.rows()), window_len, stride);
    if (starts.empty()) ++too_short;
    n += static_cast<long>(starts.size());
  }
  if (short_walks) *short_walks = too_short;
  return n;
}

int cmd_ingest(const DataArgs& data, const std::string& out_cache, int window_len, int stride) {
  const Dataset ds = load_data(data);
  int too_short = 0;
  const long windows = total_windows(ds, window_len, stride, &too_short);
  std::printf("subjects: %d parkinson / %d control\n", ds.subject_count(Group::Parkinson),
              ds.subject_count(Group::Control));
  std::printf("walks:    %d parkinson / %d control (%zu excluded by manifest)\n",
              ds.walk_count(Group::Parkinson), ds.walk_count(Group::Control), ds.excluded.size());
  std::printf("windows:  %ld (window_len %d, stride %d; %d walks too short)\n", windows,
              window_len, stride, too_short);
  if (!out_cache.empty()) {
    save_dataset_cache(out_cache, ds);
    std::printf("cache:    %s (checksum %s)\n", out_cache.c_str(),
                hex64(dataset_checksum(ds)).c_str());
  }
  return 0;
}

int cmd_cv(const DataArgs& data, const RunSettings& settings, const std::string& out_dir) {
  const Dataset ds = load_data(data);
  const fs::path out(out_dir);
  fs::create_directories(out);

  RunSettings s = settings;
  FoldSink sink = [&](const FoldResult& fr, Network& best, const WindowSet& train_ws) {
    char name[32];
    std::snprintf(name, sizeof(name), "fold_%02d", fr.fold);
    const fs::path fold_dir = out / name;
    fs::create_directories(fold_dir);
    write_train_log_csv(fold_dir / "train_log.csv", fr.log);
    save_checkpoint(fold_dir / "best.ckpt", best, meta_from(train_ws, best.config().channels));
  };
  RoundSink round_sink = [&](int fold, int round, Network& best, const WindowSet& train_ws) {
    char name[32];
    std::snprintf(name, sizeof(name), "fold_%02d", fold);
    const fs::path fold_dir = out / name;
    fs::create_directories(fold_dir);
    char ck[32];
    std::snprintf(ck, sizeof(ck), "round_%d.ckpt", round);
    save_checkpoint(fold_dir / ck, best, meta_from(train_ws, best.config().channels));
  };

  const CvResult cv = run_cv(ds, s.cv, sink, round_sink);
  cv.plan.write(out / "fold_plan.txt");
  const std::string report = format_cv_report(cv);
  std::fputs(report.c_str(), stdout);
  write_text(out / "report.txt", report);
  write_metrics_csv(out / "metrics.csv", cv);
  write_walk_votes_csv(out / "walk_votes.csv", cv.folds);
  write_run_manifest(out / "run_manifest.json", "cv", s, ds,
                     json{{"fold_plan", "fold_plan.txt"}});
  return 0;
}

int cmd_ablate(const DataArgs& data, const RunSettings& settings,
               const std::vector<SensorPair>& pairs, const std::string& out_dir) {
  const Dataset ds = load_data(data);
  const fs::path out(out_dir);
  fs::create_directories(out);

  const AblationResult ab = run_ablation(ds, settings.cv, pairs);
  const std::string report = format_ablation_report(ab);
  std::fputs(report.c_str(), stdout);
  write_text(out / "ablation_report.txt", report);
  write_ablation_csv(out / "ablation.csv", ab);
  json pair_names = json::array();
  for (const SensorPair& p : pairs) pair_names.push_back(p.name);
  write_run_manifest(out / "run_manifest.json", "ablate", settings, ds,
                     json{{"pairs", pair_names}});
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& walk_file) {
  auto [net, meta] = load_checkpoint(checkpoint);
  const ModelConfig& cfg = net.config();
  const Eigen::MatrixXd samples = parse_walk_samples(walk_file);
  const auto starts =
      window_starts(static_cast<int>(samples.rows()), cfg.window_len, meta.stride);
  if (starts.empty()) {
    throw EmptyPredictionSet(walk_file + ": no full windows (walk has " +
                             std::to_string(samples.rows()) + " samples, window needs " +
                             std::to_string(cfg.window_len) + ")");
  }

  const int n = static_cast<int>(starts.size());
  const int n_ch = cfg.n_channels();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n) * cfg.window_len, n_ch);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n_ch; ++k) {
      const int c = static_cast<int>(cfg.channels[static_cast<std::size_t>(k)]);
      auto dst = x.col(k).segment(static_cast<Eigen::Index>(j) * cfg.window_len, cfg.window_len);
      dst = samples.col(c).segment(starts[static_cast<std::size_t>(j)], cfg.window_len);
      if (meta.normalized) {
        dst = (dst.array() - meta.norm_mean[static_cast<std::size_t>(k)]) /
              meta.norm_std[static_cast<std::size_t>(k)];
      }
    }
  }
  const Eigen::MatrixXd pred = net.forward(x, n, nn::Mode::Eval);

  std::printf("windows: %d\n", n);
  if (cfg.head == HeadKind::Detection) {
    long positive = 0;
    for (int j = 0; j < n; ++j) positive += classify_detection(pred(j, 0));
    const double frac = static_cast<double>(positive) / static_cast<double>(n);
    std::printf("parkinson windows: %ld of %d (%.1f%%)\n", positive, n, frac * 100.0);
    std::printf("decision: %s\n",
                aggregate_detection(positive, n) == 1 ? "Parkinson" : "Control");
  } else {
    std::array<long, kSeverityClasses> votes{};
    for (int j = 0; j < n; ++j) ++votes[static_cast<std::size_t>(classify_severity(pred.row(j)) - 1)];
    std::printf("class histogram:");
    for (int k = 0; k < kSeverityClasses; ++k) std::printf(" %d:%ld", k + 1, votes[static_cast<std::size_t>(k)]);
    std::printf("\n");
    std::printf("decision: class %d\n", aggregate_severity(votes));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gait-based Parkinson detection and severity classification"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a dataset and report counts");
  DataArgs ingest_data;
  add_data_flags(ingest, ingest_data);
  std::string ingest_out;
  int ingest_wl = kDefaultWindowLen, ingest_stride = kDefaultStride;
  ingest->add_option("--out", ingest_out, "write a validated dataset cache here");
  ingest->add_option("--window-len", ingest_wl, "window length for the count report");
  ingest->add_option("--stride", ingest_stride, "stride for the count report");

  // shared cv/ablate flags
  auto add_run_flags = [](CLI::App* cmd, DataArgs& data, RunSettings& s, std::string& out_dir,
                          std::string& config_file, std::string& task,
                          std::vector<std::string>& channel_names) {
    add_data_flags(cmd, data);
    cmd->add_option("--task", task, "detection|severity")->default_str("detection");
    cmd->add_option("--folds", s.cv.folds, "cross-validation folds");
    cmd->add_option("--seed", s.cv.seed, "master seed (fans out to folds, init, dropout)");
    cmd->add_option("--window-len", s.cv.window_len, "window length");
    cmd->add_option("--stride", s.cv.stride, "window stride");
    cmd->add_flag("--normalize", s.cv.normalize, "z-score channels with train-fold stats");
    cmd->add_option("--channels", channel_names, "comma-separated channel subset")
        ->delimiter(',');
    cmd->add_option("--batch-size", s.cv.train.batch_size, "mini-batch size");
    cmd->add_option("--initial-lr", s.cv.train.initial_lr, "initial learning rate");
    cmd->add_option("--patience", s.cv.train.patience, "early-stopping patience (epochs)");
    cmd->add_option("--halvings", s.cv.train.lr_halvings, "learning-rate halvings (restarts)");
    cmd->add_option("--max-epochs", s.cv.train.max_epochs_per_round, "epoch cap per round");
    cmd->add_option("--jobs", s.cv.jobs, "parallel fold training sessions");
    cmd->add_option("--config", config_file, "JSON config file (flags override it)");
    cmd->add_option("--out-dir", out_dir, "output directory")->required();
  };

  auto* cv = app.add_subcommand("cv", "stratified subject-level cross-validation");
  DataArgs cv_data;
  RunSettings cv_settings;
  cv_settings.cv.jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (cv_settings.cv.jobs < 1) cv_settings.cv.jobs = 1;
  std::string cv_out, cv_config, cv_task = "detection";
  std::vector<std::string> cv_channels;
  add_run_flags(cv, cv_data, cv_settings, cv_out, cv_config, cv_task, cv_channels);

  auto* ablate = app.add_subcommand("ablate", "retrain with symmetric sensor pairs removed");
  DataArgs ab_data;
  RunSettings ab_settings;
  ab_settings.cv.jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (ab_settings.cv.jobs < 1) ab_settings.cv.jobs = 1;
  std::string ab_out, ab_config, ab_task = "detection";
  std::vector<std::string> ab_channels;
  std::vector<std::string> ab_pairs{"all"};
  add_run_flags(ablate, ab_data, ab_settings, ab_out, ab_config, ab_task, ab_channels);
  ablate->add_option("--pairs", ab_pairs, "'all' or comma-separated pair names (L1R1..L8R8, Total)")
      ->delimiter(',');

  auto* predict = app.add_subcommand("predict", "classify one walk file with a checkpoint");
  std::string pr_checkpoint, pr_walk;
  predict->add_option("--checkpoint", pr_checkpoint, "trained checkpoint")->required();
  predict->add_option("--walk-file", pr_walk, "walk signal file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto finalize_settings = [](RunSettings& s, CLI::App* cmd, const std::string& config_file,
                              const std::string& task, const std::vector<std::string>& channels) {
    // precedence: defaults < config file < explicit flags
    RunSettings flag_values = s;
    if (!config_file.empty()) apply_config_file(s, config_file);
    if (cmd->count("--window-len")) s.cv.window_len = flag_values.cv.window_len;
    if (cmd->count("--stride")) s.cv.stride = flag_values.cv.stride;
    if (cmd->count("--normalize")) s.cv.normalize = flag_values.cv.normalize;
    if (cmd->count("--batch-size")) s.cv.train.batch_size = flag_values.cv.train.batch_size;
    if (cmd->count("--initial-lr")) s.cv.train.initial_lr = flag_values.cv.train.initial_lr;
    if (cmd->count("--patience")) s.cv.train.patience = flag_values.cv.train.patience;
    if (cmd->count("--halvings")) s.cv.train.lr_halvings = flag_values.cv.train.lr_halvings;
    if (cmd->count("--max-epochs")) {
      s.cv.train.max_epochs_per_round = flag_values.cv.train.max_epochs_per_round;
    }
    if (!channels.empty()) s.cv.channels = parse_channel_list(channels);
    if (task == "detection") {
      s.cv.task = HeadKind::Detection;
    } else if (task == "severity") {
      s.cv.task = HeadKind::Severity;
    } else {
      throw ConfigError("--task must be 'detection' or 'severity'");
    }
    if (s.cv.folds < 2) throw ConfigError("--folds must be >= 2");
    if (s.cv.jobs < 1) throw ConfigError("--jobs must be >= 1");
  };

  try {
    if (*ingest) return cmd_ingest(ingest_data, ingest_out, ingest_wl, ingest_stride);
    if (*cv) {
      try {
        finalize_settings(cv_settings, cv, cv_config, cv_task, cv_channels);
      } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
      }
      return cmd_cv(cv_data, cv_settings, cv_out);
    }
    if (*ablate) {
      std::vector<SensorPair> pairs;
      try {
        finalize_settings(ab_settings, ablate, ab_config, ab_task, ab_channels);
        if (ab_pairs.size() == 1 && ab_pairs[0] == "all") {
          pairs = all_sensor_pairs();
        } else {
          for (const std::string& name : ab_pairs) {
            const auto p = sensor_pair_from_string(name);
            if (!p) {
              std::string valid;
              for (const SensorPair& sp : all_sensor_pairs()) valid += " " + sp.name;
              throw ConfigError("unknown pair '" + name + "'; valid:" + valid);
            }
            pairs.push_back(*p);
          }
        }
      } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
      }
      return cmd_ablate(ab_data, ab_settings, pairs, ab_out);
    }
    if (*predict) return cmd_predict(pr_checkpoint, pr_walk);
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "training failure: %s\n", e.what());
    return kExitTraining;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
