// kmix command-line tool. Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kmix/kmix.hpp"
#include "kmix/png_io.hpp"

namespace fs = std::filesystem;
using namespace kmix;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Accepts plain reals and "a/b" fractions, so --alpha 2/9 works.
double parse_real(const std::string& text) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    const std::string num = text.substr(0, slash);
    const std::string den = text.substr(slash + 1);
    std::size_t u1 = 0, u2 = 0;
    const double a = std::stod(num, &u1);
    const double b = std::stod(den, &u2);
    if (u1 != num.size() || u2 != den.size() || b == 0.0) throw std::invalid_argument(text);
    return a / b;
  } catch (const std::logic_error&) {
    throw UsageError("not a number: '" + text + "'");
  }
}

/// Scalar alpha expands to a symmetric vector of length n.
std::vector<double> expand_alpha(const std::vector<std::string>& raw, std::size_t n, const std::string& what) {
  std::vector<double> a;
  for (const auto& s : raw) a.push_back(parse_real(s));
  if (a.size() == 1) a.assign(n, a.front());
  if (a.size() != n) {
    throw UsageError("--alpha needs 1 or " + std::to_string(n) + " values for " + what + ", got " +
                     std::to_string(raw.size()));
  }
  for (double v : a) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("--alpha values must be positive");
  }
  return a;
}

// ---------------------------------------------------------------- datasets

struct InputOptions {
  std::string path;
  std::string format = "cifar10-bin";
  std::string labels;
  int classes = 0;

  void add_to(CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("--input", path, "dataset file (cifar10-bin) or directory (png-dir)");
    if (required) opt->required();
    cmd->add_option("--format", format, "input format")->check(CLI::IsMember({"cifar10-bin", "png-dir"}));
    cmd->add_option("--labels", labels, "label CSV for png-dir (default <input>/labels.csv)");
    cmd->add_option("--classes", classes, "class count for png-dir (default max class + 1)");
  }

  Dataset load() const {
    if (format == "cifar10-bin") return read_cifar10_bin(path);
    const fs::path csv = labels.empty() ? fs::path(path) / "labels.csv" : fs::path(labels);
    return read_png_dir(path, csv, classes > 0 ? std::optional<int>(classes) : std::nullopt);
  }
};

const char* kSidecarName = "soft_labels.ndjson";

/// Writes `fill` into a fresh temp directory, then swaps it in for `out`. An
/// existing `out` is only replaced if it is empty or an earlier kmix output.
void write_output_dir(const fs::path& out, const std::function<void(const fs::path&)>& fill) {
  if (fs::exists(out)) {
    const bool ours = fs::is_directory(out) &&
                      (fs::is_empty(out) || fs::exists(out / kSidecarName));
    if (!ours) throw FormatError(out.string() + " exists and is not a kmix output directory");
  }
  fs::path tmp = out;
  tmp += ".kmix-tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fill(tmp);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  fs::remove_all(out);
  fs::rename(tmp, out);
}

void write_dataset(const fs::path& dir, const std::string& format, const Dataset& data) {
  if (format == "cifar10-bin") {
    write_cifar10_bin(dir / "data.bin", data);
  } else {
    write_png_dir(dir, data);
  }
}

std::string fmt_real(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// ---------------------------------------------------------------- synth

struct SynthCmd {
  int classes = 3;
  int per_class = 200;
  int width = 16;
  int height = 16;
  int channels = 1;
  std::uint64_t seed = 0;
  std::string format = "png-dir";
  std::string out;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("synth", "generate a synthetic Gaussian-blob dataset");
    cmd->add_option("--classes", classes)->check(CLI::Range(1, 255));
    cmd->add_option("--per-class", per_class)->check(CLI::PositiveNumber);
    cmd->add_option("--width", width)->check(CLI::PositiveNumber);
    cmd->add_option("--height", height)->check(CLI::PositiveNumber);
    cmd->add_option("--channels", channels)->check(CLI::Range(1, 4));
    cmd->add_option("--seed", seed);
    cmd->add_option("--format", format)->check(CLI::IsMember({"cifar10-bin", "png-dir"}));
    cmd->add_option("--out", out, "output directory")->required();
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    if (format == "cifar10-bin" && (width != 32 || height != 32 || channels != 3 || classes > 10)) {
      throw UsageError("cifar10-bin output needs --width 32 --height 32 --channels 3 and at most 10 classes");
    }
    const Dataset data = make_synthetic_dataset(classes, per_class, width, height, seed, channels);
    write_output_dir(out, [&](const fs::path& dir) {
      write_dataset(dir, format, data);
      std::string side;
      for (std::size_t i = 0; i < data.size(); ++i) {
        side += nlohmann::json{{"record", i}, {"label", data.sample(i).label.vec()}}.dump() + "\n";
      }
      write_file_atomic(dir / kSidecarName, side);
    });
  }
};

// ---------------------------------------------------------------- augment

struct AugmentCmd {
  InputOptions input;
  std::string method = "dcutmix";
  int k = 2;
  std::vector<std::string> alpha{"1"};
  long long count = -1;
  std::uint64_t seed = 0;
  std::string out;
  std::string out_format;
  std::string saliency_dir;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("augment", "write a mixed copy of a dataset");
    input.add_to(cmd);
    cmd->add_option("--method", method)->check(CLI::IsMember({"dcutmix", "dmixup", "saliency-dcutmix"}));
    cmd->add_option("--k", k, "images per composite");
    cmd->add_option("--alpha", alpha, "Dirichlet alpha: one value (symmetric) or k values")->delimiter(',');
    cmd->add_option("--count", count, "records to write (default: dataset size)");
    cmd->add_option("--seed", seed);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--out-format", out_format, "output format (default: input format)")
        ->check(CLI::IsMember({"cifar10-bin", "png-dir"}));
    cmd->add_option("--saliency-dir", saliency_dir, "directory of NNNNNN.pgm maps, one per record");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    if (k < 2) throw UsageError("--k must be at least 2");
    if (count == 0 || count < -1) throw UsageError("--count must be positive");
    const MixMethod m = parse_method(method);
    if (m == MixMethod::saliency_dcutmix && saliency_dir.empty()) {
      throw UsageError("saliency-dcutmix requires --saliency-dir");
    }
    const DirichletParams params(expand_alpha(alpha, static_cast<std::size_t>(k), "--k"));

    const Dataset data = input.load();
    std::vector<SaliencyMap> maps;
    if (m == MixMethod::saliency_dcutmix) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto map = read_saliency(fs::path(saliency_dir) / (record_stem(i) + ".pgm"));
        if (map.width() != data.images[i].width() || map.height() != data.images[i].height()) {
          throw ShapeError("saliency map " + std::to_string(i) + " does not match its image");
        }
        maps.push_back(map);
      }
    }
    const auto samples = data.samples();
    const std::size_t total = count < 0 ? data.size() : static_cast<std::size_t>(count);

    // Output record i is batch item i mod N from round i / N; each round is
    // one augment_batch call over the whole dataset with its own seed.
    Dataset mixed;
    mixed.class_count = data.class_count;
    std::string side;
    const RngStream round_root(seed, 2);
    std::vector<AugmentedSample> round;
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t r = i / data.size();
      if (i % data.size() == 0) {
        round = augment_batch(samples, m, params, round_root.substream(r).next_u64(), maps);
      }
      const auto& s = round[i % data.size()];
      mixed.push_back(s.image, s.label.argmax());
      side += nlohmann::json{{"record", i},
                             {"sources", s.sources},
                             {"phi", s.sampled_phi.vec()},
                             {"realized", s.realized.vec()},
                             {"label", s.label.vec()}}
                  .dump() +
              "\n";
    }
    const std::string fmt = out_format.empty() ? input.format : out_format;
    write_output_dir(out, [&](const fs::path& dir) {
      write_dataset(dir, fmt, mixed);
      write_file_atomic(dir / kSidecarName, side);
    });
  }
};

// ---------------------------------------------------------------- uncertainty

struct UncertaintyCmd {
  InputOptions input;
  std::string oracle;
  std::size_t m = 10;
  double anchor_phi = 0.5;
  std::size_t non_anchors = 2;
  std::vector<std::string> alpha{"2/9"};
  std::uint64_t seed = 0;
  std::string pool_scope = "global";
  std::string out;
  CLI::Option* m_opt = nullptr;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("uncertainty", "score every sample by its mixed-loss distribution");
    input.add_to(cmd, false);
    cmd->add_option("--oracle", oracle, "toy:<checkpoint> or scores:<ndjson>")->required();
    m_opt = cmd->add_option("--m", m, "augmentations per anchor");
    cmd->add_option("--anchor-phi", anchor_phi, "fixed share of the anchor image");
    cmd->add_option("--non-anchors", non_anchors, "partners per composite");
    cmd->add_option("--alpha", alpha, "Dirichlet alpha over the partners")->delimiter(',');
    cmd->add_option("--seed", seed);
    cmd->add_option("--pool-scope", pool_scope)->check(CLI::IsMember({"global", "intra-class"}));
    cmd->add_option("--out", out, "score NDJSON path")->required();
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    UncertaintyConfig cfg;
    cfg.m_samples = m;
    cfg.non_anchor_count = non_anchors;
    cfg.anchor_share = anchor_phi;
    cfg.seed = seed;
    cfg.pool_scope = pool_scope == "global" ? PoolScope::global : PoolScope::intra_class;
    if (non_anchors < 1) throw UsageError("--non-anchors must be at least 1");
    cfg.non_anchor_alpha = expand_alpha(alpha, non_anchors, "--non-anchors");
    try {
      cfg.validate();
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }

    if (oracle.rfind("scores:", 0) == 0) {
      // Externally computed losses: recompute the statistics from them.
      ScoreTable table;
      for (auto& row : read_scores(oracle.substr(7))) {
        if (m_opt->count() > 0 && row.losses.size() != m) {
          throw FormatError("row " + std::to_string(row.index) + " has " + std::to_string(row.losses.size()) +
                            " losses, --m is " + std::to_string(m));
        }
        table.push_back(make_score_row(row.index, row.cls, std::move(row.losses)));
      }
      write_scores(out, table);
      return;
    }
    if (oracle.rfind("toy:", 0) != 0) throw UsageError("--oracle must be toy:<checkpoint> or scores:<ndjson>");
    if (input.path.empty()) throw UsageError("--input is required with a toy oracle");
    const ToyModel model = decode_checkpoint(read_file_bytes(oracle.substr(4)));
    const Dataset data = input.load();
    if (model.classes != data.class_count) {
      throw ShapeError("checkpoint has " + std::to_string(model.classes) + " classes, dataset has " +
                       std::to_string(data.class_count));
    }
    const auto& img = data.images.front();
    if (img.width() != model.width || img.height() != model.height || img.channels() != model.channels) {
      throw ShapeError("checkpoint expects " + std::to_string(model.width) + "x" + std::to_string(model.height) +
                       "x" + std::to_string(model.channels) + " images, dataset has " + img.shape_string());
    }
    write_scores(out, score_dataset(data, cfg, toy_oracle(model)));
  }
};

// ---------------------------------------------------------------- subsample

struct SubsampleCmd {
  std::string scores;
  double ratio = 0.0;
  std::string measure = "cv";
  std::string strategy = "deterministic";
  std::size_t interval = 0;
  bool per_class = false;
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("subsample", "select a subset from a score table");
    cmd->add_option("--scores", scores, "score NDJSON")->required();
    cmd->add_option("--ratio", ratio, "fraction t of each group to keep, in (0, 1]")->required();
    cmd->add_option("--measure", measure)->check(CLI::IsMember({"cv", "mean_desc", "mean_asc", "std", "random"}));
    cmd->add_option("--strategy", strategy)->check(CLI::IsMember({"deterministic", "interval"}));
    cmd->add_option("--interval", interval, "stride for the interval strategy (required there)");
    cmd->add_flag("--per-class", per_class, "select within each class separately");
    cmd->add_option("--seed", seed);
    cmd->add_option("--out", out, "index JSON path")->required();
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    SubsampleConfig cfg;
    cfg.ratio = ratio;
    cfg.measure = parse_measure(measure);
    cfg.strategy = parse_strategy(strategy);
    if (cfg.strategy == Strategy::interval && interval == 0) {
      throw UsageError("--strategy interval needs --interval >= 1");
    }
    cfg.interval = interval == 0 ? 1 : interval;
    cfg.per_class = per_class;
    cfg.seed = seed;
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    const ScoreTable table = read_scores(scores);
    if (table.empty()) throw FormatError(scores + ": no score rows");
    write_index_file(out, IndexFile{select(table, cfg), cfg});
  }
};

// ---------------------------------------------------------------- stats

struct StatsCmd {
  std::string method = "dcutmix";
  int k = 3;
  std::vector<std::string> alpha{"1/3"};
  int width = 64;
  int height = 64;
  long long trials = 20000;
  std::uint64_t seed = 0;
  std::string stick_law = "exact";
  bool json = false;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("stats", "check realized fractions against Dirichlet moments");
    cmd->add_option("--method", method)->check(CLI::IsMember({"dcutmix", "dmixup"}));
    cmd->add_option("--k", k);
    cmd->add_option("--alpha", alpha)->delimiter(',');
    cmd->add_option("--width", width);
    cmd->add_option("--height", height);
    cmd->add_option("--trials", trials);
    cmd->add_option("--seed", seed);
    cmd->add_option("--stick-law", stick_law, "exact (Gamma) or gem (independent Beta(1, alpha_k) sticks)")
        ->check(CLI::IsMember({"exact", "gem"}));
    cmd->add_flag("--json", json, "print a JSON report");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    if (k < 2) throw UsageError("--k must be at least 2");
    if (trials < 1) throw UsageError("--trials must be at least 1");
    if (width < 2 || height < 2) throw UsageError("--width and --height must be at least 2");
    const DirichletParams params(expand_alpha(alpha, static_cast<std::size_t>(k), "--k"));
    const MixMethod m = parse_method(method);
    const StickLaw law = stick_law == "gem" ? StickLaw::gem : StickLaw::exact;
    const auto kk = static_cast<std::size_t>(k);

    RngStream rng(seed, 0);
    std::vector<double> sum(kk, 0.0), sum_sq(kk, 0.0), phi1;
    phi1.reserve(static_cast<std::size_t>(trials));
    long long redraws = 0;
    for (long long t = 0; t < trials; ++t) {
      Simplex realized;
      for (int attempt = 0;; ++attempt) {
        const Simplex phi = sample_simplex(params, law, rng);
        if (m == MixMethod::dmixup) {
          realized = phi;
          phi1.push_back(phi[0]);
          break;
        }
        try {
          realized = realized_fractions(plan_dcutmix(width, height, phi, rng));
          phi1.push_back(phi[0]);
          break;
        } catch (const DegenerateSimplexError&) {
          ++redraws;
          if (attempt + 1 >= kMaxSimplexRedraws) throw;
        }
      }
      for (std::size_t i = 0; i < kk; ++i) {
        sum[i] += realized[i];
        sum_sq[i] += realized[i] * realized[i];
      }
    }

    const auto n = static_cast<double>(trials);
    std::sort(phi1.begin(), phi1.end());
    const double a1 = params[0];
    const double rest = params.total() - a1;
    double ks = 0.0;
    for (std::size_t i = 0; i < phi1.size(); ++i) {
      const double f = boost::math::ibeta(a1, rest, phi1[i]);
      ks = std::max({ks, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }

    nlohmann::json report = {{"method", method},     {"k", k},           {"alpha", params.values()},
                             {"width", width},       {"height", height}, {"trials", trials},
                             {"seed", seed},         {"stick_law", stick_law}};
    nlohmann::json comps = nlohmann::json::array();
    double max_mean_dev = 0.0, max_var_rel = 0.0;
    for (std::size_t i = 0; i < kk; ++i) {
      const double mean = sum[i] / n;
      const double var = std::max(0.0, sum_sq[i] / n - mean * mean);
      max_mean_dev = std::max(max_mean_dev, std::abs(mean - params.mean(i)));
      max_var_rel = std::max(max_var_rel, std::abs(var - params.variance(i)) / params.variance(i));
      comps.push_back({{"index", i},
                       {"mean", mean},
                       {"variance", var},
                       {"expected_mean", params.mean(i)},
                       {"expected_variance", params.variance(i)}});
    }
    report["components"] = comps;
    report["max_mean_deviation"] = max_mean_dev;
    report["max_variance_relative_deviation"] = max_var_rel;
    report["ks_phi1"] = ks;
    report["degenerate_redraws"] = redraws;

    if (json) {
      std::cout << report.dump(2) << "\n";
      return;
    }
    std::cout << method << " k=" << k << " " << width << "x" << height << " trials=" << trials
              << " seed=" << seed << " stick-law=" << stick_law << "\n";
    std::cout << "  i        mean    expected    variance    expected\n";
    for (const auto& c : comps) {
      std::cout << std::setw(3) << c["index"].get<std::size_t>() << std::fixed << std::setprecision(6)
                << std::setw(12) << c["mean"].get<double>() << std::setw(12) << c["expected_mean"].get<double>()
                << std::setw(12) << c["variance"].get<double>() << std::setw(12)
                << c["expected_variance"].get<double>() << "\n";
    }
    std::cout << "max |mean - expected|         " << max_mean_dev << "\n"
              << "max |var - expected| / expected " << max_var_rel << "\n"
              << "KS(phi_1 vs Beta marginal)    " << ks << "\n"
              << "degenerate redraws            " << redraws << "\n";
  }
};

// ---------------------------------------------------------------- train-toy

struct TrainCmd {
  InputOptions input;
  int epochs = 30;
  double lr = 0.1;
  std::size_t batch_size = 32;
  std::string augment = "none";
  int k = 2;
  std::vector<std::string> alpha{"1"};
  int hidden = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_out;
  std::string loss_csv;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("train-toy", "train the built-in softmax classifier");
    input.add_to(cmd);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--lr", lr);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--augment", augment)->check(CLI::IsMember({"none", "dcutmix", "dmixup"}));
    cmd->add_option("--k", k);
    cmd->add_option("--alpha", alpha)->delimiter(',');
    cmd->add_option("--hidden", hidden, "hidden units (0 = linear)");
    cmd->add_option("--seed", seed);
    cmd->add_option("--checkpoint-out", checkpoint_out)->required();
    cmd->add_option("--loss-csv", loss_csv, "loss history CSV (default <checkpoint-out>.loss.csv)");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() const {
    if (epochs < 0) throw UsageError("--epochs must be nonnegative");
    if (!(lr > 0.0)) throw UsageError("--lr must be positive");
    if (batch_size < 1) throw UsageError("--batch-size must be positive");
    if (hidden < 0) throw UsageError("--hidden must be nonnegative");
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    if (augment != "none") {
      if (k < 2) throw UsageError("--k must be at least 2");
      if (batch_size < static_cast<std::size_t>(k)) throw UsageError("--batch-size must be at least --k");
      cfg.augmentation = AugmentationSpec{parse_method(augment), expand_alpha(alpha, static_cast<std::size_t>(k), "--k")};
    }
    const Dataset data = input.load();
    const auto& img = data.images.front();
    ToyModel model = ToyModel::init(img.width(), img.height(), img.channels(), hidden, data.class_count, seed);
    const auto samples = data.samples();
    const TrainResult r = train(std::move(model), samples, cfg);

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
      csv += std::to_string(e + 1) + "," + fmt_real(r.loss_history[e]) + "\n";
    }
    write_file_atomic(checkpoint_out, encode_checkpoint(r.model));
    write_file_atomic(loss_csv.empty() ? checkpoint_out + ".loss.csv" : loss_csv, csv);
    if (!r.loss_history.empty()) std::cout << "final loss " << fmt_real(r.loss_history.back()) << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kmix: Dirichlet K-image mixing, uncertainty scoring and subsampling"};
  app.require_subcommand(1);
  std::function<void()> run;
  SynthCmd synth;
  AugmentCmd augment;
  UncertaintyCmd uncertainty;
  SubsampleCmd subsample;
  StatsCmd stats;
  TrainCmd train_toy;
  synth.add(app, run);
  augment.add(app, run);
  uncertainty.add(app, run);
  subsample.add(app, run);
  stats.add(app, run);
  train_toy.add(app, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    run();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
