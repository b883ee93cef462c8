// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <boost/math/special_functions/beta.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kmix/kmix.hpp"
#include "kmix/png_io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace kmix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// DCutMix realized fractions with the same bounded redraw rule as the
/// library's batch path.
Simplex realized_draw(const DirichletParams& params, int w, int h, RngStream& rng, Simplex* sampled = nullptr) {
  for (int attempt = 0;; ++attempt) {
    const Simplex phi = sample_dirichlet(params, rng);
    try {
      const auto plan = plan_dcutmix(w, h, phi, rng);
      if (sampled) *sampled = phi;
      return realized_fractions(plan);
    } catch (const DegenerateSimplexError&) {
      if (attempt + 1 >= kMaxSimplexRedraws) throw;
    }
  }
}

Outcome fraction_law() {
  const auto t0 = std::chrono::steady_clock::now();
  const DirichletParams params = DirichletParams::symmetric(3, 1.0 / 3.0);
  auto rng = split_stream(1001, 0);
  std::vector<std::vector<double>> cols(3);
  for (int t = 0; t < 20000; ++t) {
    const auto r = realized_draw(params, 64, 64, rng);
    for (std::size_t i = 0; i < 3; ++i) cols[i].push_back(r[i]);
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  std::string detail;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto m = test::moments_of(cols[i]);
    ok &= std::abs(m.mean - 1.0 / 3.0) <= 0.01;
    ok &= std::abs(m.var - 1.0 / 9.0) <= 0.15 / 9.0;
    detail += "phi" + std::to_string(i + 1) + " mean " + num(m.mean) + " var " + num(m.var) + "; ";
  }
  return {ok, detail + num(secs, 3) + " s"};
}

Outcome cutmix_reduction() {
  const DirichletParams params = DirichletParams::symmetric(2, 1.0);
  auto rng = split_stream(1002, 0);
  std::vector<double> sampled, realized;
  for (int t = 0; t < 20000; ++t) {
    Simplex phi;
    const auto r = realized_draw(params, 32, 32, rng, &phi);
    sampled.push_back(phi[0]);
    realized.push_back(r[0]);
  }
  const double ks = test::ks_statistic(sampled, [](double x) { return std::clamp(x, 0.0, 1.0); });
  const double mean = test::moments_of(realized).mean;
  return {ks < 0.02 && std::abs(mean - 0.5) <= 0.01, "KS " + num(ks) + ", realized mean " + num(mean)};
}

Outcome sbp_round_trip() {
  auto rng = split_stream(1003, 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 8));
    std::vector<double> alpha(k);
    for (auto& a : alpha) a = 0.5 + 2.5 * rng.uniform();
    const Simplex phi = sample_dirichlet(DirichletParams(alpha), rng);
    const Simplex back = simplex_from_sticks(sticks_from_simplex(phi));
    for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(back[i] - phi[i]));
  }
  return {worst < 1e-9, "max component error " + num(worst, 3)};
}

Outcome label_exactness() {
  auto rng = split_stream(1004, 0);
  long long checked = 0;
  double worst_sum = 0.0;
  bool ok = true;
  while (checked < 10000 && ok) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 6));
    const int w = static_cast<int>(rng.uniform_int(2, 40));
    const int h = static_cast<int>(rng.uniform_int(2, 40));
    const int classes = 8;
    // Distinct classes per slot, so each label entry is one pixel ratio.
    std::vector<int> cls(classes);
    std::iota(cls.begin(), cls.end(), 0);
    rng.shuffle(std::span(cls));
    std::vector<ImageTensor> images(k, ImageTensor(w, h, 1));
    std::vector<SoftLabel> labels;
    for (std::size_t i = 0; i < k; ++i) labels.push_back(SoftLabel::one_hot(cls[i], classes));
    CompositePlan plan;
    try {
      plan = plan_dcutmix(w, h, sample_dirichlet(DirichletParams::symmetric(k, 0.3 + 2.0 * rng.uniform()), rng), rng);
    } catch (const DegenerateSimplexError&) {
      continue;
    }
    const auto mixed = compose_dcutmix(images, labels, plan);
    const auto painted = test::painted_counts(plan);
    const auto counts = region_pixel_counts(plan);
    const long long area = static_cast<long long>(w) * h;
    ok &= std::accumulate(counts.begin(), counts.end(), 0LL) == area;
    ok &= counts == painted;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      ok &= mixed.label[static_cast<std::size_t>(cls[i])] == static_cast<double>(painted[i]) / static_cast<double>(area);
    }
    for (double p : mixed.label.values()) sum += p;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    ok &= std::abs(sum - 1.0) <= 1e-12;
    ++checked;
  }
  return {ok && checked == 10000, std::to_string(checked) + " composites, max |sum - 1| " + num(worst_sum, 3)};
}

Outcome gradient_oracle() {
  double worst = 0.0;
  for (int hidden : {0, 12}) {
    const auto [m, batch] = test::gradient_fixture(hidden, 1005 + static_cast<std::uint64_t>(hidden));
    worst = std::max(worst, test::gradient_check(m, batch, 20, 77 + static_cast<std::uint64_t>(hidden)));
  }
  return {worst < 1e-4, "max relative error " + num(worst, 3) + " (linear and 12-unit hidden layer)"};
}

Outcome uncertainty_pipeline() {
  const Dataset data = make_synthetic_dataset(3, 200, 16, 16, 1006);
  const auto samples = data.samples();
  TrainConfig tc;
  tc.seed = 1006;
  const ToyModel model = train(ToyModel::init(16, 16, 1, 0, 3, 1006), samples, tc).model;
  UncertaintyConfig cfg;  // M=10, two partners, alpha 2/9 each, anchor share 0.5
  cfg.seed = 2006;
  const auto t0 = std::chrono::steady_clock::now();
  const ScoreTable table = score_dataset(data, cfg, toy_oracle(model));
  const double secs = seconds_since(t0);
  const ScoreTable again = score_dataset(data, cfg, toy_oracle(model));
  const bool identical = encode_scores(table) == encode_scores(again);

  bool shape_ok = table.size() == 600;
  bool scale_ok = true;
  bool reorder_ok = true;
  auto rng = split_stream(3006, 0);
  for (const auto& row : table) {
    shape_ok &= row.losses.size() == 10;
    const auto base = summarize_losses(row.losses);
    auto scaled = row.losses;
    const double c = std::exp(6.0 * rng.uniform() - 3.0);
    for (auto& l : scaled) l *= c;
    scale_ok &= std::abs(cv_score(scaled) - base.cv) <= 1e-12 * std::max(1.0, base.cv);
    auto twice = row.losses;
    for (auto& l : twice) l *= 2.0;
    scale_ok &= cv_score(twice) == base.cv;
    auto shuffled = row.losses;
    rng.shuffle(std::span(shuffled));
    const auto s = summarize_losses(shuffled);
    reorder_ok &= s.mean == base.mean && s.std == base.std && s.cv == base.cv;
  }
  return {shape_ok && secs < 120.0 && scale_ok && reorder_ok && identical,
          "600 rows in " + num(secs, 3) + " s; scale " + (scale_ok ? "ok" : "FAIL") + ", reorder " +
              (reorder_ok ? "ok" : "FAIL") + ", NDJSON " + (identical ? "identical" : "DIFFERS")};
}

Outcome selection_law() {
  auto rng = split_stream(1007, 0);
  bool count_ok = true, interval_ok = true, disjoint_ok = true;
  int disjoint_cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 400));
    const int classes = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span(idx));
    ScoreTable t;
    for (std::size_t i = 0; i < n; ++i) {
      ScoreRow r;
      r.index = idx[i];
      r.cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      r.mean = 0.01 + rng.uniform();
      r.std = rng.uniform();
      r.cv = r.std / r.mean;
      t.push_back(r);
    }
    SubsampleConfig cfg;
    cfg.ratio = std::max(0.01, rng.uniform_pos());
    cfg.measure = static_cast<Measure>(rng.below(5));
    cfg.per_class = rng.below(2) == 0;
    cfg.seed = rng.next_u64();
    std::map<int, std::size_t> sizes;
    for (const auto& r : t) ++sizes[cfg.per_class ? r.cls : 0];
    std::size_t want = 0;
    bool small = true;
    for (const auto& [c, g] : sizes) {
      const auto ng = static_cast<std::size_t>(std::max(1.0, std::round(cfg.ratio * static_cast<double>(g))));
      want += ng;
      small &= 2 * ng <= g;
    }
    const auto det = select(t, cfg);
    count_ok &= det.size() == want;
    cfg.strategy = Strategy::interval;
    cfg.interval = 1;
    interval_ok &= select(t, cfg) == det;
    cfg.interval = static_cast<std::size_t>(rng.uniform_int(2, 9));
    count_ok &= select(t, cfg).size() == want;
    if (small) {
      cfg.strategy = Strategy::deterministic;
      cfg.measure = Measure::mean_asc;
      const auto easy = select(t, cfg);
      cfg.measure = Measure::mean_desc;
      const auto hard = select(t, cfg);
      std::vector<std::size_t> both;
      std::set_intersection(easy.begin(), easy.end(), hard.begin(), hard.end(), std::back_inserter(both));
      disjoint_ok &= both.empty();
      ++disjoint_cases;
    }
  }
  return {count_ok && interval_ok && disjoint_ok && disjoint_cases > 0,
          std::string("count law ") + (count_ok ? "ok" : "FAIL") + ", interval=1 " + (interval_ok ? "ok" : "FAIL") +
              ", disjoint " + (disjoint_ok ? "ok" : "FAIL") + " (" + std::to_string(disjoint_cases) + " tables)"};
}

Outcome monte_carlo_consistency() {
  const auto oracle = toy_oracle(test::small_trained_model(1008));
  const Dataset data = make_synthetic_dataset(3, 1, 16, 16, 1009);
  std::vector<SoftLabel> labels;
  for (std::size_t i = 0; i < 3; ++i) labels.push_back(data.sample(i).label);
  const auto params = DirichletParams::symmetric(3, 1.0);
  const double s8 = test::predictive_spread(oracle, data.images, labels, MixMethod::dcutmix, params, 8, 400, 10000);
  const double s32 = test::predictive_spread(oracle, data.images, labels, MixMethod::dcutmix, params, 32, 400, 20000);
  const double ratio = s8 / s32;
  return {std::abs(ratio - 2.0) <= 0.5, "std(N=8) " + num(s8) + ", std(N=32) " + num(s32) + ", ratio " + num(ratio)};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(KMIX_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::vector<std::uint8_t>> dir_contents(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_file_bytes(e.path());
  return files;
}

Outcome io_bit_exactness() {
  auto rng = split_stream(1010, 0);
  bool cifar = true, pgm = true, ndjson = true, index = true;
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d;
    d.class_count = 10;
    for (int i = 0; i < 1 + static_cast<int>(rng.below(20)); ++i) {
      ImageTensor img(32, 32, 3);
      for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
      d.push_back(std::move(img), static_cast<int>(rng.below(10)));
    }
    const auto bytes = encode_cifar10_bin(d);
    const auto back = parse_cifar10_bin(bytes);
    cifar &= back.images == d.images && back.classes == d.classes && encode_cifar10_bin(back) == bytes;

    PgmImage img;
    img.width = static_cast<int>(rng.uniform_int(1, 40));
    img.height = static_cast<int>(rng.uniform_int(1, 40));
    img.maxval = rng.below(2) == 0 ? 255 : 65535;
    for (int i = 0; i < img.width * img.height; ++i) {
      img.levels.push_back(static_cast<std::uint16_t>(rng.uniform_int(0, img.maxval)));
    }
    pgm &= parse_pgm(encode_pgm(img)) == img;

    ScoreTable t;
    for (std::size_t i = 0; i < 50; ++i) {
      std::vector<double> losses(10);
      for (auto& l : losses) l = std::ldexp(rng.uniform(), static_cast<int>(rng.uniform_int(-40, 8)));
      t.push_back(make_score_row(i, static_cast<int>(rng.below(10)), std::move(losses)));
    }
    std::istringstream in(encode_scores(t));
    ndjson &= parse_scores(in) == t;

    IndexFile f;
    std::size_t next = 0;
    for (int i = 0; i < static_cast<int>(rng.below(100)); ++i) f.indices.push_back(next += 1 + rng.below(4));
    f.config.ratio = rng.uniform_pos();
    f.config.measure = static_cast<Measure>(rng.below(5));
    f.config.strategy = static_cast<Strategy>(rng.below(2));
    f.config.interval = 1 + rng.below(10);
    f.config.per_class = rng.below(2) == 1;
    f.config.seed = rng.next_u64();
    index &= parse_index_file(encode_index_file(f)) == f;
  }

  const fs::path dir = fs::temp_directory_path() / "kmix_acceptance_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_png_dir(dir / "data", make_synthetic_dataset(3, 20, 16, 16, 1011));
  const std::string args = "augment --input " + (dir / "data").string() +
                           " --format png-dir --method dcutmix --k 3 --alpha 0.3333 --count 200 --seed 7 --out ";
  bool cli = run_cli(args + (dir / "a").string()) == 0 && run_cli(args + (dir / "b").string()) == 0;
  if (cli) cli = dir_contents(dir / "a") == dir_contents(dir / "b") && dir_contents(dir / "a").size() == 202;
  fs::remove_all(dir);

  auto flag = [](bool b) { return b ? "ok" : "FAIL"; };
  return {cifar && pgm && ndjson && index && cli,
          std::string("cifar ") + flag(cifar) + ", pgm " + flag(pgm) + ", ndjson " + flag(ndjson) + ", index " +
              flag(index) + ", cli augment rerun " + flag(cli)};
}

Outcome toy_training() {
  const Dataset data = make_synthetic_dataset(3, 200, 16, 16, 1012);
  const auto samples = data.samples();
  TrainConfig cfg;
  cfg.seed = 1012;
  const auto plain = train(ToyModel::init(16, 16, 1, 0, 3, 1012), samples, cfg);
  cfg.augmentation = AugmentationSpec{MixMethod::dcutmix, {1.0, 1.0, 1.0}};
  const auto mixed = train(ToyModel::init(16, 16, 1, 0, 3, 1012), samples, cfg);
  bool finite = mixed.loss_history.size() == 30;
  for (double l : mixed.loss_history) finite &= std::isfinite(l);
  const double final_loss = plain.loss_history.back();
  return {final_loss < 0.3 && finite,
          "final loss " + num(final_loss) + " (no mixing); DCutMix K=3 final " + num(mixed.loss_history.back()) +
              (finite ? ", all finite" : ", NON-FINITE")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Dirichlet fraction law", fraction_law},
      {"CutMix reduction", cutmix_reduction},
      {"Stick-breaking round trip", sbp_round_trip},
      {"Label exactness", label_exactness},
      {"Gradient oracle", gradient_oracle},
      {"Uncertainty pipeline", uncertainty_pipeline},
      {"Selection-function law", selection_law},
      {"Monte-Carlo consistency", monte_carlo_consistency},
      {"I/O bit-exactness", io_bit_exactness},
      {"Toy training sanity", toy_training},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << ". " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
