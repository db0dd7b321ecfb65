#include "cdrop/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cdrop/checkpoint.hpp"
#include "cdrop/error.hpp"

namespace cdrop {

using nlohmann::json;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

void allow_only(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(ErrorCode::ConfigError, where + " must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) fail(ErrorCode::ConfigError, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigError, where + "." + key + " has the wrong type");
  }
}

void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::ConfigError, where + "." + key + " must be a nonnegative integer");
  }
  out = v.get<std::size_t>();
}

DropoutMode parse_dropout(const json& d) {
  allow_only(d, "model.dropout", {"mode", "p", "m", "approx"});
  std::string mode = "none";
  read(d, "mode", mode, "model.dropout");
  if (mode == "none") return DropoutMode::none();
  if (mode == "continuum") {
    if (!d.contains("p") || !d.contains("m")) {
      fail(ErrorCode::ConfigError, "continuum dropout needs both p and m");
    }
    double p = 0.0, m = 0.0;
    read(d, "p", p, "model.dropout");
    read(d, "m", m, "model.dropout");
    DropoutMode out = DropoutMode::continuum(p, m);
    read(d, "approx", out.approximate_rates, "model.dropout");
    return out;
  }
  if (mode == "naive_drift") {
    double p = 0.0;
    read(d, "p", p, "model.dropout");
    return DropoutMode::naive_drift(p);
  }
  fail(ErrorCode::ConfigError, "model.dropout.mode must be none, continuum or naive_drift");
}

ModelConfig parse_model(const json& m) {
  allow_only(m, "model", {"d_z", "T", "scheme", "steps", "event_aligned", "drift_hidden",
                          "drift_activation", "classifier_hidden", "classifier_activation",
                          "event_cap", "dropout"});
  ModelConfig c;
  read_size(m, "d_z", c.d_z, "model");
  read(m, "T", c.horizon, "model");
  std::string scheme = "euler";
  read(m, "scheme", scheme, "model");
  c.scheme.method = parse_step_method(scheme);
  read_size(m, "steps", c.scheme.steps, "model");
  read(m, "event_aligned", c.scheme.event_aligned, "model");
  read(m, "drift_hidden", c.drift_hidden, "model");
  read(m, "classifier_hidden", c.classifier_hidden, "model");
  std::string act = "tanh";
  read(m, "drift_activation", act, "model");
  c.drift_activation = parse_activation(act);
  act = "tanh";
  read(m, "classifier_activation", act, "model");
  c.classifier_activation = parse_activation(act);
  read_size(m, "event_cap", c.event_cap, "model");
  if (m.contains("dropout")) c.dropout = parse_dropout(m.at("dropout"));
  return c;
}

TrainConfig parse_training(const json& t) {
  allow_only(t, "training", {"epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2",
                             "epsilon", "early_stop_patience", "lr_halving_patience", "seed",
                             "val_n_mc", "record_wall_time", "restore_best"});
  TrainConfig c;
  read_size(t, "epochs", c.epochs, "training");
  read_size(t, "batch_size", c.batch_size, "training");
  read(t, "learning_rate", c.learning_rate, "training");
  std::string opt = "adam";
  read(t, "optimizer", opt, "training");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::Adam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::Sgd;
  } else {
    fail(ErrorCode::ConfigError, "training.optimizer must be adam or sgd");
  }
  read(t, "beta1", c.beta1, "training");
  read(t, "beta2", c.beta2, "training");
  read(t, "epsilon", c.epsilon, "training");
  read_size(t, "early_stop_patience", c.early_stop_patience, "training");
  read_size(t, "lr_halving_patience", c.lr_halving_patience, "training");
  read(t, "seed", c.seed, "training");
  read_size(t, "val_n_mc", c.val_n_mc, "training");
  read(t, "record_wall_time", c.record_wall_time, "training");
  read(t, "restore_best", c.restore_best, "training");
  c.validate();
  return c;
}

DataSource parse_data(const json& d) {
  allow_only(d, "data", {"generator", "csv", "n_per_class", "noise_std", "n_classes", "d_x",
                         "separation", "seed", "split", "normalize"});
  DataSource s;
  read(d, "generator", s.generator, "data");
  read(d, "csv", s.csv_path, "data");
  if (s.generator.empty() == s.csv_path.empty()) {
    fail(ErrorCode::ConfigError, "data needs exactly one of 'generator' or 'csv'");
  }
  if (!s.generator.empty() && s.generator != "two_spirals" && s.generator != "gaussian_blobs") {
    fail(ErrorCode::ConfigError, "unknown generator '" + s.generator + "'");
  }
  read_size(d, "n_per_class", s.n_per_class, "data");
  read(d, "noise_std", s.noise_std, "data");
  read_size(d, "n_classes", s.n_classes, "data");
  read_size(d, "d_x", s.d_x, "data");
  read(d, "separation", s.separation, "data");
  read(d, "seed", s.seed, "data");
  if (d.contains("split")) {
    std::vector<double> f;
    read(d, "split", f, "data");
    if (f.size() != 3) fail(ErrorCode::ConfigError, "data.split needs three fractions");
    s.split = {f[0], f[1], f[2]};
  }
  read(d, "normalize", s.normalize, "data");
  return s;
}

InferenceConfig parse_inference(const json& i) {
  allow_only(i, "inference", {"n_mc", "seeds", "sweep_n_mc"});
  InferenceConfig c;
  read_size(i, "n_mc", c.n_mc, "inference");
  read(i, "seeds", c.seeds, "inference");
  read(i, "sweep_n_mc", c.sweep_n_mc, "inference");
  if (c.n_mc == 0) fail(ErrorCode::ConfigError, "inference.n_mc must be positive");
  for (std::size_t n : c.sweep_n_mc) {
    if (n == 0) fail(ErrorCode::ConfigError, "inference.sweep_n_mc entries must be positive");
  }
  return c;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

json rates_json(const std::optional<RenewalRates>& r) {
  if (!r) return json{{"lambda1", nullptr}, {"lambda2", nullptr}};
  return json{{"lambda1", r->lambda1}, {"lambda2", r->lambda2}};
}

}  // namespace

ExperimentConfig parse_experiment(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigError, std::string("configuration is not valid JSON: ") + e.what());
  }
  allow_only(doc, "configuration", {"model", "training", "data", "inference", "output_dir"});
  if (!doc.contains("data")) fail(ErrorCode::ConfigError, "configuration needs a 'data' section");

  ExperimentConfig c;
  c.canonical_json = doc.dump();
  c.hash = fnv1a_hex(c.canonical_json);
  if (doc.contains("model")) c.model = parse_model(doc.at("model"));
  if (doc.contains("training")) c.training = parse_training(doc.at("training"));
  c.data = parse_data(doc.at("data"));
  if (doc.contains("inference")) c.inference = parse_inference(doc.at("inference"));
  std::string out = c.output_dir.string();
  read(doc, "output_dir", out, "configuration");
  c.output_dir = out;
  if (const char* root = std::getenv("CDROP_OUTPUT_ROOT"); root && *root && c.output_dir.is_relative()) {
    c.output_dir = std::filesystem::path(root) / c.output_dir;
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open configuration '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

VectorDataset generate_dataset(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigError, std::string("generator spec is not valid JSON: ") + e.what());
  }
  const DataSource s = parse_data(doc);
  if (s.generator.empty()) fail(ErrorCode::ConfigError, "generator spec needs a 'generator'");
  if (s.generator == "two_spirals") return gen_two_spirals(s.n_per_class, s.noise_std, s.seed);
  return gen_gaussian_blobs(s.n_classes, s.d_x, s.separation, s.noise_std, s.n_per_class, s.seed);
}

VectorDataset materialize(const DataSource& s, std::vector<std::string>* warnings) {
  VectorDataset d;
  if (s.generator == "two_spirals") {
    d = gen_two_spirals(s.n_per_class, s.noise_std, s.seed);
  } else if (s.generator == "gaussian_blobs") {
    d = gen_gaussian_blobs(s.n_classes, s.d_x, s.separation, s.noise_std, s.n_per_class, s.seed);
  } else {
    d = load_csv(s.csv_path);
  }
  d = split(std::move(d), s.split, derive_seed(s.seed, 0x5e11));
  if (s.normalize) d = normalize(std::move(d), warnings);
  return d;
}

namespace {

ModelConfig bind_shapes(ModelConfig m, const VectorDataset& d) {
  m.d_x = d.dims();
  m.n_classes = d.n_classes;
  return m;
}

}  // namespace

Experiment::Experiment(ExperimentConfig config)
    : config_(std::move(config)),
      data_(materialize(config_.data, &warnings_)),
      model_(bind_shapes(config_.model, data_)) {
  config_.model = model_.config();
}

const ModelParams& Experiment::params() const {
  if (!params_) fail(ErrorCode::InvalidArgument, "experiment has no parameters; train or load a checkpoint first");
  return *params_;
}

std::filesystem::path Experiment::output_path(const std::string& name) const {
  std::filesystem::create_directories(config_.output_dir);
  return config_.output_dir / name;
}

std::string Experiment::provenance_comment() const {
  std::ostringstream os;
  os << "# config_hash=" << config_.hash << " mode=" << to_string(config_.model.dropout.kind);
  if (model_.rates()) {
    os << " lambda1=" << fmt(model_.rates()->lambda1) << " lambda2=" << fmt(model_.rates()->lambda2);
  }
  os << " train_seed=" << config_.training.seed << " data_seed=" << config_.data.seed << '\n';
  return os.str();
}

void Experiment::write_text(const std::string& name, const std::string& body) const {
  const auto path = output_path(name);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << body;
  if (!out) fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

TrainOutcome Experiment::train(const EpochCallback& on_epoch) {
  TrainResult r = train_loop(model_, config_.training, data_, on_epoch);
  params_ = std::move(r.params);

  TrainOutcome out;
  out.history = r.history;
  out.checkpoint = output_path("checkpoint.txt");
  save_checkpoint(out.checkpoint, config_.model, *params_, {config_.training.seed, config_.hash});
  write_text("history.csv", provenance_comment() + r.history.to_csv());

  RandomStream rng(derive_seed(config_.training.seed, 4));
  out.test = cdrop::evaluate(model_, *params_, view(data_, Split::Test), config_.inference.n_mc, rng);

  json summary{{"config_hash", config_.hash},
               {"mode", to_string(config_.model.dropout.kind)},
               {"rates", rates_json(model_.rates())},
               {"train_seed", config_.training.seed},
               {"data_seed", config_.data.seed},
               {"epochs_run", r.history.epochs.size()},
               {"stopped_early", r.history.stopped_early},
               {"test_accuracy", out.test.accuracy},
               {"test_loss", out.test.mean_loss},
               {"warnings", warnings_}};
  if (r.history.best_epoch) {
    const auto& best = r.history.epochs[*r.history.best_epoch];
    summary["best_epoch"] = best.epoch;
    summary["best_val_loss"] = best.val_loss;
    summary["best_val_accuracy"] = best.val_accuracy;
  } else {
    summary["best_epoch"] = nullptr;
  }
  write_text("train_summary.json", summary.dump(2) + "\n");
  return out;
}

void Experiment::load_checkpoint(const std::filesystem::path& descriptor) {
  params_ = cdrop::load_checkpoint(descriptor, config_.model);
}

Metrics Experiment::evaluate(std::uint64_t seed) {
  RandomStream rng(seed);
  const Metrics m = cdrop::evaluate(model_, params(), view(data_, Split::Test), config_.inference.n_mc, rng);
  json doc{{"config_hash", config_.hash},
           {"mode", to_string(config_.model.dropout.kind)},
           {"rates", rates_json(model_.rates())},
           {"seed", seed},
           {"n_mc", config_.inference.n_mc},
           {"split", "test"},
           {"accuracy", m.accuracy},
           {"mean_loss", m.mean_loss},
           {"count", m.count}};
  write_text("metrics.json", doc.dump(2) + "\n");
  return m;
}

CalibrationOutcome Experiment::calibrate(std::uint64_t seed) {
  const Batch test = view(data_, Split::Test);
  if (test.inputs.empty()) fail(ErrorCode::EmptySplit, "test split is empty");
  RandomStream rng(seed);
  std::vector<Vec> probs;
  CalibrationOutcome out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.inputs.size(); ++i) {
    probs.push_back(predict_probs(model_, params(), test.inputs[i], config_.inference.n_mc, rng));
    const Vec& p = probs.back();
    hits += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == test.labels[i];
    out.test.mean_loss += -std::log(std::max(p[test.labels[i]], 1e-300));
  }
  out.test.count = test.inputs.size();
  out.test.accuracy = static_cast<double>(hits) / static_cast<double>(out.test.count);
  out.test.mean_loss /= static_cast<double>(out.test.count);
  out.bins = reliability_bins(probs, test.labels);
  out.report = ece(out.bins);

  std::ostringstream csv;
  csv.precision(17);
  csv << provenance_comment() << "bin_low,bin_high,conf,acc,count\n";
  for (const auto& b : out.bins.bins) {
    csv << std::setprecision(6) << b.low << ',' << b.high << ',' << std::setprecision(17)
        << b.mean_confidence << ',' << b.accuracy << ',' << b.count << '\n';
  }
  write_text("reliability.csv", csv.str());
  json doc{{"config_hash", config_.hash},
           {"mode", to_string(config_.model.dropout.kind)},
           {"rates", rates_json(model_.rates())},
           {"seed", seed},
           {"n_mc", config_.inference.n_mc},
           {"ece", out.report.ece},
           {"gaps", out.report.gaps},
           {"count", out.report.total},
           {"accuracy", out.test.accuracy}};
  write_text("calibration.json", doc.dump(2) + "\n");
  return out;
}

std::vector<SweepRow> Experiment::mc_sweep(const std::vector<std::size_t>& n_mc_values) {
  if (config_.model.dropout.kind != DropoutKind::Continuum) {
    fail(ErrorCode::WrongMode, "the Monte-Carlo sweep needs a continuum dropout model");
  }
  const auto rows = cdrop::mc_sweep(model_, params(), view(data_, Split::Test), n_mc_values,
                                    config_.inference.seeds);
  std::ostringstream csv;
  csv.precision(17);
  csv << provenance_comment() << "n_mc,mean_accuracy,std_accuracy,median_accuracy,n_seeds\n";
  for (const auto& r : rows) {
    csv << r.n_mc << ',' << r.mean_accuracy << ',' << r.std_accuracy << ',' << r.median_accuracy << ','
        << r.accuracies.size() << '\n';
  }
  write_text("mc_sweep.csv", csv.str());
  return rows;
}

Vec Experiment::predict(std::span<const double> x, std::uint64_t seed) const {
  if (x.size() != data_.dims()) fail(ErrorCode::ShapeMismatch, "feature vector has the wrong length");
  Vec scaled(x.begin(), x.end());
  if (!data_.stats.mean.empty()) {
    for (std::size_t j = 0; j < scaled.size(); ++j) {
      if (data_.stats.std[j] > 0.0) scaled[j] = (scaled[j] - data_.stats.mean[j]) / data_.stats.std[j];
    }
  }
  RandomStream rng(seed);
  return predict_probs(model_, params(), scaled, config_.inference.n_mc, rng);
}

namespace {

struct SingleRun {
  Metrics train;
  Metrics val;
  Metrics test;
  std::optional<RenewalRates> rates;
  ModelParams params;
};

SingleRun train_once(const ExperimentConfig& base, const VectorDataset& data, const DropoutMode& mode,
                     std::uint64_t seed, std::size_t n_mc) {
  ModelConfig mc = bind_shapes(base.model, data);
  mc.dropout = mode;
  const Model model(mc);
  TrainConfig tc = base.training;
  tc.seed = seed;
  tc.record_wall_time = false;
  TrainResult r = train_loop(model, tc, data);
  SingleRun out{{}, {}, {}, model.rates(), std::move(r.params)};
  RandomStream rng(derive_seed(seed, 5));
  out.train = evaluate(model, out.params, view(data, Split::Train), n_mc, rng);
  out.val = evaluate(model, out.params, view(data, Split::Val), n_mc, rng);
  out.test = evaluate(model, out.params, view(data, Split::Test), n_mc, rng);
  return out;
}

GridPoint select_best(std::vector<GridPoint>& grid) {
  GridPoint best = grid.front();
  for (const auto& g : grid) {
    if (g.val_accuracy > best.val_accuracy ||
        (g.val_accuracy == best.val_accuracy && g.val_loss < best.val_loss)) {
      best = g;
    }
  }
  return best;
}

}  // namespace

ComparisonResult run_comparison(const ExperimentConfig& base, const ComparisonOptions& opt) {
  if (opt.seeds.empty() || opt.selection_seeds.empty()) {
    fail(ErrorCode::ConfigError, "comparison needs evaluation and selection seeds");
  }
  if (opt.p_grid.empty() || opt.m_grid.empty()) fail(ErrorCode::ConfigError, "comparison grid is empty");
  const VectorDataset data = materialize(base.data);
  ComparisonResult result;

  auto score = [&](const DropoutMode& mode, double p, double m) {
    GridPoint g{p, m, 0.0, 0.0};
    for (std::uint64_t s : opt.selection_seeds) {
      const SingleRun r = train_once(base, data, mode, s, opt.n_mc);
      g.val_loss += r.val.mean_loss / static_cast<double>(opt.selection_seeds.size());
      g.val_accuracy += r.val.accuracy / static_cast<double>(opt.selection_seeds.size());
    }
    return g;
  };
  for (double p : opt.p_grid) {
    for (double m : opt.m_grid) result.continuum_grid.push_back(score(DropoutMode::continuum(p, m), p, m));
  }
  const GridPoint best_cont = select_best(result.continuum_grid);
  GridPoint best_naive{};
  if (opt.include_naive) {
    for (double p : opt.p_grid) result.naive_grid.push_back(score(DropoutMode::naive_drift(p), p, 0.0));
    best_naive = select_best(result.naive_grid);
  }

  struct Arm {
    std::string name;
    DropoutMode mode;
    double p, m;
  };
  std::vector<Arm> arms{{"none", DropoutMode::none(), 0.0, 0.0}};
  if (opt.include_naive) arms.push_back({"naive_drift", DropoutMode::naive_drift(best_naive.p), best_naive.p, 0.0});
  arms.push_back({"continuum", DropoutMode::continuum(best_cont.p, best_cont.m), best_cont.p, best_cont.m});

  for (const auto& arm : arms) {
    ModeSummary ms{arm.name, arm.p, arm.m, 0.0, 0.0, 0.0};
    std::vector<double> train_acc, test_acc, gaps;
    for (std::uint64_t s : opt.seeds) {
      SingleRun r = train_once(base, data, arm.mode, s, opt.n_mc);
      result.runs.push_back({arm.name, arm.p, arm.m, s, r.train.accuracy, r.test.accuracy,
                             r.val.mean_loss, r.rates, std::move(r.params)});
      train_acc.push_back(r.train.accuracy);
      test_acc.push_back(r.test.accuracy);
      gaps.push_back(r.train.accuracy - r.test.accuracy);
    }
    ms.median_train_accuracy = median(train_acc);
    ms.median_test_accuracy = median(test_acc);
    ms.median_gap = median(gaps);
    result.summary.push_back(ms);
  }
  return result;
}

std::string ComparisonResult::summary_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "mode,p,m,median_train_acc,median_test_acc,median_gap\n";
  for (const auto& s : summary) {
    os << s.mode << ',' << s.p << ',' << s.m << ',' << s.median_train_accuracy << ','
       << s.median_test_accuracy << ',' << s.median_gap << '\n';
  }
  return os.str();
}

std::string ComparisonResult::runs_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "mode,p,m,seed,lambda1,lambda2,train_acc,test_acc,val_loss\n";
  for (const auto& r : runs) {
    os << r.mode << ',' << r.p << ',' << r.m << ',' << r.seed << ',';
    if (r.rates) {
      os << r.rates->lambda1 << ',' << r.rates->lambda2;
    } else {
      os << ',';
    }
    os << ',' << r.train_accuracy << ',' << r.test_accuracy << ',' << r.val_loss << '\n';
  }
  return os.str();
}

std::string ComparisonResult::grid_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "mode,p,m,val_loss,val_acc\n";
  auto add = [&](const char* mode, const std::vector<GridPoint>& grid) {
    for (const auto& g : grid) {
      os << mode << ',' << g.p << ',' << g.m << ',' << g.val_loss << ',' << g.val_accuracy << '\n';
    }
  };
  add("continuum", continuum_grid);
  add("naive_drift", naive_grid);
  return os.str();
}

void write_comparison(const ExperimentConfig& base, const ComparisonResult& result) {
  std::filesystem::create_directories(base.output_dir);
  const std::string header = "# config_hash=" + base.hash + "\n";
  auto write = [&](const char* name, const std::string& body) {
    const auto path = base.output_dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    f << header << body;
    if (!f) fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
  };
  write("comparison_summary.csv", result.summary_csv());
  write("comparison_runs.csv", result.runs_csv());
  write("comparison_grid.csv", result.grid_csv());
}

}  // namespace cdrop
