#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "tsan/autodiff/container.hpp"
#include "tsan/data/nslkdd.hpp"
#include "tsan/data/synth.hpp"
#include "tsan/errors.hpp"
#include "tsan/log.hpp"
#include "tsan/metrics/metrics.hpp"
#include "tsan/model/checkpoint.hpp"
#include "tsan/pretrain/pretrain.hpp"
#include "tsan/train/experiment.hpp"
#include "tsan/train/gradcheck.hpp"
#include "tsan/version.hpp"

namespace tsan::cli {
namespace fs = std::filesystem;
namespace {

using ordered = nlohmann::ordered_json;

ordered to_ordered(const nlohmann::json& j) { return ordered::parse(j.dump()); }

struct Run {
  std::string command;
  RunConfig config;
  fs::path out;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string started_at;
  std::vector<std::string> outputs;

  Run(std::string name, const Options& options) : command(std::move(name)) {
    config = RunConfig::load(options.config);
    if (options.seed) config.override_seed(*options.seed);
    if (options.threshold) {
      config.train.threshold = *options.threshold;
      config.model.threshold = *options.threshold;
      config.train.validate();
    }
    out = options.out.empty() ? fs::path(config.output.dir) : options.out;
    config.output.dir = out.string();
    fs::create_directories(out);
    const std::time_t now = std::time(nullptr);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    started_at = ts.str();
  }

  fs::path path(const char* name) {
    outputs.emplace_back(name);
    return out / name;
  }

  void write_json(const char* name, const nlohmann::json& j) {
    std::ofstream f(path(name));
    if (!f) throw IoError("cannot write " + (out / name).string());
    f << j.dump(2) << '\n';
  }

  void finish(nlohmann::json& summary) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const nlohmann::json manifest = {{"command", command},
                                     {"version", version_string()},
                                     {"config", config.to_json()},
                                     {"seed", config.train.seed},
                                     {"started_at", started_at},
                                     {"wall_seconds", wall},
                                     {"outputs", outputs}};
    std::ofstream f(out / ("manifest_" + command + ".json"));
    if (!f) throw IoError("cannot write run manifest in " + out.string());
    f << manifest.dump(2) << '\n';
    summary["output_dir"] = out.string();
    summary["wall_seconds"] = wall;
  }
};

fs::path data_dir(const Options& options, const Run& run) { return options.data.empty() ? run.out : options.data; }

std::vector<data::RawRecord> read_raw(const fs::path& path) {
  if (!fs::exists(path)) {
    throw IoError("data file " + path.string() +
                  " not found; point data.train_path/data.test_path at the NSL-KDD files or create "
                  "synthetic ones with `tsan synth-data`");
  }
  return data::parse_records(path);
}

ordered checkpoint_metadata(const data::PreparedData& prepared, const RunConfig& config, AblationVariant variant) {
  ordered extra = ordered::object();
  extra["variant"] = to_string(variant);
  extra["data"] = {{"window_size", config.data.window_size}, {"stride", config.data.stride}};
  extra["preprocessing"] = {{"schema", to_ordered(prepared.schema.to_json())},
                            {"scaler", to_ordered(prepared.scaler.to_json())}};
  return extra;
}

// Window size and width of a dataset must match the model they feed.
void check_dimensions(const ModelConfig& model, const data::WindowedDataset& ds, const std::string& what) {
  std::string mismatch;
  if (model.window != ds.window) {
    mismatch += " window (checkpoint " + std::to_string(model.window) + ", " + what + " " +
                std::to_string(ds.window) + ")";
  }
  if (model.features != ds.features) {
    mismatch += " features (checkpoint " + std::to_string(model.features) + ", " + what + " " +
                std::to_string(ds.features) + ")";
  }
  if (!mismatch.empty()) throw ShapeError("checkpoint and " + what + " disagree on" + mismatch);
}

data::WindowedDataset read_dataset(const fs::path& path) {
  if (!fs::exists(path)) {
    throw IoError("dataset container " + path.string() + " not found; run `tsan preprocess` first");
  }
  return data::WindowedDataset::from_container(read_container(path));
}

}  // namespace

void save_prepared(const fs::path& dir, const data::PreparedData& prepared) {
  write_container(dir / kTrainContainer, prepared.train.to_container());
  write_container(dir / kValidationContainer, prepared.validation.to_container());
  write_container(dir / kTestContainer, prepared.test.to_container());
  Container rows;
  rows.metadata["kind"] = "rows";
  rows.add("rows", prepared.train_rows);
  write_container(dir / kRowsContainer, rows);
  const nlohmann::json pre = {{"schema", prepared.schema.to_json()},
                              {"scaler", prepared.scaler.to_json()},
                              {"summary", prepared.summary}};
  std::ofstream f(dir / kPreprocessingFile);
  if (!f) throw IoError("cannot write " + (dir / kPreprocessingFile).string());
  f << pre.dump(2) << '\n';
}

data::PreparedData load_prepared(const fs::path& dir) {
  data::PreparedData p;
  p.train = read_dataset(dir / kTrainContainer);
  p.validation = read_dataset(dir / kValidationContainer);
  p.test = read_dataset(dir / kTestContainer);
  p.train_rows = read_container(dir / kRowsContainer).at("rows");
  std::ifstream f(dir / kPreprocessingFile);
  if (!f) throw IoError("cannot read " + (dir / kPreprocessingFile).string());
  nlohmann::json pre;
  try {
    pre = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError((dir / kPreprocessingFile).string() + ": " + e.what());
  }
  p.schema = data::FeatureSchema::from_json(pre.at("schema"));
  p.scaler = data::ScalerStats::from_json(pre.at("scaler"));
  p.summary = pre.value("summary", nlohmann::json::object());
  return p;
}

nlohmann::json synth_data(const Options& options) {
  Run run("synth-data", options);
  const std::uint64_t seed = run.config.data.seed;
  const std::size_t test_n = options.test_n.value_or(options.n / 2);
  const auto train = data::synth_generate(options.n, options.dos_fraction, seed);
  const auto test = data::synth_generate(test_n, options.dos_fraction, seed + 1);
  data::write_records(run.path(kSynthTrainFile), train);
  data::write_records(run.path(kSynthTestFile), test);
  nlohmann::json summary = {{"train_path", (run.out / kSynthTrainFile).string()},
                            {"test_path", (run.out / kSynthTestFile).string()},
                            {"train_records", train.size()},
                            {"test_records", test.size()},
                            {"dos_fraction", options.dos_fraction},
                            {"seed", seed}};
  run.finish(summary);
  return summary;
}

nlohmann::json preprocess(const Options& options) {
  Run run("preprocess", options);
  const auto train_raw = read_raw(run.config.data.train_path);
  const auto test_raw = read_raw(run.config.data.test_path);
  const data::PreparedData prepared = data::prepare(train_raw, test_raw, run.config.data.preprocess_options());
  save_prepared(run.out, prepared);
  for (const char* name : {kTrainContainer, kValidationContainer, kTestContainer, kRowsContainer, kPreprocessingFile}) {
    run.outputs.emplace_back(name);
  }
  nlohmann::json summary = prepared.summary;
  run.finish(summary);
  return summary;
}

nlohmann::json pretrain(const Options& options) {
  Run run("pretrain", options);
  const data::PreparedData prepared = load_prepared(data_dir(options, run));
  const ModelConfig model = complete_model_config(run.config.model, prepared);
  const PretrainResult result = pretrain_encoders(model, prepared.train, prepared.train_rows, run.config.pretrain);
  Container c = to_container(result.encoders);
  c.metadata["kind"] = "pretrained_encoders";
  c.metadata["config"] = to_ordered(model.to_json());
  write_container(run.path(kPretrainedFile), c);
  nlohmann::json summary = {{"pretrained", (run.out / kPretrainedFile).string()},
                            {"parameters", result.encoders.size()},
                            {"temporal", result.temporal.to_json()},
                            {"spatial", result.spatial.to_json()}};
  run.write_json("pretrain_report.json", summary);
  run.finish(summary);
  return summary;
}

nlohmann::json train(const Options& options) {
  Run run("train", options);
  const data::PreparedData prepared = load_prepared(data_dir(options, run));
  std::optional<ParameterSet<float>> pretrained;
  if (!options.from_pretrained.empty()) {
    const Container c = read_container(options.from_pretrained);
    pretrained.emplace();
    for (const auto& e : c.entries) pretrained->add(e.path, e.tensor);
  }
  const RunOutcome outcome = run_variant(AblationVariant::full, prepared, run.config.experiment(options.repetitions),
                                         pretrained ? &*pretrained : nullptr);
  write_container(run.path(kCheckpointFile),
                  make_checkpoint(*outcome.model, checkpoint_metadata(prepared, run.config, AblationVariant::full)));
  write_history_csv(run.path(kHistoryFile), outcome.training.history);
  nlohmann::json report = outcome.to_json();
  report["test"]["timing"]["model_size_bytes"] = fs::file_size(run.out / kCheckpointFile);
  run.write_json("train_report.json", report);
  nlohmann::json summary = {{"checkpoint", (run.out / kCheckpointFile).string()},
                            {"best_epoch", outcome.training.best_epoch},
                            {"best_val_accuracy", outcome.training.best_val_accuracy},
                            {"epochs_run", outcome.training.history.size()},
                            {"transferred", outcome.transferred.size()},
                            {"test_accuracy", outcome.test.classification.accuracy},
                            {"test_auc_roc", report["test"]["auc_roc"]}};
  run.finish(summary);
  return summary;
}

nlohmann::json evaluate(const Options& options) {
  Run run("evaluate", options);
  const fs::path checkpoint = options.checkpoint.empty() ? run.out / kCheckpointFile : options.checkpoint;
  if (!fs::exists(checkpoint)) throw IoError("checkpoint " + checkpoint.string() + " not found");
  TsanModel<float> model = load_checkpoint(checkpoint);
  const fs::path input = options.input.empty() ? data_dir(options, run) / kTestContainer : options.input;
  const data::WindowedDataset dataset = read_dataset(input);
  check_dimensions(model.config(), dataset, "dataset");
  metrics::MetricsReport report =
      evaluate_model(model, dataset, model.config().n_protocol, run.config.train.threshold, options.repetitions);
  report.timing.model_size_bytes = fs::file_size(checkpoint);
  nlohmann::json j = report.to_json();
  j["checkpoint"] = checkpoint.string();
  j["input"] = input.string();
  run.write_json(kMetricsFile, j);
  if (report.roc) metrics::write_roc_csv(run.path(kRocFile), *report.roc);
  nlohmann::json summary = j;
  summary.erase("roc_points");
  run.finish(summary);
  return summary;
}

nlohmann::json ablate(const Options& options) {
  Run run("ablate", options);
  const data::PreparedData prepared = load_prepared(data_dir(options, run));
  std::vector<AblationVariant> variants;
  for (const auto& name : options.variants) variants.push_back(parse_variant(name));
  if (variants.empty()) variants.assign(all_variants().begin(), all_variants().end());
  const ExperimentConfig experiment = run.config.experiment(options.repetitions);
  std::vector<RunOutcome> outcomes;
  nlohmann::json details = nlohmann::json::array();
  for (AblationVariant v : variants) {
    outcomes.push_back(run_variant(v, prepared, experiment));
    details.push_back(outcomes.back().to_json());
    details.back()["test"].erase("roc_points");
    const std::string name = to_string(v);
    write_history_csv(run.out / ("history_" + name + ".csv"), outcomes.back().training.history);
    run.outputs.push_back("history_" + name + ".csv");
  }
  const nlohmann::json table = ablation_table(outcomes);
  run.write_json("ablation.json", {{"table", table}, {"runs", details}});
  {
    std::ofstream f(run.path("ablation.csv"));
    if (!f) throw IoError("cannot write ablation.csv");
    f << "variant,label,accuracy,precision,recall,f1,auc_roc\n";
    f.precision(6);
    for (const auto& row : table) {
      f << row["variant"].get<std::string>() << ",\"" << row["label"].get<std::string>() << "\","
        << row["accuracy"].get<double>() << ',' << row["precision"].get<double>() << ','
        << row["recall"].get<double>() << ',' << row["f1"].get<double>() << ','
        << (row["auc_roc"].is_null() ? std::string() : std::to_string(row["auc_roc"].get<double>())) << '\n';
    }
  }
  nlohmann::json summary = {{"table", table}};
  run.finish(summary);
  return summary;
}

nlohmann::json predict(const Options& options) {
  Run run("predict", options);
  const fs::path checkpoint = options.checkpoint.empty() ? run.out / kCheckpointFile : options.checkpoint;
  if (!fs::exists(checkpoint)) throw IoError("checkpoint " + checkpoint.string() + " not found");
  const Container ckpt = read_container(checkpoint);
  TsanModel<float> model = load_checkpoint(ckpt);
  if (options.input.empty()) throw ConfigError("predict needs --input (a dataset container or an NSL-KDD text file)");
  if (!fs::exists(options.input)) throw IoError("input " + options.input.string() + " not found");

  data::WindowedDataset dataset;
  if (looks_like_container(options.input)) {
    dataset = read_dataset(options.input);
  } else {
    if (!ckpt.metadata.contains("preprocessing") || !ckpt.metadata.contains("data")) {
      throw ContractError("checkpoint carries no preprocessing state; raw input cannot be encoded");
    }
    const auto pre = nlohmann::json::parse(ckpt.metadata["preprocessing"].dump());
    const auto data_meta = nlohmann::json::parse(ckpt.metadata["data"].dump());
    dataset = data::encode_windows(data::parse_records(options.input), data::FeatureSchema::from_json(pre.at("schema")),
                                   data::ScalerStats::from_json(pre.at("scaler")),
                                   data_meta.at("window_size").get<std::size_t>(),
                                   data_meta.at("stride").get<std::size_t>());
  }
  check_dimensions(model.config(), dataset, "input");
  const Predictions pred = tsan::predict(model, evaluation_tasks(dataset, model.config().n_protocol), LossWeights{});
  const double threshold = run.config.train.threshold;
  std::size_t positives = 0;
  {
    std::ofstream f(run.path(kPredictionsFile));
    if (!f) throw IoError("cannot write " + (run.out / kPredictionsFile).string());
    f << "window,raw_row_index,score,decision,label\n";
    f.precision(9);
    for (std::size_t j = 0; j < pred.scores.size(); ++j) {
      const int decision = threshold_decision(pred.scores[j], threshold);
      positives += static_cast<std::size_t>(decision);
      f << j << ',' << dataset.raw_row_index[j] << ',' << pred.scores[j] << ',' << decision << ','
        << pred.labels[j] << '\n';
    }
  }
  nlohmann::json summary = {{"predictions", (run.out / kPredictionsFile).string()},
                            {"windows", pred.scores.size()},
                            {"flagged", positives},
                            {"threshold", threshold}};
  run.finish(summary);
  return summary;
}

nlohmann::json gradcheck(const Options& options) {
  Run run("gradcheck", options);
  const data::PreparedData prepared = load_prepared(data_dir(options, run));
  std::optional<TsanModel<double>> model;
  if (!options.checkpoint.empty()) {
    model.emplace(to_double(load_checkpoint(options.checkpoint)));
  } else {
    model.emplace(complete_model_config(run.config.model, prepared), run.config.train.seed);
  }
  check_dimensions(model->config(), prepared.train, "training data");
  if (prepared.train.empty()) throw ContractError("training set is empty");
  const TaskDataset tasks = training_tasks(prepared.train, model->config().n_protocol, run.config.train);
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < std::min(options.batch, tasks.size()); ++j) idx.push_back(j);
  GradcheckOptions go;
  go.sample_count = options.samples;
  go.seed = run.config.train.seed;
  go.weights = run.config.train.loss;
  const GradcheckReport report = tsan::gradcheck(*model, make_batch<double>(tasks, idx), go);
  run.write_json("gradcheck.json", report.to_json());
  nlohmann::json summary = {{"passed", report.passed()},
                            {"samples", report.entries.size()},
                            {"max_rel_error", report.max_rel_error},
                            {"tolerance", report.tolerance},
                            {"failing_paths", report.failing_paths}};
  run.finish(summary);
  if (!report.passed()) {
    std::string paths;
    for (const auto& p : report.failing_paths) paths += (paths.empty() ? "" : ", ") + p;
    throw ContractError("gradient check failed for: " + paths);
  }
  return summary;
}

int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err) {
  try {
    nlohmann::json summary;
    if (command == "synth-data") summary = synth_data(options);
    else if (command == "preprocess") summary = preprocess(options);
    else if (command == "pretrain") summary = pretrain(options);
    else if (command == "train") summary = train(options);
    else if (command == "evaluate") summary = evaluate(options);
    else if (command == "ablate") summary = ablate(options);
    else if (command == "predict") summary = predict(options);
    else if (command == "gradcheck") summary = gradcheck(options);
    else throw ConfigError("unknown command '" + command + "'");
    out << summary.dump(2) << '\n';
    return 0;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON content: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tsan::cli
