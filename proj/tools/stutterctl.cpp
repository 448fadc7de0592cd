// SPDX-License-Identifier: Apache-2.0
//
// stutterctl: corpus generation, detector training, diagnosis, session
// history and therapy recommendation from the command line. Results go to
// stdout as JSON, everything else to stderr.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stutter/assessment.hpp"
#include "stutter/detector.hpp"
#include "stutter/error.hpp"
#include "stutter/session.hpp"
#include "stutter/synth.hpp"
#include "stutter/therapy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stutter;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

struct Overrides {
  FeatureConfig features;
  TrainConfig train;
};

Overrides load_config(const std::string& path) {
  Overrides o;
  if (path.empty()) return o;
  json j = read_json_file(path);
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  try {
    if (j.contains("features")) o.features = j.at("features").get<FeatureConfig>();
    if (j.contains("train")) o.train = j.at("train").get<TrainConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  return o;
}

TherapyCatalog load_catalog(const std::string& path) {
  if (path.empty()) return TherapyCatalog::default_catalog();
  try {
    auto c = read_json_file(path).get<TherapyCatalog>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "bad catalog " + path + ": " + e.what());
  }
}

struct GenCorpusArgs {
  std::string out;
  CorpusSpec spec;
};

int run_gen_corpus(const GenCorpusArgs& a) {
  auto counts = corpus_counts(a.spec);
  auto manifest = build_corpus(a.spec, a.out);
  emit({{"manifest", manifest.string()},
        {"n_clips", a.spec.n_clips},
        {"counts",
         {{"prolongation", counts.prolongation},
          {"repetition", counts.repetition},
          {"fluent", counts.fluent},
          {"noise", counts.noise}}}});
  return 0;
}

struct TrainArgs {
  std::string kind;
  std::string manifest;
  std::string out_model;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::string config;
};

int run_train(const TrainArgs& a) {
  Overrides o = load_config(a.config);
  if (a.epochs) o.train.epochs = *a.epochs;
  if (a.batch_size) o.train.batch_size = *a.batch_size;
  if (a.seed) o.train.seed = *a.seed;
  if (a.learning_rate) o.train.learning_rate = *a.learning_rate;
  o.train.validate();
  const DetectorKind kind = detector_kind_from_string(a.kind);
  auto entries = read_manifest(a.manifest);
  DetectorOptions opts;
  opts.features = o.features;
  auto t0 = std::chrono::steady_clock::now();
  auto result = train_detector(kind, entries, o.train, opts);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.detector.save(a.out_model);
  std::cerr << "trained " << a.kind << " detector in " << secs << " s\n";
  json j = result;
  j["model_path"] = a.out_model;
  emit(j);
  return 0;
}

struct DiagnoseArgs {
  std::string model_prolongation;
  std::string model_repetition;
  std::string wav;
  std::string report_out;
  std::string clip_id;
};

int run_diagnose(const DiagnoseArgs& a) {
  auto prol = Detector::load(a.model_prolongation);
  auto rep = Detector::load(a.model_repetition);
  auto clip = read_wav_file(a.wav);
  std::string id = a.clip_id.empty() ? fs::path(a.wav).stem().string() : a.clip_id;
  json j = diagnose(prol, rep, clip, id);
  if (!a.report_out.empty()) write_text_file(a.report_out, j.dump(2) + "\n");
  emit(j);
  return 0;
}

struct SessionAddArgs {
  std::string store;
  std::string patient;
  std::string report;
  std::optional<std::int64_t> ts;
};

int run_session_add(const SessionAddArgs& a) {
  DiagnosisReport report;
  try {
    report = read_json_file(a.report).get<DiagnosisReport>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "bad report " + a.report + ": " + e.what());
  }
  if (!report.severity_prolongation || !report.severity_repetition) {
    throw Error(ErrorCode::NoSegments, "report " + a.report + " has no severity (clip had no segments)");
  }
  SessionStore store(a.store);
  for (const auto& w : store.warnings()) std::cerr << "warning: " << w << '\n';

  SessionRecord rec;
  rec.patient_id = a.patient;
  rec.prolongation = *report.severity_prolongation;
  rec.repetition = *report.severity_repetition;
  rec.report_path = fs::absolute(a.report).lexically_normal().string();
  if (a.ts) {
    rec.timestamp = *a.ts;
  } else {
    // wall clock, nudged forward when several sessions land in one second
    rec.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    auto prior = store.sessions(a.patient);
    if (!prior.empty()) rec.timestamp = std::max(rec.timestamp, prior.back().timestamp + 1);
  }
  store.append(rec);
  emit({{"patient_id", rec.patient_id},
        {"ts", rec.timestamp},
        {"prolongation", rec.prolongation},
        {"repetition", rec.repetition},
        {"report_path", rec.report_path}});
  return 0;
}

struct RecommendArgs {
  std::string store;
  std::string patient;
  std::string recommender;
  std::string catalog;
  std::size_t window = 1;
};

int run_recommend(const RecommendArgs& a) {
  if (!fs::exists(a.store)) throw Error(ErrorCode::IoFailure, "session store " + a.store + " does not exist");
  SessionStore store(a.store);
  for (const auto& w : store.warnings()) std::cerr << "warning: " << w << '\n';
  auto in = improvement_inputs_windowed(store, a.patient, a.window);
  TherapyRecommender rec;
  try {
    rec = read_json_file(a.recommender).get<TherapyRecommender>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptModel, "bad recommender " + a.recommender + ": " + e.what());
  }
  TherapyCatalog catalog = load_catalog(a.catalog);
  StutterProfile profile{bucketize(in.current_prolongation), bucketize(in.current_repetition),
                         improvement_bucket(in.initial_prolongation, in.current_prolongation,
                                            in.initial_repetition, in.current_repetition)};
  json j = recommend(rec, profile, catalog);
  j["patient_id"] = a.patient;
  j["profile"] = profile;
  emit(j);
  return 0;
}

int run_gen_therapy_data(const std::string& out, const std::string& catalog_path) {
  TherapyCatalog catalog = load_catalog(catalog_path);
  RuleDataset data{catalog.names(), generate_rule_dataset(catalog)};
  write_rule_dataset_csv(out, data);
  emit({{"path", out}, {"rows", data.rows.size()}, {"therapies", data.therapy_names}});
  return 0;
}

struct TrainRecommenderArgs {
  std::string data;
  std::string out_model;
  PolynomialKernel kernel;
  SmoOptions smo;
};

int run_train_recommender(const TrainRecommenderArgs& a) {
  auto data = read_rule_dataset_csv(a.data);
  auto rec = train_recommender(data, a.kernel, a.smo);
  for (const auto& w : rec.warnings) std::cerr << "warning: " << w << '\n';
  write_text_file(a.out_model, json(rec).dump(2) + "\n");
  json acc = json::object();
  for (std::size_t k = 0; k < rec.therapy_names.size(); ++k)
    acc[rec.therapy_names[k]] = recommender_accuracy(rec, data, k);
  emit({{"model_path", a.out_model}, {"training_accuracy", acc}, {"warnings", rec.warnings}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stuttered-speech dysfluency toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenCorpusArgs gc;
  auto* gen = app.add_subcommand("gen-corpus", "write a labeled synthetic corpus and its manifest");
  gen->add_option("--out", gc.out, "output directory")->required();
  gen->add_option("--n", gc.spec.n_clips, "number of clips")->capture_default_str();
  gen->add_option("--ratio", gc.spec.ratio_stutter, "stutter share of clips")->capture_default_str();
  gen->add_option("--seed", gc.spec.seed)->capture_default_str();
  gen->add_option("--clip-seconds", gc.spec.clip_seconds)->capture_default_str();
  gen->callback([&] { action = [&] { return run_gen_corpus(gc); }; });

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train one detector from a manifest");
  train->add_option("--kind", tr.kind, "prolongation | repetition")
      ->required()
      ->check(CLI::IsMember({"prolongation", "repetition"}));
  train->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--out-model", tr.out_model)->required();
  train->add_option("--epochs", tr.epochs);
  train->add_option("--batch-size", tr.batch_size);
  train->add_option("--seed", tr.seed);
  train->add_option("--lr", tr.learning_rate);
  train->add_option("--config", tr.config, "JSON with \"features\" / \"train\" overrides")->check(CLI::ExistingFile);
  train->callback([&] { action = [&] { return run_train(tr); }; });

  DiagnoseArgs dg;
  auto* diag = app.add_subcommand("diagnose", "score a recording with both detectors");
  diag->add_option("--model-prolongation", dg.model_prolongation)->required()->check(CLI::ExistingFile);
  diag->add_option("--model-repetition", dg.model_repetition)->required()->check(CLI::ExistingFile);
  diag->add_option("--wav", dg.wav)->required()->check(CLI::ExistingFile);
  diag->add_option("--report-out", dg.report_out);
  diag->add_option("--clip-id", dg.clip_id, "defaults to the WAV file stem");
  diag->callback([&] { action = [&] { return run_diagnose(dg); }; });

  SessionAddArgs sa;
  auto* sadd = app.add_subcommand("session-add", "append a diagnosis to a patient's history");
  sadd->add_option("--store", sa.store)->required();
  sadd->add_option("--patient", sa.patient)->required();
  sadd->add_option("--report", sa.report)->required()->check(CLI::ExistingFile);
  sadd->add_option("--ts", sa.ts, "UTC seconds; defaults to now");
  sadd->callback([&] { action = [&] { return run_session_add(sa); }; });

  RecommendArgs rc;
  auto* recm = app.add_subcommand("recommend", "assign therapies from a patient's history");
  recm->add_option("--store", rc.store)->required();
  recm->add_option("--patient", rc.patient)->required();
  recm->add_option("--recommender", rc.recommender)->required()->check(CLI::ExistingFile);
  recm->add_option("--catalog", rc.catalog)->check(CLI::ExistingFile);
  recm->add_option("--window", rc.window, "average the latest N sessions as current")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  recm->callback([&] { action = [&] { return run_recommend(rc); }; });

  std::string td_out, td_catalog;
  auto* gtd = app.add_subcommand("gen-therapy-data", "write the 64-row rule dataset as CSV");
  gtd->add_option("--out", td_out)->required();
  gtd->add_option("--catalog", td_catalog)->check(CLI::ExistingFile);
  gtd->callback([&] { action = [&] { return run_gen_therapy_data(td_out, td_catalog); }; });

  TrainRecommenderArgs trr;
  auto* trec = app.add_subcommand("train-recommender", "fit one polynomial-kernel SVM per therapy");
  trec->add_option("--data", trr.data)->required()->check(CLI::ExistingFile);
  trec->add_option("--out-model", trr.out_model)->required();
  trec->add_option("--C", trr.smo.C)->capture_default_str();
  trec->add_option("--degree", trr.kernel.degree)->capture_default_str();
  trec->add_option("--gamma", trr.kernel.gamma)->capture_default_str();
  trec->add_option("--coef0", trr.kernel.coef0)->capture_default_str();
  trec->callback([&] { action = [&] { return run_train_recommender(trr); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "stutterctl: " << e.what() << '\n';
    return kExitUser;
  }

  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "stutterctl: " << e.what() << '\n';
    return is_user_error(e.code()) ? kExitUser : kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "stutterctl: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
