#pragma once

// End-to-end workflows over a synthetic corpus: scenario selection,
// training, reference-based evaluation, robustness and single-image
// attribution.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attrib/corpus.hpp"
#include "attrib/defl.hpp"
#include "attrib/dmcloss.hpp"
#include "attrib/metrics.hpp"
#include "attrib/rfc.hpp"
#include "attrib/semantic.hpp"

namespace attrib {

enum class Scenario { RealGanDm, RealGan, RealDm, GanDm, GanOnly, DmOnly };

std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view s);
bool scenario_includes(Scenario s, Family f);

struct Ablations {
    bool defl_off = false;
    bool mhf_off = false;
    bool single_margin = false;
    bool softmax_head = false;

    bool operator==(const Ablations&) const = default;
};

// Rejection threshold on 1 - p for the softmax-head ablation.
inline constexpr double kSoftmaxTheta = 0.5;

struct ExperimentConfig {
    Scenario scenario = Scenario::RealGanDm;
    bool open_set = false;
    Ablations ablations;
    DMCConfig dmc;
    double theta = kDefaultTheta;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int threads = 1;
    std::size_t fingerprint_dim = 128;
    std::size_t hidden_dim = 256;
    // Per-model caps on the images used; 0 keeps every image.
    std::size_t train_limit = 0;
    std::size_t test_limit = 0;
    std::string corpus;  // corpus directory holding manifest.jsonl
    SemanticKind semantic = SemanticKind::BuiltinStats;
    std::string embeddings;  // embeddings file for the external kind

    bool operator==(const ExperimentConfig&) const = default;
};

// Plain "key = value" lines; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_text(const ExperimentConfig& cfg);
// Applies one "key=value" override.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

struct ClassInfo {
    std::string id;
    Family family = Family::Real;

    bool operator==(const ClassInfo&) const = default;
};

// A corpus manifest loaded with its directory.
struct Corpus {
    std::filesystem::path dir;
    std::vector<ManifestEntry> entries;
};

Corpus open_corpus(const std::filesystem::path& dir);

// Seen classes of the scenario, sorted by id. Throws ConfigError when the
// corpus cannot populate the scenario.
std::vector<ClassInfo> scenario_classes(const Corpus& corpus, Scenario scenario);
// Unseen generator models that enter the open-set test split.
std::vector<ClassInfo> scenario_unseen_models(const Corpus& corpus, Scenario scenario);

struct Sample {
    std::string id;  // manifest path
    std::string model;
    Family family = Family::Real;
    Image image;
    std::vector<float> semantic;
};

// Loads images and their semantic features, in the order given.
std::vector<Sample> load_samples(const Corpus& corpus, const std::vector<const ManifestEntry*>& entries,
                                 const SemanticExtractor& extractor);

SemanticExtractor make_extractor(const ExperimentConfig& cfg);

struct TrainedModel {
    DeflModel<float> model;
    std::vector<ClassInfo> classes;
    Scenario scenario = Scenario::RealGanDm;
    Ablations ablations;
    SemanticKind semantic = SemanticKind::BuiltinStats;
    std::vector<double> epoch_loss;
};

using LogFn = std::function<void(const std::string&)>;

TrainedModel train(const ExperimentConfig& cfg, const LogFn& log = {});
TrainedModel train(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<Sample>& train_set,
                   const LogFn& log = {});

// Writes the checkpoint and a JSON sidecar (<path>.json) with everything
// needed to rebuild the model.
void save_trained(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_trained(const std::filesystem::path& path);

// Fingerprints for samples [N, D], row-major, computed in inference mode.
std::vector<float> compute_fingerprints(TrainedModel& m, const std::vector<Sample>& samples,
                                        std::size_t batch = 64);

enum class Perturbation { None, Jpeg95, Downsample4 };
std::string_view to_string(Perturbation p);
Sample perturb(const Sample& s, Perturbation p, const SemanticExtractor& extractor);

struct Evaluation {
    std::vector<ClassInfo> classes;
    ReferenceSet references;
    std::vector<std::string> reference_ids;
    std::vector<FingerprintRecord> reference_records;
    std::vector<FingerprintRecord> test_records;
    std::vector<EvalRecord> seen;    // seen-model test records
    std::vector<EvalRecord> unseen;  // unseen-model test records (open set only)
};

// Attribution with the trained model: reference fingerprints from the
// reference split, test fingerprints from the test split (unseen models
// included when open_set is set).
Evaluation evaluate(const ExperimentConfig& cfg, TrainedModel& m, Perturbation p = Perturbation::None);

// Reusable pieces for callers that evaluate the same data repeatedly.
struct EvalData {
    std::vector<Sample> references;
    std::vector<Sample> seen_test;
    std::vector<Sample> unseen_test;
};
EvalData load_eval_data(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<ClassInfo>& classes,
                        const SemanticExtractor& extractor);
Evaluation evaluate(const ExperimentConfig& cfg, TrainedModel& m, const EvalData& data,
                    Perturbation p = Perturbation::None);

struct MetricRow {
    std::string name;
    std::vector<std::pair<std::string, double>> values;
};

// Closed set: Acc. Open set: AUC, OSCR, NMI, ARI, Acc_u.
MetricRow metric_row(const std::string& name, const Evaluation& ev, bool open_set);

std::string report_json(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows);
std::string report_table(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows);

// Writes report.json, report.txt, fingerprints.atfp and references.txt.
void write_eval_outputs(const ExperimentConfig& cfg, const Evaluation& ev, const std::filesystem::path& out_dir);

// Classifies one image file against a stored reference dump.
AttributionResult attribute_image(TrainedModel& m, const ReferenceSet& refs, const std::filesystem::path& image,
                                  double theta, const SemanticExtractor& extractor);

}  // namespace attrib
