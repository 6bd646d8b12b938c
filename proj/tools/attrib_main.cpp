#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "attrib/corpus.hpp"
#include "attrib/error.hpp"
#include "attrib/experiment.hpp"
#include "attrib/filterbank.hpp"
#include "attrib/parallel.hpp"

namespace fs = std::filesystem;
using namespace attrib;

namespace {

const std::vector<std::string> kConfigKeys = {
    "scenario",    "open_set", "defl_off",   "mhf_off",    "single_margin",   "softmax_head", "m1",
    "m2",          "theta",    "epochs",     "batch_size", "lr",              "seed",         "threads",
    "fingerprint_dim", "hidden_dim", "train_limit", "test_limit", "corpus",   "semantic",     "embeddings"};

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.file, "key = value experiment config file");
    cmd->add_option("--set", args.sets, "override, key=value (repeatable)");
    for (const auto& key : kConfigKeys) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        cmd->add_option(flag, args.flags[key], "config field " + key);
    }
}

ExperimentConfig resolve_config(const ConfigArgs& args) {
    ExperimentConfig cfg = args.file.empty() ? ExperimentConfig{} : load_experiment_config(args.file);
    for (const auto& [key, value] : args.flags)
        if (!value.empty()) set_config_value(cfg, key, value);
    for (const auto& s : args.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    set_num_threads(cfg.threads);
    return cfg;
}

int cmd_bank(const std::string& out, std::uint64_t seed) {
    const FilterBank bank = build_mhf_set();
    const Partition part = partition_filters(bank, seed);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out + ": " + ec.message());
    save_bank(bank, fs::path(out) / "bank.json");
    save_partition(part, fs::path(out) / "partition.json");
    const auto tallies = center_tallies(bank);
    std::cout << bank.filters.size() << " filters / " << bank.filters.size() - kNumBaseFilters << " composites\n";
    std::cout << "center tallies (-1..-7): [";
    for (std::size_t i = 0; i < tallies.size(); ++i) std::cout << (i ? "," : "") << tallies[i];
    std::cout << "]\n";
    std::cout << "partition seed " << seed << ": parts [";
    for (std::size_t p = 0; p < kNumParts; ++p) std::cout << (p ? "," : "") << part.parts[p].size();
    std::cout << "], duplicated " << part.duplicated[0] << ", " << part.duplicated[1] << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out, const std::string& seed, int threads) {
    CorpusSpec spec = spec_path.empty() ? CorpusSpec::default_spec() : load_corpus_spec(spec_path);
    if (!seed.empty()) spec.seed = std::stoull(seed);
    set_num_threads(threads);
    const auto manifest = build_corpus(spec, out);
    std::size_t images = 0;
    for (const auto& e : manifest) images += e.split != Split::Reference;
    std::cout << "wrote " << images << " images for " << spec.models.size() << " models to " << out << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out) {
    std::ofstream log_file(out + ".log", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + out + ".log");
    const TrainedModel m = train(cfg, [&](const std::string& line) {
        std::cerr << line << "\n";
        log_file << line << "\n";
        log_file.flush();
    });
    save_trained(m, out);
    std::cout << "checkpoint written to " << out << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& out) {
    TrainedModel m = load_trained(checkpoint);
    const Evaluation ev = evaluate(cfg, m);
    write_eval_outputs(cfg, ev, out);
    std::cout << report_table(cfg, {metric_row("clean", ev, cfg.open_set)});
    return 0;
}

int cmd_robust(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& out) {
    TrainedModel m = load_trained(checkpoint);
    const Corpus corpus = open_corpus(cfg.corpus);
    const SemanticExtractor extractor = make_extractor(cfg);
    const EvalData data = load_eval_data(cfg, corpus, scenario_classes(corpus, cfg.scenario), extractor);
    std::vector<MetricRow> rows;
    for (Perturbation p : {Perturbation::None, Perturbation::Jpeg95, Perturbation::Downsample4})
        rows.push_back(metric_row(std::string(to_string(p)), evaluate(cfg, m, data, p), cfg.open_set));
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out + ": " + ec.message());
    const std::string table = report_table(cfg, rows);
    std::ofstream(fs::path(out) / "robust.json") << report_json(cfg, rows);
    std::ofstream(fs::path(out) / "robust.txt") << table;
    std::cout << table;
    return 0;
}

int cmd_attribute(const std::string& checkpoint, const std::string& refs_dir, const std::string& image,
                  double theta, const std::string& embeddings) {
    TrainedModel m = load_trained(checkpoint);
    if (!fs::exists(image)) throw IoError("no such image: " + image);
    const FingerprintFile fps = load_fingerprints(fs::path(refs_dir) / "fingerprints.atfp");
    const auto ids = load_reference_manifest(fs::path(refs_dir) / "references.txt");
    const ReferenceSet refs = reference_set_from_records(fps, ids, true);
    const SemanticExtractor extractor = m.semantic == SemanticKind::BuiltinStats
                                            ? SemanticExtractor::builtin()
                                            : SemanticExtractor::external(load_embeddings(embeddings));
    const AttributionResult r = attribute_image(m, refs, image, theta, extractor);
    std::cout << attribution_to_json(r, refs) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Activation tensors exceed the default mmap threshold; keep them on the heap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Generated-image attribution: filter bank, synthetic corpus, training and evaluation"};
    app.require_subcommand(1);

    std::string bank_out;
    std::uint64_t bank_seed = 0;
    auto* bank = app.add_subcommand("bank", "build the high-pass filter bank and a seeded partition");
    bank->add_option("-o,--out", bank_out, "output directory")->required();
    bank->add_option("--seed", bank_seed, "partition seed");

    std::string synth_spec, synth_out, synth_seed;
    int synth_threads = 1;
    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    synth->add_option("-s,--spec", synth_spec, "corpus spec (JSON); defaults to the built-in roster");
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "override the corpus spec seed");
    synth->add_option("--threads", synth_threads, "worker threads");

    ConfigArgs train_args, eval_args, robust_args;
    std::string train_out, eval_ckpt, eval_out, robust_ckpt, robust_out;
    auto* train_cmd = app.add_subcommand("train", "train a model for a scenario");
    add_config_options(train_cmd, train_args);
    train_cmd->add_option("-o,--out", train_out, "checkpoint path")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and dump fingerprints");
    add_config_options(eval_cmd, eval_args);
    eval_cmd->add_option("-m,--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("-o,--out", eval_out, "report directory")->required();

    auto* robust_cmd = app.add_subcommand("robust", "clean / JPEG-95 / downsample-1/4 report");
    add_config_options(robust_cmd, robust_args);
    robust_cmd->add_option("-m,--checkpoint", robust_ckpt, "checkpoint path")->required();
    robust_cmd->add_option("-o,--out", robust_out, "report directory")->required();

    std::string attr_ckpt, attr_refs, attr_image, attr_embeddings;
    double attr_theta = kDefaultTheta;
    auto* attr = app.add_subcommand("attribute", "attribute one image");
    attr->add_option("-m,--checkpoint", attr_ckpt, "checkpoint path")->required();
    attr->add_option("-r,--refs", attr_refs, "directory written by eval")->required();
    attr->add_option("-i,--image", attr_image, "PGM image")->required();
    attr->add_option("--theta", attr_theta, "rejection threshold");
    attr->add_option("--embeddings", attr_embeddings, "embeddings file for models using external semantics");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorKind::Usage);
    }

    try {
        if (*bank) return cmd_bank(bank_out, bank_seed);
        if (*synth) return cmd_synth(synth_spec, synth_out, synth_seed, synth_threads);
        if (*train_cmd) return cmd_train(resolve_config(train_args), train_out);
        if (*eval_cmd) return cmd_eval(resolve_config(eval_args), eval_ckpt, eval_out);
        if (*robust_cmd) return cmd_robust(resolve_config(robust_args), robust_ckpt, robust_out);
        if (*attr) return cmd_attribute(attr_ckpt, attr_refs, attr_image, attr_theta, attr_embeddings);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Usage);
    }
    return 0;
}
