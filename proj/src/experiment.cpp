#include "attrib/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attrib/checkpoint.hpp"
#include "attrib/error.hpp"
#include "attrib/optim.hpp"
#include "attrib/parallel.hpp"
#include "attrib/rng.hpp"
#include "io_util.hpp"

namespace attrib {

using nlohmann::json;
using nlohmann::ordered_json;
using tg::Shape;
using tg::Tensor;
using tg::Var;

// ---------------------------------------------------------------------------
// Scenarios and configuration

std::string_view to_string(Scenario s) {
    switch (s) {
        case Scenario::RealGanDm: return "real_gan_dm";
        case Scenario::RealGan: return "real_gan";
        case Scenario::RealDm: return "real_dm";
        case Scenario::GanDm: return "gan_dm";
        case Scenario::GanOnly: return "gan_only";
        case Scenario::DmOnly: return "dm_only";
    }
    return "?";
}

Scenario scenario_from_string(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    std::replace(lower.begin(), lower.end(), '/', '_');
    for (Scenario sc : {Scenario::RealGanDm, Scenario::RealGan, Scenario::RealDm, Scenario::GanDm, Scenario::GanOnly,
                        Scenario::DmOnly})
        if (lower == to_string(sc)) return sc;
    throw ConfigError("unknown scenario '" + std::string(s) +
                      "' (expected real_gan_dm, real_gan, real_dm, gan_dm, gan_only or dm_only)");
}

bool scenario_includes(Scenario s, Family f) {
    switch (f) {
        case Family::Real: return s == Scenario::RealGanDm || s == Scenario::RealGan || s == Scenario::RealDm;
        case Family::Gan:
            return s == Scenario::RealGanDm || s == Scenario::RealGan || s == Scenario::GanDm || s == Scenario::GanOnly;
        case Family::Dm:
            return s == Scenario::RealGanDm || s == Scenario::RealDm || s == Scenario::GanDm || s == Scenario::DmOnly;
    }
    return false;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

template <typename U>
U parse_unsigned(std::string_view key, std::string_view v) {
    U out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    return out;
}

double parse_double(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(std::string(v), &used);
        if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

void set_config_value(ExperimentConfig& c, std::string_view key_in, std::string_view value_in) {
    const std::string key = trim(key_in), v = trim(value_in);
    if (key == "scenario") c.scenario = scenario_from_string(v);
    else if (key == "open_set") c.open_set = parse_bool(key, v);
    else if (key == "defl_off") c.ablations.defl_off = parse_bool(key, v);
    else if (key == "mhf_off") c.ablations.mhf_off = parse_bool(key, v);
    else if (key == "single_margin") c.ablations.single_margin = parse_bool(key, v);
    else if (key == "softmax_head") c.ablations.softmax_head = parse_bool(key, v);
    else if (key == "m1") c.dmc.m1 = parse_double(key, v);
    else if (key == "m2") c.dmc.m2 = parse_double(key, v);
    else if (key == "theta") c.theta = parse_double(key, v);
    else if (key == "epochs") c.epochs = parse_unsigned<std::size_t>(key, v);
    else if (key == "batch_size") c.batch_size = parse_unsigned<std::size_t>(key, v);
    else if (key == "lr") c.lr = parse_double(key, v);
    else if (key == "seed") c.seed = parse_unsigned<std::uint64_t>(key, v);
    else if (key == "threads") c.threads = static_cast<int>(parse_unsigned<unsigned>(key, v));
    else if (key == "fingerprint_dim") c.fingerprint_dim = parse_unsigned<std::size_t>(key, v);
    else if (key == "hidden_dim") c.hidden_dim = parse_unsigned<std::size_t>(key, v);
    else if (key == "train_limit") c.train_limit = parse_unsigned<std::size_t>(key, v);
    else if (key == "test_limit") c.test_limit = parse_unsigned<std::size_t>(key, v);
    else if (key == "corpus") c.corpus = v;
    else if (key == "semantic") c.semantic = semantic_kind_from_string(v);
    else if (key == "embeddings") c.embeddings = v;
    else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_experiment_config(std::string_view text) {
    ExperimentConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            set_config_value(c, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(io::read_text_file(path));
}

std::string experiment_config_to_text(const ExperimentConfig& c) {
    std::ostringstream s;
    auto b = [](bool v) { return v ? "true" : "false"; };
    s << "scenario = " << to_string(c.scenario) << "\n"
      << "open_set = " << b(c.open_set) << "\n"
      << "defl_off = " << b(c.ablations.defl_off) << "\n"
      << "mhf_off = " << b(c.ablations.mhf_off) << "\n"
      << "single_margin = " << b(c.ablations.single_margin) << "\n"
      << "softmax_head = " << b(c.ablations.softmax_head) << "\n"
      << "m1 = " << fmt_double(c.dmc.m1) << "\n"
      << "m2 = " << fmt_double(c.dmc.m2) << "\n"
      << "theta = " << fmt_double(c.theta) << "\n"
      << "epochs = " << c.epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "lr = " << fmt_double(c.lr) << "\n"
      << "seed = " << c.seed << "\n"
      << "threads = " << c.threads << "\n"
      << "fingerprint_dim = " << c.fingerprint_dim << "\n"
      << "hidden_dim = " << c.hidden_dim << "\n"
      << "train_limit = " << c.train_limit << "\n"
      << "test_limit = " << c.test_limit << "\n"
      << "corpus = " << c.corpus << "\n"
      << "semantic = " << to_string(c.semantic) << "\n"
      << "embeddings = " << c.embeddings << "\n";
    return s.str();
}

// ---------------------------------------------------------------------------
// Corpus access

Corpus open_corpus(const std::filesystem::path& dir) {
    if (dir.empty()) throw UsageError("no corpus directory given");
    return Corpus{dir, load_manifest(dir / "manifest.jsonl")};
}

namespace {

struct ModelInfo {
    Family family = Family::Real;
    bool has_train = false;
    bool has_test = false;
};

std::map<std::string, ModelInfo> model_table(const Corpus& corpus) {
    std::map<std::string, ModelInfo> t;
    for (const auto& e : corpus.entries) {
        auto [it, fresh] = t.emplace(e.model, ModelInfo{e.family});
        if (!fresh && it->second.family != e.family)
            throw ValidationError("manifest lists model '" + e.model + "' under two families");
        if (e.split == Split::Train) it->second.has_train = true;
        if (e.split == Split::Test) it->second.has_test = true;
    }
    return t;
}

bool allows_single_family(Scenario s) {
    return !(scenario_includes(s, Family::Gan) && scenario_includes(s, Family::Dm));
}

}  // namespace

std::vector<ClassInfo> scenario_classes(const Corpus& corpus, Scenario scenario) {
    std::vector<ClassInfo> out;
    for (const auto& [id, info] : model_table(corpus))
        if (info.has_train && scenario_includes(scenario, info.family)) out.push_back({id, info.family});
    for (Family f : {Family::Real, Family::Gan, Family::Dm}) {
        if (!scenario_includes(scenario, f)) continue;
        const bool present = std::any_of(out.begin(), out.end(), [f](const ClassInfo& c) { return c.family == f; });
        if (!present)
            throw ConfigError("scenario " + std::string(to_string(scenario)) + " needs seen " +
                              std::string(to_string(f)) + " models, the corpus has none");
    }
    return out;
}

std::vector<ClassInfo> scenario_unseen_models(const Corpus& corpus, Scenario scenario) {
    std::vector<ClassInfo> out;
    for (const auto& [id, info] : model_table(corpus))
        if (!info.has_train && info.has_test && info.family != Family::Real && scenario_includes(scenario, info.family))
            out.push_back({id, info.family});
    return out;
}

SemanticExtractor make_extractor(const ExperimentConfig& cfg) {
    if (cfg.semantic == SemanticKind::BuiltinStats) return SemanticExtractor::builtin();
    if (cfg.embeddings.empty()) throw ConfigError("semantic = external needs an embeddings file");
    return SemanticExtractor::external(load_embeddings(cfg.embeddings));
}

std::vector<Sample> load_samples(const Corpus& corpus, const std::vector<const ManifestEntry*>& entries,
                                 const SemanticExtractor& extractor) {
    std::vector<Sample> out(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = *entries[i];
        Sample& s = out[i];
        s.id = e.path;
        s.model = e.model;
        s.family = e.family;
        s.image = read_pgm(corpus.dir / e.path);
        s.semantic = extractor.extract(s.image, s.id);
    });
    return out;
}

namespace {

std::vector<const ManifestEntry*> select(const Corpus& corpus, Split split, const std::set<std::string>& models,
                                         std::size_t limit) {
    std::vector<const ManifestEntry*> out;
    std::map<std::string, std::size_t> taken;
    for (const auto& e : corpus.entries) {
        if (e.split != split || !models.count(e.model)) continue;
        if (limit > 0 && taken[e.model] >= limit) continue;
        ++taken[e.model];
        out.push_back(&e);
    }
    return out;
}

std::set<std::string> ids_of(const std::vector<ClassInfo>& cs) {
    std::set<std::string> s;
    for (const auto& c : cs) s.insert(c.id);
    return s;
}

void fill_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx, Tensor<float>& images,
                Tensor<float>& semantic) {
    const Image& first = samples[idx.front()].image;
    const std::size_t plane = first.pixels.size(), S = samples[idx.front()].semantic.size();
    images = Tensor<float>(Shape{idx.size(), first.channels, first.height, first.width});
    semantic = Tensor<float>(Shape{idx.size(), S});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const Sample& s = samples[idx[b]];
        if (s.image.pixels.size() != plane)
            throw DimensionError("sample '" + s.id + "' differs in size from the rest of the batch");
        std::copy(s.image.pixels.begin(), s.image.pixels.end(), images.raw() + b * plane);
        std::copy(s.semantic.begin(), s.semantic.end(), semantic.raw() + b * S);
    }
}

// Stratified batches: every class in a batch contributes at least two samples.
class BatchSampler {
public:
    BatchSampler(const std::vector<std::vector<std::size_t>>& pools, std::size_t batch, std::uint64_t seed)
        : pools_(pools), queues_(pools), pos_(pools.size(), 0), batch_(batch), rng_(seed) {
        for (auto& q : queues_) rng_.shuffle(q);
    }

    std::vector<std::size_t> next() {
        const std::size_t N = pools_.size();
        std::vector<std::size_t> order(N);
        for (std::size_t i = 0; i < N; ++i) order[i] = i;
        rng_.shuffle(order);
        std::vector<std::size_t> counts(N, 0);
        if (2 * N <= batch_) {
            for (std::size_t i = 0; i < N; ++i) counts[i] = batch_ / N;
            for (std::size_t r = 0; r < batch_ % N; ++r) ++counts[order[r]];
        } else {
            const std::size_t k = std::max<std::size_t>(1, batch_ / 2);
            for (std::size_t r = 0; r < k; ++r) counts[order[r]] = 2;
            if (batch_ % 2 == 1 && batch_ >= 2) ++counts[order[0]];
        }
        std::vector<std::size_t> out;
        out.reserve(batch_);
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t j = 0; j < counts[c]; ++j) out.push_back(draw(c));
        return out;
    }

private:
    std::size_t draw(std::size_t c) {
        if (pos_[c] == queues_[c].size()) {
            rng_.shuffle(queues_[c]);
            pos_[c] = 0;
        }
        return queues_[c][pos_[c]++];
    }

    const std::vector<std::vector<std::size_t>>& pools_;
    std::vector<std::vector<std::size_t>> queues_;
    std::vector<std::size_t> pos_;
    std::size_t batch_;
    Rng rng_;
};

DeflConfig model_config(const ExperimentConfig& cfg, std::size_t channels, std::size_t semantic_dim,
                        std::size_t classes) {
    DeflConfig d;
    d.input_channels = channels;
    d.fingerprint_dim = cfg.fingerprint_dim;
    d.hidden_dim = cfg.hidden_dim;
    d.semantic_dim = semantic_dim;
    d.init_seed = hash_seed(cfg.seed, fnv1a("init"));
    d.dcb_init = cfg.ablations.mhf_off ? DcbInit::Random : DcbInit::Mhf;
    d.directional = !cfg.ablations.defl_off;
    d.classifier_classes = cfg.ablations.softmax_head ? classes : 0;
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Training

TrainedModel train(const ExperimentConfig& cfg, const LogFn& log) {
    const Corpus corpus = open_corpus(cfg.corpus);
    const auto classes = scenario_classes(corpus, cfg.scenario);
    const SemanticExtractor extractor = make_extractor(cfg);
    set_num_threads(cfg.threads);
    const auto samples = load_samples(corpus, select(corpus, Split::Train, ids_of(classes), cfg.train_limit), extractor);
    return train(cfg, corpus, samples, log);
}

TrainedModel train(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<Sample>& samples,
                   const LogFn& log) {
    if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
    cfg.dmc.validate();
    set_num_threads(cfg.threads);

    const auto classes = scenario_classes(corpus, cfg.scenario);
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i].id] = i;
    std::vector<std::vector<std::size_t>> pools(classes.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto it = class_index.find(samples[i].model);
        if (it == class_index.end())
            throw ConfigError("training sample '" + samples[i].id + "' is not from a seen model of scenario " +
                              std::string(to_string(cfg.scenario)));
        pools[it->second].push_back(i);
    }
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (pools[c].empty()) throw ConfigError("class '" + classes[c].id + "' has no training images");

    const Image& probe = samples.front().image;
    TrainedModel tm{init_defl<float>(model_config(cfg, probe.channels, samples.front().semantic.size(), classes.size()),
                                     partition_filters(build_mhf_set(), cfg.seed)),
                    classes,
                    cfg.scenario,
                    cfg.ablations,
                    cfg.semantic,
                    {}};
    DeflModel<float>& model = tm.model;

    std::vector<tg::Parameter<float>> params = model.parameters();
    tg::Adam<float> adam(params, tg::AdamOptions{cfg.lr});

    const std::size_t steps = (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
    Tensor<float> images, semantic;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchSampler sampler(pools, cfg.batch_size, hash_seed(cfg.seed, fnv1a("batches"), epoch));
        double total = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            const auto idx = sampler.next();
            fill_batch(samples, idx, images, semantic);
            PairLabels labels;
            for (std::size_t i : idx) {
                labels.class_ids.push_back(static_cast<int>(class_index.at(samples[i].model)));
                labels.families.push_back(samples[i].family);
            }
            const Var<float> x = Var<float>::leaf(images), s = Var<float>::leaf(semantic);
            const Var<float> fp = model.fingerprint(x, s, true);
            Var<float> loss;
            if (cfg.ablations.softmax_head)
                loss = tg::cross_entropy(model.classify_logits(fp), std::span<const int>(labels.class_ids));
            else if (cfg.ablations.single_margin)
                loss = single_margin_loss(fp, labels, cfg.dmc.m1);
            else
                loss = dmc_loss(fp, labels, cfg.dmc);
            adam.zero_grad();
            tg::backward(loss);
            adam.step();
            total += loss.value().item();
        }
        tm.epoch_loss.push_back(total / static_cast<double>(steps));
        if (log) {
            std::ostringstream line;
            line << "epoch " << (epoch + 1) << "/" << cfg.epochs << " loss " << std::setprecision(6)
                 << tm.epoch_loss.back();
            log(line.str());
        }
    }
    return tm;
}

// ---------------------------------------------------------------------------
// Persistence

void save_trained(const TrainedModel& m, const std::filesystem::path& path) {
    tg::save_checkpoint(path, m.model.state());
    ordered_json j;
    j["format"] = "attrib-model";
    j["version"] = 1;
    j["model"] = json::parse(defl_config_to_json(m.model.config()));
    j["partition"] = json::parse(partition_to_json(m.model.partition()));
    ordered_json cls = ordered_json::array();
    for (const auto& c : m.classes) cls.push_back({{"id", c.id}, {"family", std::string(to_string(c.family))}});
    j["classes"] = cls;
    j["scenario"] = std::string(to_string(m.scenario));
    j["ablations"] = {{"defl_off", m.ablations.defl_off},
                      {"mhf_off", m.ablations.mhf_off},
                      {"single_margin", m.ablations.single_margin},
                      {"softmax_head", m.ablations.softmax_head}};
    j["semantic"] = std::string(to_string(m.semantic));
    j["epoch_loss"] = m.epoch_loss;
    io::write_text_file(path.string() + ".json", j.dump(2) + "\n");
}

TrainedModel load_trained(const std::filesystem::path& path) {
    const std::string side = path.string() + ".json";
    json j;
    try {
        j = json::parse(io::read_text_file(side));
    } catch (const json::parse_error& e) {
        throw ParseError(side + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "attrib-model")
            throw FormatError(side + ": not a model sidecar");
        const DeflConfig dc = defl_config_from_json(j.at("model").dump());
        const Partition part = partition_from_json(j.at("partition").dump());
        TrainedModel m{init_defl<float>(dc, part), {}, scenario_from_string(j.at("scenario").get<std::string>()),
                       {}, semantic_kind_from_string(j.at("semantic").get<std::string>()), {}};
        for (const auto& c : j.at("classes"))
            m.classes.push_back({c.at("id").get<std::string>(), family_from_string(c.at("family").get<std::string>())});
        const auto& a = j.at("ablations");
        m.ablations = {a.at("defl_off").get<bool>(), a.at("mhf_off").get<bool>(), a.at("single_margin").get<bool>(),
                       a.at("softmax_head").get<bool>()};
        m.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
        m.model.load_state(tg::load_checkpoint(path));
        return m;
    } catch (const json::exception& e) {
        throw FormatError(side + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Inference

namespace {

// Fingerprints and, for softmax-head models, class probabilities.
void run_model(TrainedModel& m, const std::vector<Sample>& samples, std::size_t batch, std::vector<float>* fps,
               std::vector<double>* probs) {
    if (samples.empty()) return;
    tg::NoGradGuard guard;
    const std::size_t D = m.model.config().fingerprint_dim;
    const std::size_t N = m.classes.size();
    if (fps) fps->assign(samples.size() * D, 0.0f);
    if (probs) probs->assign(samples.size() * N, 0.0);
    Tensor<float> images, semantic;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
        const std::size_t end = std::min(samples.size(), start + batch);
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        fill_batch(samples, idx, images, semantic);
        const Var<float> fp = m.model.fingerprint(Var<float>::leaf(images), Var<float>::leaf(semantic), false);
        if (fps) std::copy(fp.value().raw(), fp.value().raw() + idx.size() * D, fps->data() + start * D);
        if (probs) {
            const Var<float> logits = m.model.classify_logits(fp);
            for (std::size_t b = 0; b < idx.size(); ++b) {
                const float* row = logits.value().raw() + b * N;
                const double mx = *std::max_element(row, row + N);
                double z = 0.0;
                for (std::size_t c = 0; c < N; ++c) z += std::exp(row[c] - mx);
                for (std::size_t c = 0; c < N; ++c) (*probs)[(start + b) * N + c] = std::exp(row[c] - mx) / z;
            }
        }
    }
}

AttributionResult softmax_decision(const double* p, const std::vector<ClassInfo>& classes) {
    AttributionResult r;
    r.theta = kSoftmaxTheta;
    double gan = 0.0, dm = 0.0;
    bool has_gan = false, has_dm = false;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        r.distances.push_back(1.0 - p[c]);
        if (classes[c].family == Family::Gan) gan += p[c], has_gan = true;
        if (classes[c].family == Family::Dm) dm += p[c], has_dm = true;
    }
    r.class_index = 0;
    for (std::size_t c = 1; c < classes.size(); ++c)
        if (r.distances[c] < r.distances[r.class_index]) r.class_index = c;
    r.d_min = r.distances[r.class_index];
    r.class_id = classes[r.class_index].id;
    if (r.d_min <= r.theta)
        r.decision = Decision::Seen;
    else if (!has_gan)
        r.decision = Decision::UnseenDm;
    else if (!has_dm)
        r.decision = Decision::UnseenGan;
    else
        r.decision = gan > dm ? Decision::UnseenGan : Decision::UnseenDm;
    return r;
}

std::vector<FingerprintRecord> to_records(const std::vector<Sample>& samples, const std::vector<float>& fps,
                                          std::size_t D) {
    std::vector<FingerprintRecord> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        out.push_back({samples[i].id, samples[i].model, samples[i].family,
                       std::vector<float>(fps.begin() + i * D, fps.begin() + (i + 1) * D)});
    return out;
}

}  // namespace

std::vector<float> compute_fingerprints(TrainedModel& m, const std::vector<Sample>& samples, std::size_t batch) {
    std::vector<float> out;
    run_model(m, samples, batch, &out, nullptr);
    return out;
}

std::string_view to_string(Perturbation p) {
    switch (p) {
        case Perturbation::None: return "clean";
        case Perturbation::Jpeg95: return "jpeg95";
        case Perturbation::Downsample4: return "downsample4";
    }
    return "?";
}

Sample perturb(const Sample& s, Perturbation p, const SemanticExtractor& extractor) {
    if (p == Perturbation::None) return s;
    Sample out = s;
    out.image = p == Perturbation::Jpeg95 ? perturb_jpeg(s.image, 95) : perturb_downsample(s.image, 4, true);
    out.semantic = extractor.extract(out.image, out.id);
    return out;
}

EvalData load_eval_data(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<ClassInfo>& classes,
                        const SemanticExtractor& extractor) {
    EvalData d;
    const auto refs = select(corpus, Split::Reference, ids_of(classes), 0);
    for (const auto& c : classes)
        if (std::none_of(refs.begin(), refs.end(), [&](const ManifestEntry* e) { return e->model == c.id; }))
            throw ConfigError("corpus has no reference images for class '" + c.id + "'");
    d.references = load_samples(corpus, refs, extractor);
    d.seen_test = load_samples(corpus, select(corpus, Split::Test, ids_of(classes), cfg.test_limit), extractor);
    if (cfg.open_set) {
        const auto unseen = scenario_unseen_models(corpus, cfg.scenario);
        if (unseen.empty())
            throw ConfigError("open-set evaluation of scenario " + std::string(to_string(cfg.scenario)) +
                              " needs unseen models in the corpus");
        d.unseen_test = load_samples(corpus, select(corpus, Split::Test, ids_of(unseen), cfg.test_limit), extractor);
    }
    return d;
}

Evaluation evaluate(const ExperimentConfig& cfg, TrainedModel& m, Perturbation p) {
    const Corpus corpus = open_corpus(cfg.corpus);
    const SemanticExtractor extractor = make_extractor(cfg);
    set_num_threads(cfg.threads);
    return evaluate(cfg, m, load_eval_data(cfg, corpus, scenario_classes(corpus, cfg.scenario), extractor), p);
}

Evaluation evaluate(const ExperimentConfig& cfg, TrainedModel& m, const EvalData& data, Perturbation p) {
    set_num_threads(cfg.threads);
    if (m.scenario != cfg.scenario)
        throw ConfigError("checkpoint was trained for scenario " + std::string(to_string(m.scenario)) +
                          ", config asks for " + std::string(to_string(cfg.scenario)));
    if (m.semantic != cfg.semantic) throw ConfigError("checkpoint and config disagree on the semantic extractor");
    const std::size_t D = m.model.config().fingerprint_dim;
    const SemanticExtractor extractor =
        p == Perturbation::None || cfg.semantic == SemanticKind::BuiltinStats ? SemanticExtractor::builtin()
                                                                              : make_extractor(cfg);

    Evaluation ev;
    ev.classes = m.classes;
    std::vector<float> ref_fp;
    run_model(m, data.references, 64, &ref_fp, nullptr);
    ev.reference_records = to_records(data.references, ref_fp, D);
    std::map<std::string, ReferenceClass> grouped;
    for (const auto& c : m.classes) grouped[c.id] = ReferenceClass{c.id, c.family, {}};
    for (const auto& r : ev.reference_records) {
        auto it = grouped.find(r.class_id);
        if (it == grouped.end())
            throw ConfigError("reference image '" + r.id + "' belongs to '" + r.class_id +
                              "', which the checkpoint was not trained on");
        it->second.fingerprints.push_back(r.values);
        ev.reference_ids.push_back(r.id);
    }
    std::vector<ReferenceClass> list;
    for (auto& [_, c] : grouped) list.push_back(std::move(c));
    ev.references = build_reference_set(std::move(list), allows_single_family(cfg.scenario));

    auto run_split = [&](const std::vector<Sample>& split, bool seen, std::vector<EvalRecord>& out) {
        std::vector<Sample> inputs;
        const std::vector<Sample>* use = &split;
        if (p != Perturbation::None) {
            inputs.resize(split.size());
            parallel_for(split.size(), [&](std::size_t i) { inputs[i] = perturb(split[i], p, extractor); });
            use = &inputs;
        }
        std::vector<float> fps;
        std::vector<double> probs;
        run_model(m, *use, 64, &fps, m.ablations.softmax_head ? &probs : nullptr);
        auto recs = to_records(*use, fps, D);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            EvalRecord r;
            r.true_class = recs[i].class_id;
            r.true_family = recs[i].family;
            r.seen = seen;
            r.prediction = m.ablations.softmax_head
                               ? softmax_decision(probs.data() + i * m.classes.size(), m.classes)
                               : classify(recs[i].values, ev.references, cfg.theta);
            out.push_back(std::move(r));
        }
        for (auto& r : recs) ev.test_records.push_back(std::move(r));
    };
    run_split(data.seen_test, true, ev.seen);
    if (cfg.open_set) run_split(data.unseen_test, false, ev.unseen);
    return ev;
}

// ---------------------------------------------------------------------------
// Reports

MetricRow metric_row(const std::string& name, const Evaluation& ev, bool open_set) {
    MetricRow row{name, {}};
    if (!open_set) {
        row.values.emplace_back("Acc", accuracy(ev.seen));
        return row;
    }
    std::vector<EvalRecord> all = ev.seen;
    all.insert(all.end(), ev.unseen.begin(), ev.unseen.end());
    row.values.emplace_back("AUC", auc(all));
    row.values.emplace_back("OSCR", oscr(all));
    const auto pred = predicted_labels(all), truth = true_labels(all);
    row.values.emplace_back("NMI", nmi(pred, truth));
    row.values.emplace_back("ARI", ari(pred, truth));
    row.values.emplace_back("Acc_u", acc_u(ev.unseen));
    return row;
}

std::string report_json(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows) {
    ordered_json j;
    j["scenario"] = std::string(to_string(cfg.scenario));
    j["open_set"] = cfg.open_set;
    j["ablations"] = {{"defl_off", cfg.ablations.defl_off},
                      {"mhf_off", cfg.ablations.mhf_off},
                      {"single_margin", cfg.ablations.single_margin},
                      {"softmax_head", cfg.ablations.softmax_head}};
    j["seed"] = cfg.seed;
    j["theta"] = cfg.ablations.softmax_head ? kSoftmaxTheta : cfg.theta;
    ordered_json rs = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json jr;
        jr["name"] = r.name;
        for (const auto& [k, v] : r.values) jr[k] = v;
        rs.push_back(jr);
    }
    j["rows"] = rs;
    return j.dump(2) + "\n";
}

std::string report_table(const ExperimentConfig& cfg, const std::vector<MetricRow>& rows) {
    std::ostringstream s;
    s << "scenario " << to_string(cfg.scenario) << (cfg.open_set ? " (open set)" : " (closed set)") << "\n";
    if (rows.empty()) return s.str();
    s << std::left << std::setw(14) << "";
    for (const auto& [k, _] : rows.front().values) s << std::right << std::setw(9) << k;
    s << "\n";
    for (const auto& r : rows) {
        s << std::left << std::setw(14) << r.name;
        for (const auto& [_, v] : r.values) s << std::right << std::setw(9) << std::fixed << std::setprecision(4) << v;
        s << "\n";
    }
    return s.str();
}

void write_eval_outputs(const ExperimentConfig& cfg, const Evaluation& ev, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    const std::vector<MetricRow> rows{metric_row("clean", ev, cfg.open_set)};
    io::write_text_file(out_dir / "report.json", report_json(cfg, rows));
    io::write_text_file(out_dir / "report.txt", report_table(cfg, rows));
    FingerprintFile file;
    file.dim = ev.references.dim;
    file.records = ev.reference_records;
    file.records.insert(file.records.end(), ev.test_records.begin(), ev.test_records.end());
    save_fingerprints(file, out_dir / "fingerprints.atfp");
    save_reference_manifest(ev.reference_ids, out_dir / "references.txt");
}

AttributionResult attribute_image(TrainedModel& m, const ReferenceSet& refs, const std::filesystem::path& image,
                                  double theta, const SemanticExtractor& extractor) {
    Sample s;
    s.id = image.string();
    s.image = read_pgm(image);
    s.semantic = extractor.extract(s.image, s.id);
    std::vector<float> fp;
    std::vector<double> probs;
    run_model(m, {s}, 1, &fp, m.ablations.softmax_head ? &probs : nullptr);
    if (m.ablations.softmax_head) return softmax_decision(probs.data(), m.classes);
    return classify(fp, refs, theta);
}

}  // namespace attrib
