#include <doctest.h>

#include <fstream>
#include <sstream>

#include "attrib/error.hpp"
#include "attrib/experiment.hpp"
#include "support.hpp"

using namespace attrib;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 16x16 corpus with a handful of images per model, built once.
const std::filesystem::path& tiny_corpus() {
    static testing::TempDir dir("exp_corpus");
    static const bool built = [] {
        CorpusSpec s = CorpusSpec::default_spec();
        s.height = s.width = 16;
        s.train = 6;
        s.reference = 3;
        s.test = 4;
        build_corpus(s, dir.path());
        return true;
    }();
    (void)built;
    return dir.path();
}

ExperimentConfig tiny_config(Scenario s) {
    ExperimentConfig c;
    c.scenario = s;
    c.corpus = tiny_corpus().string();
    c.epochs = 2;
    c.batch_size = 8;
    c.fingerprint_dim = 8;
    c.hidden_dim = 16;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("scenario names") {
    CHECK(scenario_from_string("REAL/GAN/DM") == Scenario::RealGanDm);
    CHECK(scenario_from_string("gan_dm") == Scenario::GanDm);
    CHECK(to_string(Scenario::DmOnly) == "dm_only");
    CHECK_THROWS_AS(scenario_from_string("gan_real"), ConfigError);
    CHECK(scenario_includes(Scenario::RealGan, Family::Real));
    CHECK_FALSE(scenario_includes(Scenario::RealGan, Family::Dm));
}

TEST_CASE("config text parsing") {
    const auto c = parse_experiment_config(
        "# comment\nscenario = gan_dm\nopen_set = true   # trailing\n\nm1 = 4\nm2=9\nepochs = 3\nmhf_off = yes\n");
    CHECK(c.scenario == Scenario::GanDm);
    CHECK(c.open_set);
    CHECK(c.dmc.m1 == 4.0);
    CHECK(c.dmc.m2 == 9.0);
    CHECK(c.epochs == 3);
    CHECK(c.ablations.mhf_off);
    CHECK(parse_experiment_config(experiment_config_to_text(c)) == c);

    CHECK_THROWS_AS(parse_experiment_config("colour = red\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("epochs = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("epochs\n"), ParseError);
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/x.cfg"), IoError);

    ExperimentConfig d;
    set_config_value(d, "theta", "2.25");
    CHECK(d.theta == 2.25);
    CHECK_THROWS_AS(set_config_value(d, "open_set", "maybe"), ConfigError);
}

TEST_CASE("scenario class counts on the default roster") {
    const Corpus& corpus = [] {
        static Corpus c = open_corpus(tiny_corpus());
        return std::cref(c);
    }();
    CHECK(scenario_classes(corpus, Scenario::RealGanDm).size() == 9);
    CHECK(scenario_classes(corpus, Scenario::RealGan).size() == 5);
    CHECK(scenario_classes(corpus, Scenario::RealDm).size() == 5);
    CHECK(scenario_classes(corpus, Scenario::GanDm).size() == 8);
    CHECK(scenario_classes(corpus, Scenario::GanOnly).size() == 4);
    CHECK(scenario_classes(corpus, Scenario::DmOnly).size() == 4);
    CHECK(scenario_unseen_models(corpus, Scenario::RealGanDm).size() == 4);
    CHECK(scenario_unseen_models(corpus, Scenario::GanOnly).size() == 2);

    const auto cls = scenario_classes(corpus, Scenario::GanDm);
    CHECK(cls.front().id == "dm0");
    CHECK(cls.back().id == "gan3");

    Corpus gan_only = corpus;
    std::erase_if(gan_only.entries, [](const ManifestEntry& e) { return e.family == Family::Dm; });
    CHECK_THROWS_AS(scenario_classes(gan_only, Scenario::GanDm), ConfigError);
    CHECK_NOTHROW(scenario_classes(gan_only, Scenario::RealGan));
}

TEST_CASE("training is deterministic and the checkpoint round-trips") {
    const ExperimentConfig cfg = tiny_config(Scenario::GanDm);
    testing::TempDir dir("exp_train");
    TrainedModel a = train(cfg), b = train(cfg);
    REQUIRE(a.epoch_loss.size() == 2);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.classes.size() == 8);
    save_trained(a, dir / "a.ckpt");
    save_trained(b, dir / "b.ckpt");
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
    CHECK(slurp(dir / "a.ckpt.json") == slurp(dir / "b.ckpt.json"));

    TrainedModel back = load_trained(dir / "a.ckpt");
    CHECK(back.classes == a.classes);
    CHECK(back.epoch_loss == a.epoch_loss);
    save_trained(back, dir / "c.ckpt");
    CHECK(slurp(dir / "c.ckpt") == slurp(dir / "a.ckpt"));

    ExperimentConfig other = cfg;
    other.seed = 6;
    CHECK(train(other).epoch_loss != a.epoch_loss);

    std::ofstream(dir / "x.ckpt.json") << "{\"format\": \"something-else\"}";
    std::ofstream(dir / "x.ckpt") << "ATRF";
    CHECK_THROWS_AS(load_trained(dir / "x.ckpt"), FormatError);
    CHECK_THROWS_AS(load_trained(dir / "missing.ckpt"), IoError);
}

TEST_CASE("evaluation, reports and attribution") {
    ExperimentConfig cfg = tiny_config(Scenario::RealGanDm);
    cfg.open_set = true;
    TrainedModel m = train(cfg);
    const Evaluation ev = evaluate(cfg, m);
    CHECK(ev.seen.size() == 9 * 4);
    CHECK(ev.unseen.size() == 4 * 4);
    CHECK(ev.reference_ids.size() == 9 * 3);
    CHECK(ev.references.classes.size() == 9);
    CHECK(ev.test_records.size() == ev.seen.size() + ev.unseen.size());

    const MetricRow open = metric_row("clean", ev, true);
    REQUIRE(open.values.size() == 5);
    CHECK(open.values[0].first == "AUC");
    CHECK(open.values[4].first == "Acc_u");
    for (const auto& [k, v] : open.values) CHECK_MESSAGE(std::isfinite(v), k);
    const MetricRow closed = metric_row("clean", ev, false);
    REQUIRE(closed.values.size() == 1);
    CHECK(closed.values[0].first == "Acc");

    testing::TempDir dir("exp_eval");
    write_eval_outputs(cfg, ev, dir.path());
    const auto fps = load_fingerprints(dir / "fingerprints.atfp");
    CHECK(fps.records.size() == ev.reference_records.size() + ev.test_records.size());
    const auto refs = reference_set_from_records(fps, load_reference_manifest(dir / "references.txt"));
    CHECK(refs.classes.size() == 9);
    CHECK(slurp(dir / "report.txt").find("AUC") != std::string::npos);

    // Single-image attribution agrees with the batch evaluation.
    const auto& rec = ev.test_records.front();
    const AttributionResult r = attribute_image(m, refs, tiny_corpus() / rec.id, cfg.theta, SemanticExtractor::builtin());
    CHECK(r.label() == ev.seen.front().prediction.label());
    CHECK(r.d_min == doctest::Approx(ev.seen.front().prediction.d_min).epsilon(1e-5));

    ExperimentConfig wrong = cfg;
    wrong.scenario = Scenario::GanDm;
    CHECK_THROWS_AS(evaluate(wrong, m), ConfigError);
}

TEST_CASE("perturbed evaluation keeps clean references") {
    ExperimentConfig cfg = tiny_config(Scenario::GanDm);
    TrainedModel m = train(cfg);
    const Corpus corpus = open_corpus(cfg.corpus);
    const EvalData data = load_eval_data(cfg, corpus, scenario_classes(corpus, cfg.scenario), SemanticExtractor::builtin());
    const Evaluation clean = evaluate(cfg, m, data);
    for (Perturbation p : {Perturbation::Jpeg95, Perturbation::Downsample4}) {
        const Evaluation pe = evaluate(cfg, m, data, p);
        CHECK(pe.reference_records == clean.reference_records);
        CHECK_FALSE(pe.test_records == clean.test_records);
        CHECK(pe.seen.size() == clean.seen.size());
    }
    CHECK(to_string(Perturbation::Downsample4) == "downsample4");
}

TEST_CASE("ablation variants train and evaluate") {
    for (int variant = 0; variant < 4; ++variant) {
        ExperimentConfig cfg = tiny_config(variant == 3 ? Scenario::GanOnly : Scenario::GanDm);
        cfg.epochs = 1;
        cfg.open_set = true;
        if (variant == 0) cfg.ablations.defl_off = true;
        if (variant == 1) cfg.ablations.single_margin = true;
        if (variant == 2) cfg.ablations.softmax_head = true;
        TrainedModel m = train(cfg);
        const Evaluation ev = evaluate(cfg, m);
        CHECK(metric_row("clean", ev, true).values.size() == 5);
        if (variant == 2) {
            for (const auto& r : ev.seen) CHECK(r.prediction.theta == kSoftmaxTheta);
            CHECK(m.model.config().classifier_classes == 8);
        }
        if (variant == 3) {
            for (const auto& r : ev.unseen) CHECK(r.prediction.decision != Decision::UnseenDm);
        }
        testing::TempDir dir("exp_ablate");
        save_trained(m, dir / "m.ckpt");
        CHECK(load_trained(dir / "m.ckpt").ablations == cfg.ablations);
    }
}

TEST_CASE("training configuration errors") {
    ExperimentConfig cfg = tiny_config(Scenario::GanDm);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = tiny_config(Scenario::GanDm);
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = tiny_config(Scenario::GanDm);
    cfg.dmc = {10, 5};
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = tiny_config(Scenario::GanDm);
    cfg.semantic = SemanticKind::ExternalEmbeddings;
    CHECK_THROWS_AS(train(cfg), ConfigError);
    cfg = tiny_config(Scenario::GanDm);
    cfg.corpus = "/nonexistent/corpus";
    CHECK_THROWS_AS(train(cfg), IoError);
}
