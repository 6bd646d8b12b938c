#include "attrib/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "attrib/error.hpp"
#include "attrib/parallel.hpp"
#include "attrib/rng.hpp"
#include "io_util.hpp"

namespace attrib {

using nlohmann::ordered_json;

namespace {

using Plane = std::vector<double>;

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Value noise on a lattice of non-integer spacing with a random phase.
Plane value_noise(std::size_t h, std::size_t w, double spacing, Rng& rng) {
    const std::size_t lh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / spacing)) + 2;
    const std::size_t lw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / spacing)) + 2;
    Plane lattice(lh * lw);
    double mean = 0.0;
    for (auto& v : lattice) mean += (v = rng.normal());
    mean /= static_cast<double>(lattice.size());
    for (auto& v : lattice) v -= mean;
    const double oy = rng.uniform(0.0, spacing), ox = rng.uniform(0.0, spacing);
    Plane out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        const double fy = (static_cast<double>(y) + oy) / spacing;
        const std::size_t iy = static_cast<std::size_t>(fy);
        const double ty = quintic(fy - static_cast<double>(iy));
        for (std::size_t x = 0; x < w; ++x) {
            const double fx = (static_cast<double>(x) + ox) / spacing;
            const std::size_t ix = static_cast<std::size_t>(fx);
            const double tx = quintic(fx - static_cast<double>(ix));
            const double a = lattice[iy * lw + ix], b = lattice[iy * lw + ix + 1];
            const double c = lattice[(iy + 1) * lw + ix], d = lattice[(iy + 1) * lw + ix + 1];
            out[y * w + x] = (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
        }
    }
    return out;
}

void standardize(Plane& p) {
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(p.size());
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(p.size()));
    for (auto& v : p) v = sd > 0 ? (v - mean) / sd : 0.0;
}

// Separable periodic correlation; taps are centered.
Plane conv_separable(const Plane& in, std::size_t h, std::size_t w, const std::vector<double>& kx,
                     const std::vector<double>& ky) {
    Plane tmp(h * w, 0.0), out(h * w, 0.0);
    const long rx = static_cast<long>(kx.size() / 2), ry = static_cast<long>(ky.size() / 2);
    const long H = static_cast<long>(h), W = static_cast<long>(w);
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double s = 0.0;
            for (long k = 0; k < static_cast<long>(kx.size()); ++k) s += kx[k] * in[y * W + ((x + k - rx) % W + W) % W];
            tmp[y * W + x] = s;
        }
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double s = 0.0;
            for (long k = 0; k < static_cast<long>(ky.size()); ++k) s += ky[k] * tmp[((y + k - ry) % H + H) % H * W + x];
            out[y * W + x] = s;
        }
    return out;
}

std::vector<double> gaussian_taps(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double s = 0.0;
    for (int i = -r; i <= r; ++i) s += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v /= s;
    return k;
}

// Zero insertion x2 followed by interpolation; taps are rescaled so a
// constant field keeps its value.
Plane upsample2(const Plane& in, std::size_t h, std::size_t w, const std::vector<double>& kx,
                const std::vector<double>& ky) {
    Plane z(4 * h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) z[(2 * y) * (2 * w) + 2 * x] = in[y * w + x];
    auto norm = [](std::vector<double> k) {
        double s = 0.0;
        for (double v : k) s += v;
        for (auto& v : k) v *= 2.0 / s;
        return k;
    };
    return conv_separable(z, 2 * h, 2 * w, norm(kx), norm(ky));
}

Plane base_texture(const CorpusSpec& spec, std::size_t index) {
    Rng rng(hash_seed(spec.seed, fnv1a("base"), index));
    const double s0 = rng.uniform(9.0, 17.0);
    Plane p(spec.height * spec.width, 0.0);
    const std::array<double, 3> scale{1.0, 2.3, 4.7}, gain{1.0, 0.45, 0.2};
    for (std::size_t o = 0; o < scale.size(); ++o) {
        Plane n = value_noise(spec.height, spec.width, s0 / scale[o], rng);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += gain[o] * n[i];
    }
    standardize(p);
    return p;
}

Plane real_signature(const CorpusSpec& spec, const ModelSpec& m, Rng& rng) {
    Plane p(spec.height * spec.width, 0.0);
    const std::array<double, 2> spacing{2.7, 1.6}, gain{1.0, 0.6};
    for (std::size_t o = 0; o < spacing.size(); ++o) {
        Plane n = value_noise(spec.height, spec.width, spacing[o] * rng.uniform(0.9, 1.1), rng);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += gain[o] * n[i];
    }
    standardize(p);
    const double rel = m.noise_sigma / std::max(m.amplitude, 1e-12);
    for (auto& v : p) v += rel * rng.normal();
    return p;
}

Plane gan_signature(const CorpusSpec& spec, const ModelSpec& m, Rng& rng) {
    std::size_t h = spec.height / 4, w = spec.width / 4;
    Plane p(h * w);
    for (auto& v : p) v = 1.0 + 0.6 * rng.normal();
    for (int stage = 0; stage < 2; ++stage) {
        p = upsample2(p, h, w, m.kernel_x, m.kernel_y);
        h *= 2;
        w *= 2;
    }
    standardize(p);
    return p;
}

Plane dm_signature(const CorpusSpec& spec, const ModelSpec& m, Rng& rng) {
    Plane p(spec.height * spec.width);
    for (auto& v : p) v = rng.normal();
    const auto kx = gaussian_taps(m.sigma_x), ky = gaussian_taps(m.sigma_y);
    for (int r = 0; r < m.rounds; ++r) {
        p = conv_separable(p, spec.height, spec.width, kx, ky);
        const Plane b = conv_separable(p, spec.height, spec.width, kx, ky);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += m.sharpen * (p[i] - b[i]);
    }
    standardize(p);
    return p;
}

ordered_json model_to_json(const ModelSpec& m) {
    ordered_json j{{"id", m.id}, {"family", std::string(to_string(m.family))}, {"seen", m.seen}, {"amplitude", m.amplitude}};
    switch (m.family) {
        case Family::Real: j["noise_sigma"] = m.noise_sigma; break;
        case Family::Gan:
            j["kernel_x"] = m.kernel_x;
            j["kernel_y"] = m.kernel_y;
            break;
        case Family::Dm:
            j["sigma_x"] = m.sigma_x;
            j["sigma_y"] = m.sigma_y;
            j["rounds"] = m.rounds;
            j["sharpen"] = m.sharpen;
            break;
    }
    return j;
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& dst) {
    if (j.contains(key)) dst = j.at(key).get<V>();
}

ModelSpec gan(std::string id, bool seen, std::vector<double> kx, std::vector<double> ky) {
    ModelSpec m;
    m.id = std::move(id);
    m.family = Family::Gan;
    m.seen = seen;
    m.kernel_x = std::move(kx);
    m.kernel_y = std::move(ky);
    return m;
}

ModelSpec dm(std::string id, bool seen, double sx, double sy, int rounds, double sharpen) {
    ModelSpec m;
    m.id = std::move(id);
    m.family = Family::Dm;
    m.seen = seen;
    m.sigma_x = sx;
    m.sigma_y = sy;
    m.rounds = rounds;
    m.sharpen = sharpen;
    return m;
}

}  // namespace

void ModelSpec::validate() const {
    if (id.empty()) throw ConfigError("model id must not be empty");
    if (id.find_first_of("/\\ \t\n") != std::string::npos)
        throw ConfigError("model id '" + id + "' contains whitespace or path separators");
    if (!(amplitude > 0.0)) throw ConfigError("model '" + id + "': amplitude must be positive");
    if (family == Family::Gan) {
        for (const auto* k : {&kernel_x, &kernel_y}) {
            if (k->empty() || k->size() % 2 == 0)
                throw ConfigError("model '" + id + "': interpolation kernels need an odd number of taps");
            double s = 0.0;
            for (double v : *k) s += v;
            if (!(std::abs(s) > 1e-9)) throw ConfigError("model '" + id + "': interpolation kernel sums to zero");
        }
    }
    if (family == Family::Dm && (!(sigma_x > 0.0) || !(sigma_y > 0.0) || rounds < 1))
        throw ConfigError("model '" + id + "': blur sigmas must be positive and rounds at least 1");
    if (family == Family::Real && noise_sigma < 0.0) throw ConfigError("model '" + id + "': noise_sigma < 0");
}

CorpusSpec CorpusSpec::default_spec() {
    CorpusSpec s;
    ModelSpec real;
    real.id = "real";
    real.family = Family::Real;
    s.models.push_back(real);
    s.models.push_back(gan("gan0", true, {0.45, 1.0, 0.45}, {0.45, 1.0, 0.45}));
    s.models.push_back(gan("gan1", true, {0.5, 1.0, 0.5}, {0.3, 1.0, 0.3}));
    s.models.push_back(gan("gan2", true, {0.3, 1.0, 0.3}, {0.5, 1.0, 0.5}));
    s.models.push_back(gan("gan3", true, {-0.1, 0.6, 1.0, 0.6, -0.1}, {-0.1, 0.6, 1.0, 0.6, -0.1}));
    s.models.push_back(gan("gan4", false, {0.4, 1.0, 0.4}, {0.4, 1.0, 0.4}));
    s.models.push_back(gan("gan5", false, {0.1, 0.4, 1.0, 0.4, 0.1}, {0.1, 0.4, 1.0, 0.4, 0.1}));
    s.models.push_back(dm("dm0", true, 0.8, 0.8, 1, 0.5));
    s.models.push_back(dm("dm1", true, 1.2, 0.5, 2, 0.8));
    s.models.push_back(dm("dm2", true, 0.5, 1.2, 2, 0.8));
    s.models.push_back(dm("dm3", true, 1.0, 1.0, 3, 1.5));
    s.models.push_back(dm("dm4", false, 0.7, 0.7, 2, 1.0));
    s.models.push_back(dm("dm5", false, 1.5, 0.9, 1, 0.3));
    return s;
}

const ModelSpec& CorpusSpec::model(const std::string& id) const {
    for (const auto& m : models)
        if (m.id == id) return m;
    throw LookupError("corpus has no model '" + id + "'");
}

void CorpusSpec::validate() const {
    if (channels != 1) throw ConfigError("only single-channel corpora are supported (PGM output)");
    if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0)
        throw ConfigError("image size must be a positive multiple of 8");
    if (train == 0 || reference == 0 || test == 0) throw ConfigError("split counts must be at least 1");
    if (reference > train) throw ConfigError("reference count exceeds train count");
    if (!(blend > 0.0 && blend <= 1.0)) throw ConfigError("blend must lie in (0, 1]");
    std::size_t seen_gan = 0, seen_dm = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
        models[i].validate();
        for (std::size_t j = 0; j < i; ++j)
            if (models[j].id == models[i].id) throw ConfigError("duplicate model id '" + models[i].id + "'");
        if (models[i].seen && models[i].family == Family::Gan) ++seen_gan;
        if (models[i].seen && models[i].family == Family::Dm) ++seen_dm;
    }
    if (seen_gan < 2 || seen_dm < 2) throw ConfigError("each generated family needs at least 2 seen models");
}

std::string corpus_spec_to_json(const CorpusSpec& s) {
    ordered_json j{{"height", s.height}, {"width", s.width}, {"channels", s.channels}, {"train", s.train},
                   {"reference", s.reference}, {"test", s.test}, {"seed", s.seed}, {"blend", s.blend}};
    ordered_json models = ordered_json::array();
    for (const auto& m : s.models) models.push_back(model_to_json(m));
    j["models"] = models;
    return j.dump(2) + "\n";
}

CorpusSpec corpus_spec_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("corpus spec: ") + e.what());
    }
    CorpusSpec s;
    try {
        read_opt(j, "height", s.height);
        read_opt(j, "width", s.width);
        read_opt(j, "channels", s.channels);
        read_opt(j, "train", s.train);
        read_opt(j, "reference", s.reference);
        read_opt(j, "test", s.test);
        read_opt(j, "seed", s.seed);
        read_opt(j, "blend", s.blend);
        if (j.contains("models")) {
            for (const auto& jm : j.at("models")) {
                ModelSpec m;
                m.id = jm.at("id").get<std::string>();
                m.family = family_from_string(jm.at("family").get<std::string>());
                read_opt(jm, "seen", m.seen);
                read_opt(jm, "amplitude", m.amplitude);
                read_opt(jm, "noise_sigma", m.noise_sigma);
                read_opt(jm, "kernel_x", m.kernel_x);
                read_opt(jm, "kernel_y", m.kernel_y);
                read_opt(jm, "sigma_x", m.sigma_x);
                read_opt(jm, "sigma_y", m.sigma_y);
                read_opt(jm, "rounds", m.rounds);
                read_opt(jm, "sharpen", m.sharpen);
                s.models.push_back(std::move(m));
            }
        } else {
            s.models = CorpusSpec::default_spec().models;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corpus spec: ") + e.what());
    }
    s.validate();
    return s;
}

CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
    return corpus_spec_from_json(io::read_text_file(path));
}

Image generate_image(const CorpusSpec& spec, const ModelSpec& model, std::size_t index) {
    const Plane base = base_texture(spec, index);
    Rng rng(hash_seed(spec.seed, fnv1a(model.id), index));
    Plane sig;
    switch (model.family) {
        case Family::Real: sig = real_signature(spec, model, rng); break;
        case Family::Gan: sig = gan_signature(spec, model, rng); break;
        case Family::Dm: sig = dm_signature(spec, model, rng); break;
    }
    Image img(1, spec.height, spec.width);
    const double base_amp = 0.2;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = 0.5 + (1.0 - spec.blend) * base_amp * base[i] + spec.blend * model.amplitude * sig[i];
        img.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return img;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Reference: return "reference";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "reference") return Split::Reference;
    if (s == "test") return Split::Test;
    throw ParseError("unknown split '" + std::string(s) + "'");
}

std::vector<std::size_t> reference_indices(const CorpusSpec& spec, const std::string& model_id) {
    std::vector<std::size_t> idx(spec.train);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(hash_seed(spec.seed, fnv1a(model_id), fnv1a("reference")));
    rng.shuffle(idx);
    idx.resize(spec.reference);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<ManifestEntry> build_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
    spec.validate();
    struct Job {
        const ModelSpec* model;
        std::size_t index;
        std::string rel;
    };
    std::vector<Job> jobs;
    std::vector<ManifestEntry> manifest;
    auto path_of = [](const ModelSpec& m, std::size_t i) { return "images/" + m.id + "/" + std::to_string(i) + ".pgm"; };
    for (const auto& m : spec.models) {
        std::error_code ec;
        std::filesystem::create_directories(dir / "images" / m.id, ec);
        if (ec) throw IoError("cannot create " + (dir / "images" / m.id).string() + ": " + ec.message());
        if (m.seen) {
            for (std::size_t i = 0; i < spec.train; ++i) {
                jobs.push_back({&m, i, path_of(m, i)});
                manifest.push_back({path_of(m, i), m.id, m.family, Split::Train});
            }
            for (std::size_t i : reference_indices(spec, m.id))
                manifest.push_back({path_of(m, i), m.id, m.family, Split::Reference});
        }
        for (std::size_t t = 0; t < spec.test; ++t) {
            const std::size_t i = spec.train + t;
            jobs.push_back({&m, i, path_of(m, i)});
            manifest.push_back({path_of(m, i), m.id, m.family, Split::Test});
        }
    }
    parallel_for(jobs.size(), [&](std::size_t k) {
        const Job& job = jobs[k];
        write_pgm(generate_image(spec, *job.model, job.index), dir / job.rel);
    });
    io::write_text_file(dir / "manifest.jsonl", manifest_to_jsonl(manifest));
    io::write_text_file(dir / "spec.json", corpus_spec_to_json(spec));
    return manifest;
}

std::string manifest_to_jsonl(const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        ordered_json j{{"path", e.path}, {"model", e.model}, {"family", std::string(to_string(e.family))},
                       {"split", std::string(to_string(e.split))}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::istringstream in(io::read_text_file(path));
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.path = j.at("path").get<std::string>();
            e.model = j.at("model").get<std::string>();
            e.family = family_from_string(j.at("family").get<std::string>());
            e.split = split_from_string(j.at("split").get<std::string>());
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return out;
}

namespace {

constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55,  64,
    81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, 64> dct_basis() {
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x)
            c[u * 8 + x] = (u == 0 ? std::sqrt(0.125) : 0.5) * std::cos((2 * x + 1) * u * M_PI / 16.0);
    return c;
}

}  // namespace

Image perturb_jpeg(const Image& img, int quality) {
    if (quality < 1 || quality > 100) throw UsageError("JPEG quality must lie in [1, 100], got " + std::to_string(quality));
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<double, 64> q{};
    for (int i = 0; i < 64; ++i)
        q[i] = std::clamp(static_cast<int>(std::lround((kLumaTable[i] * scale) / 100.0)), 1, 255);
    static const std::array<double, 64> C = dct_basis();

    Image out = img;
    const std::size_t H = img.height, W = img.width;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t by = 0; by < H; by += 8)
            for (std::size_t bx = 0; bx < W; bx += 8) {
                double blk[64], tmp[64], coef[64];
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t x = 0; x < 8; ++x) {
                        const std::size_t sy = std::min(by + y, H - 1), sx = std::min(bx + x, W - 1);
                        const double byte = std::round(std::clamp(img.at(c, sy, sx), 0.0f, 1.0f) * 255.0);
                        blk[y * 8 + x] = byte - 128.0;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int x = 0; x < 8; ++x) {
                        double s = 0;
                        for (int y = 0; y < 8; ++y) s += C[u * 8 + y] * blk[y * 8 + x];
                        tmp[u * 8 + x] = s;
                    }
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0;
                        for (int x = 0; x < 8; ++x) s += C[v * 8 + x] * tmp[u * 8 + x];
                        coef[u * 8 + v] = std::round(s / q[u * 8 + v]) * q[u * 8 + v];
                    }
                for (int y = 0; y < 8; ++y)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u) s += C[u * 8 + y] * coef[u * 8 + v];
                        tmp[y * 8 + v] = s;
                    }
                for (std::size_t y = 0; y < 8 && by + y < H; ++y)
                    for (std::size_t x = 0; x < 8 && bx + x < W; ++x) {
                        double s = 0;
                        for (int v = 0; v < 8; ++v) s += C[v * 8 + x] * tmp[y * 8 + v];
                        const double byte = std::clamp(std::round(s + 128.0), 0.0, 255.0);
                        out.at(c, by + y, bx + x) = static_cast<float>(byte / 255.0);
                    }
            }
    return out;
}

Image perturb_downsample(const Image& img, std::size_t factor, bool restore) {
    if (factor == 0) throw UsageError("downsample factor must be positive");
    if (img.height % factor != 0 || img.width % factor != 0)
        throw DimensionError("image size " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                             " is not divisible by " + std::to_string(factor));
    const std::size_t h = img.height / factor, w = img.width / factor;
    Image small(img.channels, h, w);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0;
                for (std::size_t dy = 0; dy < factor; ++dy)
                    for (std::size_t dx = 0; dx < factor; ++dx) s += img.at(c, y * factor + dy, x * factor + dx);
                small.at(c, y, x) = static_cast<float>(std::clamp(s * inv, 0.0, 1.0));
            }
    if (!restore) return small;

    Image out(img.channels, img.height, img.width);
    auto coord = [factor](std::size_t i, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
        const double f = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
        const double fc = std::clamp(f, 0.0, static_cast<double>(n - 1));
        i0 = static_cast<std::size_t>(std::floor(fc));
        i1 = std::min(i0 + 1, n - 1);
        t = fc - static_cast<double>(i0);
    };
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y) {
            std::size_t y0, y1;
            double ty;
            coord(y, h, y0, y1, ty);
            for (std::size_t x = 0; x < img.width; ++x) {
                std::size_t x0, x1;
                double tx;
                coord(x, w, x0, x1, tx);
                const double top = small.at(c, y0, x0) * (1 - tx) + small.at(c, y0, x1) * tx;
                const double bot = small.at(c, y1, x0) * (1 - tx) + small.at(c, y1, x1) * tx;
                out.at(c, y, x) = static_cast<float>(std::clamp(top * (1 - ty) + bot * ty, 0.0, 1.0));
            }
        }
    return out;
}

}  // namespace attrib
