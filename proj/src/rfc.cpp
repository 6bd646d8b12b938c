#include "attrib/rfc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attrib/error.hpp"
#include "io_util.hpp"

namespace attrib {

namespace {

constexpr std::uint32_t kFingerprintVersion = 1;

double distance(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        s += d * d;
    }
    return std::sqrt(s);
}

double distance(std::span<const float> a, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - c[k];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<double> family_center(const std::vector<ReferenceClass>& classes, Family fam, std::size_t dim) {
    std::vector<double> c(dim, 0.0);
    std::size_t n = 0;
    for (const auto& cls : classes) {
        if (cls.family != fam) continue;
        for (const auto& f : cls.fingerprints) {
            for (std::size_t k = 0; k < dim; ++k) c[k] += f[k];
            ++n;
        }
    }
    if (n == 0) return {};
    for (auto& v : c) v /= static_cast<double>(n);
    return c;
}

}  // namespace

ReferenceSet build_reference_set(std::vector<ReferenceClass> classes, bool allow_single_family) {
    if (classes.empty()) throw ConfigError("reference set has no classes");
    std::sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    ReferenceSet refs;
    refs.dim = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const auto& cls = classes[i];
        if (i > 0 && classes[i - 1].id == cls.id) throw ConfigError("duplicate reference class '" + cls.id + "'");
        if (cls.fingerprints.empty()) throw ConfigError("reference class '" + cls.id + "' is empty");
        for (const auto& f : cls.fingerprints) {
            if (refs.dim == 0) refs.dim = f.size();
            if (f.size() != refs.dim || f.empty())
                throw DimensionError("reference class '" + cls.id + "' has a fingerprint of dimension " +
                                     std::to_string(f.size()) + ", expected " + std::to_string(refs.dim));
        }
    }
    refs.gan_center = family_center(classes, Family::Gan, refs.dim);
    refs.dm_center = family_center(classes, Family::Dm, refs.dim);
    const bool gan = !refs.gan_center.empty(), dm = !refs.dm_center.empty();
    if (!gan && !dm) throw ConfigError("reference set has neither a GAN nor a DM class");
    if (!allow_single_family && !(gan && dm))
        throw ConfigError(std::string("reference set has no ") + (gan ? "DM" : "GAN") +
                          " class, so its family center is undefined");
    refs.classes = std::move(classes);
    return refs;
}

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::Seen: return "seen";
        case Decision::UnseenGan: return "unseen-gan";
        case Decision::UnseenDm: return "unseen-dm";
    }
    return "?";
}

std::string AttributionResult::label() const { return seen() ? class_id : std::string(to_string(decision)); }

AttributionResult classify(std::span<const float> f, const ReferenceSet& refs, double theta) {
    if (f.size() != refs.dim)
        throw DimensionError("fingerprint has dimension " + std::to_string(f.size()) + ", references have " +
                             std::to_string(refs.dim));
    AttributionResult r;
    r.theta = theta;
    r.distances.reserve(refs.classes.size());
    for (const auto& cls : refs.classes) {
        double s = 0.0;
        for (const auto& ref : cls.fingerprints) s += distance(f, ref);
        r.distances.push_back(s / static_cast<double>(cls.fingerprints.size()));
    }
    r.class_index = 0;
    for (std::size_t n = 1; n < r.distances.size(); ++n)
        if (r.distances[n] < r.distances[r.class_index]) r.class_index = n;
    r.d_min = r.distances[r.class_index];
    r.class_id = refs.classes[r.class_index].id;
    if (r.d_min <= theta) {
        r.decision = Decision::Seen;
    } else if (refs.gan_center.empty()) {
        r.decision = Decision::UnseenDm;
    } else if (refs.dm_center.empty()) {
        r.decision = Decision::UnseenGan;
    } else {
        r.decision = distance(f, refs.gan_center) < distance(f, refs.dm_center) ? Decision::UnseenGan
                                                                                 : Decision::UnseenDm;
    }
    return r;
}

std::vector<AttributionResult> classify_batch(std::span<const float> fingerprints, const ReferenceSet& refs,
                                              double theta) {
    if (refs.dim == 0 || fingerprints.size() % refs.dim != 0)
        throw DimensionError("fingerprint batch of " + std::to_string(fingerprints.size()) +
                             " values is not a multiple of dimension " + std::to_string(refs.dim));
    const std::size_t n = fingerprints.size() / refs.dim;
    std::vector<AttributionResult> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(classify(fingerprints.subspan(i * refs.dim, refs.dim), refs, theta));
    return out;
}

std::string attribution_to_json(const AttributionResult& r, const ReferenceSet& refs) {
    nlohmann::ordered_json j;
    j["decision"] = std::string(to_string(r.decision));
    j["label"] = r.label();
    j["nearest_class"] = r.class_id;
    j["d_min"] = r.d_min;
    j["theta"] = r.theta;
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (std::size_t n = 0; n < r.distances.size(); ++n) d[refs.classes[n].id] = r.distances[n];
    j["distances"] = d;
    return j.dump(2);
}

void save_fingerprints(const FingerprintFile& file, const std::filesystem::path& path) {
    std::ostringstream out;
    out.write("ATFP", 4);
    io::put_le<std::uint32_t>(out, kFingerprintVersion);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.dim));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.records.size()));
    for (const auto& r : file.records) {
        if (r.values.size() != file.dim)
            throw DimensionError("fingerprint '" + r.id + "' has dimension " + std::to_string(r.values.size()) +
                                 ", file dimension is " + std::to_string(file.dim));
        io::put_string(out, r.id);
        io::put_string(out, r.class_id);
        io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.family));
        for (float v : r.values) io::put_f32(out, v);
    }
    io::write_text_file(path, out.str());
}

FingerprintFile load_fingerprints(const std::filesystem::path& path) {
    std::istringstream in(io::read_text_file(path));
    const std::string what = path.string();
    io::expect_magic(in, "ATFP", what);
    const auto version = io::get_le<std::uint32_t>(in, "version");
    if (version != kFingerprintVersion)
        throw FormatError(what + ": unsupported fingerprint file version " + std::to_string(version));
    FingerprintFile file;
    file.dim = io::get_le<std::uint32_t>(in, "dimension");
    const auto count = io::get_le<std::uint32_t>(in, "record count");
    for (std::uint32_t i = 0; i < count; ++i) {
        FingerprintRecord r;
        r.id = io::get_string(in, "record id");
        r.class_id = io::get_string(in, "class id");
        const auto fam = io::get_le<std::uint8_t>(in, "family");
        if (fam > 2) throw FormatError(what + ": record '" + r.id + "' has unknown family tag " + std::to_string(fam));
        r.family = static_cast<Family>(fam);
        r.values.resize(file.dim);
        for (auto& v : r.values) v = io::get_f32(in, "fingerprint values");
        file.records.push_back(std::move(r));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes after last record");
    return file;
}

void save_reference_manifest(const std::vector<std::string>& ids, const std::filesystem::path& path) {
    std::string text;
    for (const auto& id : ids) text += id + "\n";
    io::write_text_file(path, text);
}

std::vector<std::string> load_reference_manifest(const std::filesystem::path& path) {
    std::istringstream in(io::read_text_file(path));
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

ReferenceSet reference_set_from_records(const FingerprintFile& file, const std::vector<std::string>& ids,
                                        bool allow_single_family) {
    std::map<std::string, const FingerprintRecord*> by_id;
    for (const auto& r : file.records) by_id[r.id] = &r;
    std::map<std::string, ReferenceClass> classes;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw LookupError("reference id '" + id + "' is not in the fingerprint file");
        const FingerprintRecord& r = *it->second;
        ReferenceClass& cls = classes[r.class_id];
        if (cls.fingerprints.empty()) {
            cls.id = r.class_id;
            cls.family = r.family;
        } else if (cls.family != r.family) {
            throw ValidationError("reference class '" + r.class_id + "' mixes families");
        }
        cls.fingerprints.push_back(r.values);
    }
    std::vector<ReferenceClass> list;
    for (auto& [_, cls] : classes) list.push_back(std::move(cls));
    return build_reference_set(std::move(list), allow_single_family);
}

}  // namespace attrib
