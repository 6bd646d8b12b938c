#include "attrib/checkpoint.hpp"

#include <fstream>
#include <set>

#include "attrib/error.hpp"
#include "io_util.hpp"

namespace attrib::tg {

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write("ATRF", 4);
    io::put_le<std::uint32_t>(out, kCheckpointVersion);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        io::put_string(out, e.name);
        io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (float v : e.tensor.data()) io::put_f32(out, v);
    }
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    io::expect_magic(in, "ATRF", "checkpoint " + path.string());
    const auto version = io::get_le<std::uint32_t>(in, "checkpoint version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported");
    const auto count = io::get_le<std::uint32_t>(in, "checkpoint entry count");
    std::vector<NamedTensor> entries;
    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        e.name = io::get_string(in, "parameter name");
        if (!names.insert(e.name).second) throw FormatError("checkpoint repeats parameter '" + e.name + "'");
        const auto rank = io::get_le<std::uint32_t>(in, "rank");
        if (rank > 8) throw FormatError("parameter '" + e.name + "' has implausible rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = io::get_le<std::uint32_t>(in, "extent");
        const std::size_t n = shape_numel(shape);
        if (n > (std::size_t{1} << 30)) throw FormatError("parameter '" + e.name + "' is implausibly large");
        std::vector<float> data(n);
        for (auto& v : data) v = io::get_f32(in, "parameter data");
        e.tensor = Tensor<float>(std::move(shape), std::move(data));
        entries.push_back(std::move(e));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint entries");
    return entries;
}

}  // namespace attrib::tg
