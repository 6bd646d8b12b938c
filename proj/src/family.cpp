#include "attrib/family.hpp"

#include <string>

#include "attrib/error.hpp"

namespace attrib {

std::string_view to_string(Family f) {
    switch (f) {
        case Family::Real: return "real";
        case Family::Gan: return "gan";
        case Family::Dm: return "dm";
    }
    return "?";
}

Family family_from_string(std::string_view s) {
    if (s == "real" || s == "REAL") return Family::Real;
    if (s == "gan" || s == "GAN") return Family::Gan;
    if (s == "dm" || s == "DM") return Family::Dm;
    throw ParseError("unknown family '" + std::string(s) + "' (expected real, gan or dm)");
}

}  // namespace attrib
