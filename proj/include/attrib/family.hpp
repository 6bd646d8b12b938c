#pragma once

#include <string_view>

namespace attrib {

enum class Family { Real = 0, Gan = 1, Dm = 2 };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

}  // namespace attrib
