#pragma once

#include <string>

namespace doem {

// Revision of the source tree this binary was built from.
std::string code_version();

}  // namespace doem
