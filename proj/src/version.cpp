#include "doem/version.hpp"

#ifndef DOEM_CODE_VERSION
#define DOEM_CODE_VERSION "unversioned"
#endif

namespace doem {

std::string code_version() { return DOEM_CODE_VERSION; }

}  // namespace doem
