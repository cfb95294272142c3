#pragma once

#include "config.hpp"

namespace doem::cli {

void gen_bernoulli(json cfg);
void gen_mnist(json cfg);
void train_doem(json cfg);
void train_cd(json cfg);
void eval(json cfg);
void sample(json cfg);

}  // namespace doem::cli
