#pragma once

#include "microfuzz/targets.hpp"

namespace microfuzz {

// Registers the type descriptors and all corpus/* and bench/* targets.
// corpus/* targets are the fuzzing surface; bench/* targets exist for
// harness calibration and fault-injection tests and are excluded from
// campaigns by the default glob filters.
void register_corpus(TargetRegistry& reg);

}  // namespace microfuzz
