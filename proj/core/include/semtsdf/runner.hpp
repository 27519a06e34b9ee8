#pragma once

#include "semtsdf/config.hpp"
#include "semtsdf/io.hpp"

#include <iosfwd>

namespace semtsdf {

// Executes one run described by the config: resolves defaults, creates the
// output directory, writes the mode's artifacts and prints one summary line
// per phase. Throws ConfigError / Error subclasses on failure.
void run(RunConfig cfg, std::ostream& log);

}  // namespace semtsdf
