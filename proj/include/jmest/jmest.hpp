#pragma once

// Library umbrella. The command-line layer (jmest/cli.hpp) is separate
// because it needs OpenSSL and CLI11.

#include "jmest/compat.hpp"
#include "jmest/conic.hpp"
#include "jmest/errors.hpp"
#include "jmest/estimate.hpp"
#include "jmest/linalg.hpp"
#include "jmest/model.hpp"
#include "jmest/optimize.hpp"
#include "jmest/pauli.hpp"
#include "jmest/shadows.hpp"
#include "jmest/simcore.hpp"
#include "jmest/variance.hpp"
