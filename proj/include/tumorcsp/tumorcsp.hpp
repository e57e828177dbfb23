#pragma once

#define TUMORCSP_VERSION "0.1.0"

#include "tumorcsp/errors.hpp"
#include "tumorcsp/params.hpp"
#include "tumorcsp/kinetics.hpp"
#include "tumorcsp/parallel.hpp"
#include "tumorcsp/equilibria.hpp"
#include "tumorcsp/integrator.hpp"
#include "tumorcsp/csp.hpp"
#include "tumorcsp/reduction.hpp"
#include "tumorcsp/harness.hpp"
#include "tumorcsp/io.hpp"
