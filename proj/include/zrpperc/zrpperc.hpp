#pragma once

#include "zrpperc/config.hpp"
#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/fugacity.hpp"
#include "zrpperc/functions.hpp"
#include "zrpperc/harness.hpp"
#include "zrpperc/homogenization.hpp"
#include "zrpperc/kmc.hpp"
#include "zrpperc/lattice.hpp"
#include "zrpperc/observables.hpp"
#include "zrpperc/particles.hpp"
#include "zrpperc/pde.hpp"
#include "zrpperc/rate_function.hpp"
#include "zrpperc/report.hpp"
#include "zrpperc/rng.hpp"
