#pragma once

#include "rte/bench.hpp"
#include "rte/errors.hpp"
#include "rte/estimator.hpp"
#include "rte/geometry.hpp"
#include "rte/io.hpp"
#include "rte/oracles.hpp"
#include "rte/path_check.hpp"
#include "rte/rng.hpp"
#include "rte/scenario.hpp"
