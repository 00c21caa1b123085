#pragma once

// Umbrella header.

#include "gskan/bench.hpp"
#include "gskan/cli.hpp"
#include "gskan/config.hpp"
#include "gskan/data.hpp"
#include "gskan/layers.hpp"
#include "gskan/matrix.hpp"
#include "gskan/network.hpp"
#include "gskan/optim.hpp"
#include "gskan/rng.hpp"
#include "gskan/spline.hpp"
