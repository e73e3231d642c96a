#pragma once

#include "stablesketch/errors.hpp"
#include "stablesketch/rng.hpp"
#include "stablesketch/stable.hpp"
#include "stablesketch/selection.hpp"
#include "stablesketch/optimal_quantile.hpp"
#include "stablesketch/estimators.hpp"
#include "stablesketch/calibration.hpp"
#include "stablesketch/sketch.hpp"
#include "stablesketch/data_io.hpp"
#include "stablesketch/bounds.hpp"
#include "stablesketch/simlab.hpp"
