#pragma once

#include "vwmdvi/errors.hpp"
#include "vwmdvi/harness.hpp"
#include "vwmdvi/io.hpp"
#include "vwmdvi/linear_mdp.hpp"
#include "vwmdvi/mdvi.hpp"
#include "vwmdvi/optimal_design.hpp"
#include "vwmdvi/rng.hpp"
#include "vwmdvi/types.hpp"
