#pragma once

#include "wag/bench.hpp"
#include "wag/db_io.hpp"
#include "wag/embeddings.hpp"
#include "wag/errors.hpp"
#include "wag/filter.hpp"
#include "wag/geo.hpp"
#include "wag/grid.hpp"
#include "wag/loss.hpp"
#include "wag/scenario_io.hpp"
#include "wag/sim.hpp"
#include "wag/toy_trainer.hpp"
