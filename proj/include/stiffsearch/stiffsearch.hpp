#pragma once

#include "stiffsearch/acquisition.hpp"
#include "stiffsearch/cem.hpp"
#include "stiffsearch/common.hpp"
#include "stiffsearch/config.hpp"
#include "stiffsearch/gp.hpp"
#include "stiffsearch/grid.hpp"
#include "stiffsearch/io.hpp"
#include "stiffsearch/kernel.hpp"
#include "stiffsearch/runner.hpp"
#include "stiffsearch/search.hpp"
#include "stiffsearch/sim.hpp"
#include "stiffsearch/trajectory.hpp"
#include "stiffsearch/version.hpp"
