#pragma once

#include "mfo/common.hpp"
#include "mfo/timefun.hpp"
#include "mfo/ocf.hpp"
#include "mfo/kernel.hpp"
#include "mfo/modop.hpp"
#include "mfo/observer.hpp"
#include "mfo/sampled.hpp"
#include "mfo/sim.hpp"
#include "mfo/systems.hpp"
