#pragma once

#include "geoconc/error.hpp"
#include "geoconc/rng.hpp"
#include "geoconc/parallel.hpp"
#include "geoconc/chain.hpp"
#include "geoconc/splitting.hpp"
#include "geoconc/absorbing.hpp"
#include "geoconc/coupling.hpp"
#include "geoconc/functionals.hpp"
#include "geoconc/bounds.hpp"
#include "geoconc/martingale.hpp"
#include "geoconc/experiments.hpp"
