#pragma once

// Exponential ensembles of pure quantum states: partition functions via
// divided differences of the exponential, temperature-matrix fits, Monte
// Carlo verification, and scalar-constrained (conditional) ensembles.

#include "lazyq/conditional.hpp"
#include "lazyq/errors.hpp"
#include "lazyq/inverse.hpp"
#include "lazyq/io.hpp"
#include "lazyq/partition.hpp"
#include "lazyq/qubit.hpp"
#include "lazyq/sampler.hpp"
#include "lazyq/spectra.hpp"
