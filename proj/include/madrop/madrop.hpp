#pragma once

#include "madrop/bounds.hpp"
#include "madrop/core.hpp"
#include "madrop/errors.hpp"
#include "madrop/experiments.hpp"
#include "madrop/io.hpp"
#include "madrop/parallel.hpp"
#include "madrop/policy_is.hpp"
#include "madrop/random_system.hpp"
#include "madrop/rng.hpp"
#include "madrop/simulate.hpp"
#include "madrop/solve.hpp"
