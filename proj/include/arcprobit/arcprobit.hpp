#pragma once

#include "errors.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "data.hpp"
#include "probit_glm.hpp"
#include "quadrature.hpp"
#include "arc.hpp"
#include "simulate.hpp"
#include "inference.hpp"
#include "baselines.hpp"
#include "bench.hpp"
