#pragma once

#include "numerics.hpp"
#include "gauss_poly.hpp"
#include "kernel.hpp"
#include "density.hpp"
#include "bandwidth.hpp"
#include "kde.hpp"
#include "edgeworth.hpp"
#include "context_cache.hpp"
#include "coverage.hpp"
