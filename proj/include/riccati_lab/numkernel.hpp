#pragma once

#include "riccati_lab/numkernel/lyapunov.hpp"
#include "riccati_lab/numkernel/quadrature.hpp"
#include "riccati_lab/numkernel/spectral.hpp"
#include "riccati_lab/numkernel/time_grid.hpp"
#include "riccati_lab/numkernel/weighted_norm.hpp"
