#pragma once

#include "cips/core/ensemble.hpp"
#include "cips/core/numerics.hpp"
#include "cips/dual_enkf.hpp"
#include "cips/fpf.hpp"
#include "cips/gain.hpp"
#include "cips/kalman.hpp"
#include "cips/linear_ensemble.hpp"
#include "cips/models.hpp"
#include "cips/sir.hpp"
#include "cips/static_transport.hpp"
