#pragma once

#include "fgpl/diffcore/adam.hpp"
#include "fgpl/diffcore/ops.hpp"
#include "fgpl/diffcore/rng.hpp"
#include "fgpl/diffcore/tape.hpp"
#include "fgpl/diffcore/tensor.hpp"
