#pragma once

#include "fgpl/flowsde/gaussian_oracle.hpp"
#include "fgpl/flowsde/kernels.hpp"
#include "fgpl/flowsde/sampler.hpp"
#include "fgpl/flowsde/schedule.hpp"
