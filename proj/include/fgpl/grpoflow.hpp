#pragma once

#include "fgpl/grpoflow/grpo.hpp"
#include "fgpl/grpoflow/rlhf.hpp"
