#pragma once

#include "fgpl/rewards/components.hpp"
#include "fgpl/rewards/gsb.hpp"
#include "fgpl/rewards/reward_net.hpp"
