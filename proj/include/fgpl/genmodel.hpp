#pragma once

#include "fgpl/genmodel/flow_net.hpp"
#include "fgpl/genmodel/prompts.hpp"
#include "fgpl/genmodel/training.hpp"
