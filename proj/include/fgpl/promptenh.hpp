#pragma once

#include "fgpl/promptenh/policy.hpp"
#include "fgpl/promptenh/train.hpp"
#include "fgpl/promptenh/vocab.hpp"
