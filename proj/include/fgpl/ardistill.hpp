#pragma once

#include "fgpl/ardistill/distill.hpp"
#include "fgpl/ardistill/student.hpp"
