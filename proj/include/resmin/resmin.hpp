#pragma once

#include "resmin/closedform.hpp"
#include "resmin/dp45.hpp"
#include "resmin/errors.hpp"
#include "resmin/lambert_w.hpp"
#include "resmin/lm.hpp"
#include "resmin/minres.hpp"
#include "resmin/problems.hpp"
#include "resmin/residual.hpp"
#include "resmin/skeleton.hpp"
