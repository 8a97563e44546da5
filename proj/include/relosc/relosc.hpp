#pragma once

#include "relosc/error.hpp"
#include "relosc/expr.hpp"
#include "relosc/dynamics.hpp"
#include "relosc/parallel.hpp"
#include "relosc/barrier.hpp"
#include "relosc/segment.hpp"
#include "relosc/integrate.hpp"
#include "relosc/poincare.hpp"
#include "relosc/scenarios.hpp"
#include "relosc/io.hpp"
