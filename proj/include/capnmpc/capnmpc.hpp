#pragma once

#include "config.hpp"
#include "controller.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "filter.hpp"
#include "numeric.hpp"
#include "smoother.hpp"
#include "vehicle.hpp"
#include "virtual_system.hpp"
