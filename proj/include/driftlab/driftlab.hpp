#pragma once

#include <driftlab/circlefit.hpp>
#include <driftlab/command.hpp>
#include <driftlab/config.hpp>
#include <driftlab/controller.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/frames.hpp>
#include <driftlab/harness.hpp>
#include <driftlab/logs.hpp>
#include <driftlab/metrics.hpp>
#include <driftlab/plant.hpp>
#include <driftlab/sensors.hpp>
