#pragma once

#include <qcollapse/collapse.hpp>
#include <qcollapse/core.hpp>
#include <qcollapse/densmat.hpp>
#include <qcollapse/error.hpp>
#include <qcollapse/localization.hpp>
#include <qcollapse/propagator.hpp>
#include <qcollapse/rng.hpp>
#include <qcollapse/scenarios.hpp>
