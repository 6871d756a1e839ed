#pragma once

// Core library: everything except the command-line front end.
#include "sdid/covariates.hpp"
#include "sdid/csv.hpp"
#include "sdid/error.hpp"
#include "sdid/estimator.hpp"
#include "sdid/eventstudy.hpp"
#include "sdid/inference.hpp"
#include "sdid/method.hpp"
#include "sdid/panel.hpp"
#include "sdid/random.hpp"
#include "sdid/weights.hpp"
