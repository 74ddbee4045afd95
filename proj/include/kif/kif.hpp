#pragma once

#include "kif/adaptive.hpp"
#include "kif/analytic_signal.hpp"
#include "kif/core.hpp"
#include "kif/covariance.hpp"
#include "kif/if_estimator.hpp"
#include "kif/kernel_design.hpp"
#include "kif/multitone.hpp"
#include "kif/signal_lab.hpp"
#include "kif/smoothing.hpp"
