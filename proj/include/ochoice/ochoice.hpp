#pragma once

// Umbrella header for the ordered-choice estimation toolkit.

#include "ochoice/common.hpp"
#include "ochoice/dataset.hpp"
#include "ochoice/econ.hpp"
#include "ochoice/evaluation.hpp"
#include "ochoice/jenks.hpp"
#include "ochoice/model.hpp"
#include "ochoice/ordered_logit.hpp"
#include "ochoice/report.hpp"
#include "ochoice/reslogit.hpp"
#include "ochoice/serialize.hpp"
#include "ochoice/synth.hpp"
