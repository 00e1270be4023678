#pragma once

#include "dbay/error.hpp"
#include "dbay/dcop.hpp"
#include "dbay/pseudo_tree.hpp"
#include "dbay/gp.hpp"
#include "dbay/acquisition.hpp"
#include "dbay/bayes_opt.hpp"
#include "dbay/protocol.hpp"
#include "dbay/runtime.hpp"
#include "dbay/baselines.hpp"
#include "dbay/sensor.hpp"
#include "dbay/experiment.hpp"
#include "dbay/problem_io.hpp"
#include "dbay/verify.hpp"
