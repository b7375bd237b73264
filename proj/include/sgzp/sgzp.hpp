#pragma once

#include "sgzp/model.hpp"
#include "sgzp/ode.hpp"
#include "sgzp/optimizer.hpp"
#include "sgzp/pmp.hpp"
#include "sgzp/stochastic.hpp"
#include "sgzp/experiment.hpp"
