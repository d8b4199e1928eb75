#pragma once

#include "closr/error.hpp"
#include "closr/data.hpp"
#include "closr/model.hpp"
#include "closr/losses.hpp"
#include "closr/optim.hpp"
#include "closr/inference.hpp"
#include "closr/metrics.hpp"
#include "closr/checkpoint.hpp"
#include "closr/config.hpp"
#include "closr/commands.hpp"
