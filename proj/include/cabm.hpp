#pragma once

#include "cabm/errors.hpp"
#include "cabm/normal.hpp"
#include "cabm/family.hpp"
#include "cabm/network.hpp"
#include "cabm/linalg.hpp"
#include "cabm/model.hpp"
#include "cabm/estimator.hpp"
#include "cabm/inference.hpp"
#include "cabm/simulation.hpp"
#include "cabm/io.hpp"
#include "cabm/report.hpp"
