#pragma once

#include "mnarfuse/baselines.hpp"
#include "mnarfuse/basis.hpp"
#include "mnarfuse/csv.hpp"
#include "mnarfuse/data.hpp"
#include "mnarfuse/error.hpp"
#include "mnarfuse/fusion.hpp"
#include "mnarfuse/inference.hpp"
#include "mnarfuse/model1.hpp"
#include "mnarfuse/model2.hpp"
#include "mnarfuse/models.hpp"
#include "mnarfuse/numeric.hpp"
#include "mnarfuse/oracle.hpp"
#include "mnarfuse/report.hpp"
#include "mnarfuse/rng.hpp"
#include "mnarfuse/simulation.hpp"
#include "mnarfuse/solver.hpp"
