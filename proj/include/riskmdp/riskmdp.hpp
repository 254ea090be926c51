#pragma once

#include "riskmdp/chain_analysis.hpp"
#include "riskmdp/edgeworth.hpp"
#include "riskmdp/estimation.hpp"
#include "riskmdp/io.hpp"
#include "riskmdp/mdp.hpp"
#include "riskmdp/normal.hpp"
#include "riskmdp/policy_gradient.hpp"
#include "riskmdp/rng.hpp"
#include "riskmdp/simulate.hpp"
