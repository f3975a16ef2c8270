#ifndef F2SA_F2SA_HPP_
#define F2SA_F2SA_HPP_

// Fully first-order stochastic bilevel solvers with finite-difference
// hyper-gradient estimates. Everything except the experiment harness
// (f2sa/experiment.hpp, which also needs nlohmann_json).

#include "f2sa/error.hpp"
#include "f2sa/findiff.hpp"
#include "f2sa/hypergrad.hpp"
#include "f2sa/oracles.hpp"
#include "f2sa/problem.hpp"
#include "f2sa/problems/hard_instance.hpp"
#include "f2sa/problems/learn2reg.hpp"
#include "f2sa/problems/synthetic.hpp"
#include "f2sa/seed.hpp"
#include "f2sa/solvers.hpp"

#endif  // F2SA_F2SA_HPP_
