#pragma once

#include "sild/autograd.hpp"
#include "sild/checkpoint.hpp"
#include "sild/config.hpp"
#include "sild/errors.hpp"
#include "sild/fft.hpp"
#include "sild/graph.hpp"
#include "sild/metrics.hpp"
#include "sild/model.hpp"
#include "sild/objective.hpp"
#include "sild/optim.hpp"
#include "sild/oracle.hpp"
#include "sild/rng.hpp"
#include "sild/selftest.hpp"
#include "sild/synth.hpp"
#include "sild/trainer.hpp"
