#pragma once

#include "gridnet/adam.hpp"
#include "gridnet/checkpoint.hpp"
#include "gridnet/cifar10.hpp"
#include "gridnet/config.hpp"
#include "gridnet/data.hpp"
#include "gridnet/decomp.hpp"
#include "gridnet/errors.hpp"
#include "gridnet/layers.hpp"
#include "gridnet/loss.hpp"
#include "gridnet/models.hpp"
#include "gridnet/network.hpp"
#include "gridnet/report.hpp"
#include "gridnet/rng.hpp"
#include "gridnet/strategies.hpp"
#include "gridnet/tensor.hpp"
