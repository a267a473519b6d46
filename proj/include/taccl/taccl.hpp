#pragma once

#include "core.hpp"
#include "geometry.hpp"
#include "tensor_io.hpp"
#include "encoder.hpp"
#include "clustering.hpp"
#include "membank.hpp"
#include "losses.hpp"
#include "data.hpp"
#include "matching.hpp"
#include "harness/config.hpp"
#include "harness/optim.hpp"
#include "harness/eval.hpp"
#include "harness/train.hpp"
#include "harness/gradcheck.hpp"
