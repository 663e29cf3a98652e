#pragma once

#include "ecnn/ensemble.hpp"
#include "ecnn/error.hpp"
#include "ecnn/experts.hpp"
#include "ecnn/gating.hpp"
#include "ecnn/grasp.hpp"
#include "ecnn/hash.hpp"
#include "ecnn/image.hpp"
#include "ecnn/pipeline.hpp"
#include "ecnn/synthbench.hpp"
