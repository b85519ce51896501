#pragma once

#include "locreward/annotation.hpp"
#include "locreward/assignment.hpp"
#include "locreward/curation.hpp"
#include "locreward/emit.hpp"
#include "locreward/error.hpp"
#include "locreward/geometry.hpp"
#include "locreward/grpo.hpp"
#include "locreward/matching.hpp"
#include "locreward/metrics.hpp"
#include "locreward/parsing.hpp"
#include "locreward/reward.hpp"
