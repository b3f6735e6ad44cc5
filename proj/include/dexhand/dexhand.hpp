#pragma once

// Convenience include for the whole library.

#include "dexhand/common.hpp"
#include "dexhand/config.hpp"
#include "dexhand/control.hpp"
#include "dexhand/demodata.hpp"
#include "dexhand/expert.hpp"
#include "dexhand/image.hpp"
#include "dexhand/kinematics.hpp"
#include "dexhand/plant.hpp"
#include "dexhand/policy.hpp"
#include "dexhand/rng.hpp"
#include "dexhand/scene.hpp"
#include "dexhand/task.hpp"
#include "dexhand/workspace.hpp"
