#ifndef SRM_SRM_HPP
#define SRM_SRM_HPP

// Umbrella header for the full library.

#include "srm/common.hpp"
#include "srm/config.hpp"
#include "srm/cost.hpp"
#include "srm/mamba.hpp"
#include "srm/model.hpp"
#include "srm/nn.hpp"
#include "srm/rng.hpp"
#include "srm/serialize.hpp"
#include "srm/tensor.hpp"
#include "srm/train.hpp"

#endif  // SRM_SRM_HPP
