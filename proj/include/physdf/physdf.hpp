#pragma once

#include "physdf/adjoint.hpp"
#include "physdf/core/autodiff.hpp"
#include "physdf/core/error.hpp"
#include "physdf/core/vec.hpp"
#include "physdf/fixtures.hpp"
#include "physdf/io.hpp"
#include "physdf/losses.hpp"
#include "physdf/metrics.hpp"
#include "physdf/render.hpp"
#include "physdf/rigid_body.hpp"
#include "physdf/sdf_field.hpp"
#include "physdf/spmc.hpp"
#include "physdf/stability.hpp"
#include "physdf/uncertainty.hpp"
