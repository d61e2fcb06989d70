#pragma once
// Umbrella header.

#include "mono3d/common.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/scene.hpp"
#include "mono3d/energy.hpp"
#include "mono3d/cost_volume.hpp"
#include "mono3d/solvers.hpp"
#include "mono3d/eval.hpp"
#include "mono3d/kitti.hpp"
#include "mono3d/tensor_io.hpp"
#include "mono3d/dataset.hpp"
#include "mono3d/experiment.hpp"
