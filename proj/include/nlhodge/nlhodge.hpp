// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef NLHODGE_NLHODGE_HPP
#define NLHODGE_NLHODGE_HPP

#include "nlhodge/backlund.hpp"
#include "nlhodge/bvp.hpp"
#include "nlhodge/construct.hpp"
#include "nlhodge/core.hpp"
#include "nlhodge/density.hpp"
#include "nlhodge/expr.hpp"
#include "nlhodge/forms.hpp"
#include "nlhodge/grid.hpp"
#include "nlhodge/io.hpp"

#endif  // NLHODGE_NLHODGE_HPP
