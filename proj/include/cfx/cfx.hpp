#pragma once

#include "cfx/util.hpp"
#include "cfx/csv.hpp"
#include "cfx/schema.hpp"
#include "cfx/tree.hpp"
#include "cfx/meta_space.hpp"
#include "cfx/counterfactual.hpp"
#include "cfx/bundle.hpp"
#include "cfx/render.hpp"
#include "cfx/query.hpp"
#include "cfx/dialogue.hpp"
