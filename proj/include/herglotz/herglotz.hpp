#pragma once

#include "herglotz/number.hpp"
#include "herglotz/expr.hpp"
#include "herglotz/printer.hpp"
#include "herglotz/jet.hpp"
#include "herglotz/dsl.hpp"
#include "herglotz/compiled.hpp"
#include "herglotz/parallel.hpp"
#include "herglotz/mechanics.hpp"
#include "herglotz/stencil.hpp"
#include "herglotz/fields.hpp"
#include "herglotz/problems.hpp"
#include "herglotz/io.hpp"
#include "herglotz/report.hpp"
#include "herglotz/random_expr.hpp"
