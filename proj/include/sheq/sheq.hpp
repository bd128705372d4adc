#pragma once

#include "sheq/errors.hpp"
#include "sheq/experiments.hpp"
#include "sheq/green.hpp"
#include "sheq/grid.hpp"
#include "sheq/io.hpp"
#include "sheq/noise.hpp"
#include "sheq/parallel.hpp"
#include "sheq/problem.hpp"
#include "sheq/schemes.hpp"
#include "sheq/spectral.hpp"
#include "sheq/version.hpp"
