#pragma once

#include "controller.hpp"
#include "formation.hpp"
#include "geometry.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "normal.hpp"
#include "oned.hpp"
#include "parallel.hpp"
#include "sensor.hpp"
#include "simulator.hpp"
#include "stability.hpp"
