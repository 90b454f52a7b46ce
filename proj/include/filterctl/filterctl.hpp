#pragma once

#include "filterctl/core.hpp"
#include "filterctl/pulses.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/devices.hpp"
#include "filterctl/filters.hpp"
#include "filterctl/dynamics.hpp"
#include "filterctl/optimize.hpp"
#include "filterctl/susceptibility.hpp"
#include "filterctl/sensing.hpp"
#include "filterctl/io.hpp"
#include "filterctl/config.hpp"
#include "filterctl/pipelines.hpp"
