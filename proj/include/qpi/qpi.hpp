// Umbrella header.
#pragma once

#include "qpi/config.hpp"
#include "qpi/features.hpp"
#include "qpi/fft.hpp"
#include "qpi/field.hpp"
#include "qpi/fourier_recon.hpp"
#include "qpi/geometry.hpp"
#include "qpi/hologram.hpp"
#include "qpi/io.hpp"
#include "qpi/phantom.hpp"
#include "qpi/pipeline.hpp"
#include "qpi/population.hpp"
#include "qpi/random.hpp"
#include "qpi/sparse_recon.hpp"
#include "qpi/unwrap.hpp"
