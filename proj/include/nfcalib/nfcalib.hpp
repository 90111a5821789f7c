#pragma once

// Umbrella header.
#include "nfcalib/config.hpp"
#include "nfcalib/errors.hpp"
#include "nfcalib/evaluation.hpp"
#include "nfcalib/geometry.hpp"
#include "nfcalib/io.hpp"
#include "nfcalib/optical.hpp"
#include "nfcalib/pipeline.hpp"
#include "nfcalib/radar.hpp"
#include "nfcalib/ransac.hpp"
#include "nfcalib/registration.hpp"
#include "nfcalib/synthetic.hpp"
#include "nfcalib/target.hpp"
