// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tavlad/attention.hpp"
#include "tavlad/codebook.hpp"
#include "tavlad/dataio/checkpoint.hpp"
#include "tavlad/dataio/formats.hpp"
#include "tavlad/dataio/manifest.hpp"
#include "tavlad/dataio/pgm.hpp"
#include "tavlad/dataio/synthetic.hpp"
#include "tavlad/error.hpp"
#include "tavlad/gradient_suite.hpp"
#include "tavlad/model.hpp"
#include "tavlad/numerics/grad_check.hpp"
#include "tavlad/numerics/ops.hpp"
#include "tavlad/numerics/rng.hpp"
#include "tavlad/numerics/tape.hpp"
#include "tavlad/numerics/tensor.hpp"
#include "tavlad/temporal.hpp"
#include "tavlad/trainer.hpp"
#include "tavlad/vlad.hpp"
#include "tavlad/vlad_oracle.hpp"
