#pragma once

#include "mambarecon/errors.hpp"
#include "mambarecon/tensor.hpp"
#include "mambarecon/rng.hpp"
#include "mambarecon/autodiff.hpp"
#include "mambarecon/ops.hpp"
#include "mambarecon/complex_image.hpp"
#include "mambarecon/fourier.hpp"
#include "mambarecon/forward_model.hpp"
#include "mambarecon/ssm.hpp"
#include "mambarecon/vssm.hpp"
#include "mambarecon/data_consistency.hpp"
#include "mambarecon/network.hpp"
#include "mambarecon/tensor_io.hpp"
#include "mambarecon/phantom.hpp"
#include "mambarecon/training.hpp"
#include "mambarecon/metrics.hpp"
#include "mambarecon/baselines.hpp"
#include "mambarecon/config.hpp"
#include "mambarecon/dataset.hpp"
#include "mambarecon/checkpoint.hpp"
#include "mambarecon/allocator.hpp"
