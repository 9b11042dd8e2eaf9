#pragma once

#include "npi/error.hpp"
#include "npi/binary_io.hpp"
#include "npi/connectome.hpp"
#include "npi/timeseries.hpp"
#include "npi/ec_tensor.hpp"
#include "npi/jansen_rit.hpp"
#include "npi/dataset.hpp"
#include "npi/tensor.hpp"
#include "npi/forecasters.hpp"
#include "npi/checkpoint.hpp"
#include "npi/training.hpp"
#include "npi/perturbation.hpp"
#include "npi/granger.hpp"
#include "npi/metrics.hpp"
#include "npi/plot_export.hpp"
#include "npi/config.hpp"
#include "npi/pipeline.hpp"
