#pragma once

#include "rcf/baseline.hpp"
#include "rcf/config_file.hpp"
#include "rcf/data.hpp"
#include "rcf/error.hpp"
#include "rcf/evaluation.hpp"
#include "rcf/image_io.hpp"
#include "rcf/inference.hpp"
#include "rcf/loss.hpp"
#include "rcf/matching.hpp"
#include "rcf/model.hpp"
#include "rcf/nms.hpp"
#include "rcf/ops.hpp"
#include "rcf/synthetic.hpp"
#include "rcf/tensor.hpp"
#include "rcf/trainer.hpp"
#include "rcf/weights_io.hpp"
