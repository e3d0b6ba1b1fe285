#pragma once

#include "afnet/ops/basic.hpp"
#include "afnet/ops/conv.hpp"
#include "afnet/ops/pool.hpp"
#include "afnet/ops/video.hpp"
