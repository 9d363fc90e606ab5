#pragma once

#include "hybridpose/ablation.hpp"
#include "hybridpose/angles.hpp"
#include "hybridpose/binning.hpp"
#include "hybridpose/checkpoint.hpp"
#include "hybridpose/data.hpp"
#include "hybridpose/errors.hpp"
#include "hybridpose/loss.hpp"
#include "hybridpose/report.hpp"
#include "hybridpose/sample.hpp"
#include "hybridpose/synth.hpp"
#include "hybridpose/text_io.hpp"
#include "hybridpose/tinynet.hpp"
