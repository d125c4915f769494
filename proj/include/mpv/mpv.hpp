#pragma once

#include "mpv/common.hpp"
#include "mpv/corpus.hpp"
#include "mpv/cost.hpp"
#include "mpv/disparity.hpp"
#include "mpv/image.hpp"
#include "mpv/imgio.hpp"
#include "mpv/multiscale.hpp"
#include "mpv/pipeline.hpp"
#include "mpv/recog.hpp"
#include "mpv/roadobs.hpp"
#include "mpv/synth.hpp"
#include "mpv/viterbi.hpp"
