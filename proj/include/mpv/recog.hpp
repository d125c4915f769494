#pragma once

#include "mpv/recog/boost.hpp"
#include "mpv/recog/cascade.hpp"
#include "mpv/recog/detect.hpp"
#include "mpv/recog/lbp.hpp"
