#pragma once

#include "mpv/pipeline/config.hpp"
#include "mpv/pipeline/dispio.hpp"
#include "mpv/pipeline/frame.hpp"
#include "mpv/pipeline/sequence.hpp"
