#pragma once

#include "mgtd/backends.hpp"
#include "mgtd/baseline.hpp"
#include "mgtd/config.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/evaluation.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/promptkit.hpp"
#include "mgtd/remote.hpp"
#include "mgtd/stylometry.hpp"
#include "mgtd/version.hpp"
