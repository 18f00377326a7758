#pragma once

#define MGTD_VERSION "0.1.0"
