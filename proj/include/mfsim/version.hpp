#pragma once

#define MFSIM_VERSION "0.1.0"
