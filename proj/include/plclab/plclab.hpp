#pragma once

// Umbrella header. The HTTP service is separate (plclab/mushra_service.hpp)
// so that library users do not pull in cpp-httplib.

#include "plclab/audio_io.hpp"
#include "plclab/conceal.hpp"
#include "plclab/csv.hpp"
#include "plclab/degrade.hpp"
#include "plclab/error.hpp"
#include "plclab/harness.hpp"
#include "plclab/lpc.hpp"
#include "plclab/metrics.hpp"
#include "plclab/mushra.hpp"
#include "plclab/random.hpp"
#include "plclab/spectral.hpp"
#include "plclab/trace.hpp"

namespace plclab {

inline constexpr const char* kVersion = PLCLAB_VERSION;
// Bumped when the corresponding on-disk format changes.
inline constexpr int kTracePlanFormat = 1;
inline constexpr int kManifestFormat = 1;
inline constexpr int kRatingsFormat = 1;

}  // namespace plclab
