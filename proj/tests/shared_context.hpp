#pragma once

#include "sticmac/harness.hpp"

// One context per test binary, backed by the cache the build fixtures produce.
inline sticmac::Context& shared_context()
{
    static sticmac::Context ctx(sticmac::SimConfig{}, STICMAC_DATA_DIR);
    return ctx;
}
