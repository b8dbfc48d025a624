#pragma once

namespace kgr {

// Selects the serial reference loop or the OpenMP kernel. Both produce
// identical results; the serial path is kept for testing and benchmarking.
enum class ExecPolicy { kSerial, kParallel };

// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace kgr
