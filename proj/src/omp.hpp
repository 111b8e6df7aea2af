#pragma once

#if defined(_OPENMP)
#include <omp.h>
#define PIRANK_PRAGMA_HELPER(x) _Pragma(#x)
#define PIRANK_OMP(x) PIRANK_PRAGMA_HELPER(omp x)
#else
#define PIRANK_OMP(x)
#endif
