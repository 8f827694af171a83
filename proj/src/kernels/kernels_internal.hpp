// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qdrec/kernels.hpp"

namespace qdrec::kernels::detail {

KernelTable make_scalar_table();
#if defined(QDREC_HAVE_AVX2)
KernelTable make_avx2_table();
#endif
#if defined(QDREC_HAVE_NEON)
KernelTable make_neon_table();
#endif

}  // namespace qdrec::kernels::detail
