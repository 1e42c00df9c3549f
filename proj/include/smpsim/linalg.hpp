#pragma once

#include <cstddef>

// Dense LU with partial pivoting, sized for MNA systems (a few dozen
// unknowns at most).  Row-major storage, factorization in place; the
// elimination row updates go through the kernels module.

namespace smpsim {

/// Factor a (n x n, row-major) in place into L (unit lower) and U, with
/// row pivoting recorded in piv (length n).  Returns false when a pivot is
/// numerically zero, i.e. the matrix is singular at working precision.
bool lu_factor(double* a, int n, int* piv);

/// Solve A x = b using a factorization from lu_factor; b becomes x.
void lu_solve(const double* a, int n, const int* piv, double* b);

}  // namespace smpsim
