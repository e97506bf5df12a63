"""Pure-numpy implementations of the pair kernels.

Used when the compiled extension is unavailable (or forced via the
NOCD_FORCE_FALLBACK environment variable). Semantics match
``nocd._kernels._core``; summation order may differ, so cross-backend
comparisons are made to floating-point tolerance, not bit-exactly.
"""

import numpy as np


def pair_dots(f, us, vs):
    """Return d[k] = <f[us[k]], f[vs[k]]> for every listed pair."""
    return np.einsum("ij,ij->i", f[us], f[vs])


def edge_term_sums(f, us, vs, min_dot):
    """Summed -log(1-exp(-max(d, min_dot))) and summed raw dots over pairs."""
    d = pair_dots(f, us, vs)
    clamped = np.maximum(d, min_dot)
    nll_sum = -np.log(-np.expm1(-clamped)).sum()
    return float(nll_sum), float(d.sum())


def accumulate_pair_grads(f, us, vs, coefs, out):
    """For every pair k add coefs[k]*f[vs[k]] to out[us[k]] and vice versa."""
    weighted = coefs[:, None]
    np.add.at(out, us, weighted * f[vs])
    np.add.at(out, vs, weighted * f[us])
