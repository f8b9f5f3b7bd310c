"""Bracketed scalar root finding with a Newton polish."""

import math
import sys

from scipy.optimize import brentq

from ..errors import ParameterDomainError


def bracketed_root(fun, dfun, lo, hi, tol=1e-12):
    """Root of ``fun`` on ``[lo, hi]``: Brent bracketing, then Newton steps.

    The Newton polish only accepts steps that stay inside the bracket and
    reduce ``|fun|``.
    """
    flo, fhi = fun(lo), fun(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise ParameterDomainError(f"no sign change on [{lo}, {hi}]")
    x = brentq(fun, lo, hi, xtol=tol, rtol=4 * sys.float_info.epsilon, maxiter=500)
    fx = fun(x)
    for _ in range(5):
        d = dfun(x)
        if d == 0 or fx == 0:
            break
        x_new = x - fx / d
        if not lo <= x_new <= hi:
            break
        f_new = fun(x_new)
        if abs(f_new) >= abs(fx):
            break
        x, fx = x_new, f_new
    return x
