"""Euclidean projection onto ``{lo <= y <= hi, B y = 0}``.

The dual of ``min 0.5 ||y - z||^2`` over that set is the concave piecewise
quadratic ``theta(mu) = min_{lo <= y <= hi} 0.5 ||y - z||^2 + mu^T B y`` with
inner minimizer ``y(mu) = clip(z - B^T mu)`` and gradient ``B y(mu)``.  We
maximize it by semismooth Newton steps ``(B D B^T) d = B y`` (``D`` marks
the unclipped entries) followed by an exact line search along the piecewise
linear derivative.  Rows with no unclipped entry have no curvature and take
a steepest ascent component instead.  Calls that need many steps switch to
a small positive curvature on clipped entries, which converges more
reliably from far-off points.  For the difference structure of the
TV split the Newton matrix is tridiagonal per channel.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from ..errors import InfeasibleError

__all__ = ["Projector", "project"]


def _exact_step(v, w, lo, hi, slope0):
    """Maximize ``phi(t) = theta(mu + t d)`` for ``t >= 0``.

    ``phi'(t) = sum_i w_i clip(v_i - t w_i, lo_i, hi_i)`` is nonincreasing
    and piecewise linear; walk its breakpoints until it reaches zero.
    Returns ``None`` when ``phi`` increases without bound.
    """
    nz = w != 0
    v, w, lo, hi = v[nz], w[nz], lo[nz], hi[nz]
    w2 = w * w
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t_lo = (v - lo) / w
        t_hi = (v - hi) / w
    # entry i is unclipped for t between its two crossing times
    enter = np.minimum(t_lo, t_hi)
    leave = np.maximum(t_lo, t_hi)
    enter = np.where(np.isnan(enter), -np.inf, enter)
    leave = np.where(np.isnan(leave), np.inf, leave)
    free0 = (enter <= 0) & (leave > 0)
    s = -float(np.sum(w2[free0]))
    times = np.concatenate([enter[enter > 0], leave[leave > 0]])
    deltas = np.concatenate([-w2[enter > 0], w2[leave > 0]])
    keep = np.isfinite(times)
    times, deltas = times[keep], deltas[keep]
    order = np.argsort(times, kind="stable")
    times, deltas = times[order], deltas[order]
    if times.size == 0:
        if s < 0:
            return slope0 / -s
        return None
    # phi' at each breakpoint
    seg_len = np.diff(np.concatenate([[0.0], times]))
    slopes = s + np.concatenate([[0.0], np.cumsum(deltas)[:-1]])
    with np.errstate(over="ignore", invalid="ignore"):
        vals = slope0 + np.cumsum(slopes * seg_len)
    hit = np.nonzero(vals <= 0)[0]
    if hit.size:
        i = int(hit[0])
        t0 = times[i - 1] if i > 0 else 0.0
        p0 = vals[i - 1] if i > 0 else slope0
        sl = slopes[i]
        return t0 + (p0 / -sl if sl < 0 else 0.0)
    s_end = s + float(np.sum(deltas))
    if s_end < 0:
        return times[-1] + vals[-1] / -s_end
    return None


class _NewtonMatrix:
    """``B diag(w) B^T`` for varying ``w`` on a fixed sparsity pattern.

    The entries are a fixed linear map of ``w``; systems with a narrow band
    (the TV split gives a tridiagonal matrix per channel) go to a banded
    solver and everything else to sparse LU.
    """

    def __init__(self, B):
        B = sp.csc_matrix(B)
        nr = B.shape[0]
        pattern = (abs(B) @ abs(B).T).tocoo()
        keys = pattern.row.astype(np.int64) * nr + pattern.col
        order = np.argsort(keys)
        self.rows, self.cols = pattern.row[order], pattern.col[order]
        keys = keys[order]
        pos, col, val = [], [], []
        for i in range(B.shape[1]):
            lo_, hi_ = B.indptr[i], B.indptr[i + 1]
            r, v = B.indices[lo_:hi_], B.data[lo_:hi_]
            if r.size == 0:
                continue
            a = np.repeat(r, r.size)
            b = np.tile(r, r.size)
            pos.append(np.searchsorted(keys, a.astype(np.int64) * nr + b))
            val.append(np.outer(v, v).ravel())
            col.append(np.full(a.size, i))
        if pos:
            pos, col, val = np.concatenate(pos), np.concatenate(col), np.concatenate(val)
        else:
            pos = col = np.zeros(0, dtype=int)
            val = np.zeros(0)
        self.map = sp.csr_matrix((val, (pos, col)), shape=(keys.size, B.shape[1]))
        self.n = nr
        self.diag = self.rows == self.cols
        self.band = int(np.max(np.abs(self.rows - self.cols), initial=0))
        self.banded = self.band <= 8

    def solve(self, w, r, dead):
        """Solve ``B diag(w) B^T d = r`` with rows in ``dead`` replaced by
        identity rows."""
        data = self.map @ w
        data[self.diag] += dead[self.rows[self.diag]]
        scale = max(1.0, float(np.max(data[self.diag], initial=0.0)))
        # dependent rows make the matrix singular; r has no component there
        data[self.diag] += 1e-12 * scale
        if self.banded:
            u = self.band
            ab = np.zeros((2 * u + 1, self.n))
            ab[u + self.rows - self.cols, self.cols] = data
            return solve_banded((u, u), ab, r, check_finite=False)
        M = sp.csc_matrix((data, (self.rows, self.cols)), shape=(self.n, self.n))
        return spsolve(M, r)


class Projector:
    """Stateful projector that warm-starts from the previous multipliers.

    Parameters
    ----------
    lo, hi : ndarray
        Box bounds (entries may be infinite).
    B : sparse matrix
        Equality rows; the right-hand side is zero.
    tol : float
        Target ``||B y||_inf``, scaled by ``max(1, ||z||_inf)``.  A Newton
        step that keeps the active set and fails to halve the residual is
        taken as the rounding floor once the residual is below ``floor * tol``.
    switch : int
        Newton steps with exact curvature before clipped entries get
        curvature ``clip_weight``.
    """

    def __init__(self, lo, hi, B, tol=1e-14, max_iter=500, floor=1e4, switch=30, clip_weight=1e-6):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.B = sp.csr_matrix(B, dtype=float)
        self.BT = self.B.T.tocsr()
        self.tol = tol
        self.max_iter = max_iter
        self.floor = floor
        self.switch = switch
        self.clip_weight = clip_weight
        self.mu = np.zeros(self.B.shape[0])
        self.last_iterations = 0
        self._newton = _NewtonMatrix(self.B) if self.B.shape[0] else None
        self._absB = abs(self.B)
        self._row_of = np.repeat(np.arange(self.B.shape[0]), np.diff(self.B.indptr))

    def _dead_step(self, v, r, dead):
        """Ascent step for rows whose entries are all clipped.

        Each such row moves its multiplier until the first of its entries
        reaches a bound from outside, so one iteration frees an entry in
        every dead row at once.
        """
        B = self.B
        sgn = np.sign(r)[self._row_of]
        a = -sgn * B.data
        vi, lo, hi = v[B.indices], self.lo[B.indices], self.hi[B.indices]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where((vi <= lo) & (a > 0), (lo - vi) / a,
                         np.where((vi >= hi) & (a < 0), (hi - vi) / a, np.inf))
        first = np.full(B.shape[0], np.inf)
        np.minimum.at(first, self._row_of, t)
        first = first[dead]
        rd = r[dead]
        ok = np.isfinite(first) & (first > 0)
        return np.where(ok, np.sign(rd) * np.where(ok, first, 0.0), rd)

    def reset(self):
        self.mu[:] = 0.0

    def __call__(self, z, warm=True):
        z = np.asarray(z, dtype=float)
        lo, hi, B, BT = self.lo, self.hi, self.B, self.BT
        if B.shape[0] == 0:
            self.last_iterations = 0
            return np.clip(z, lo, hi)
        mu = self.mu.copy() if warm else np.zeros(B.shape[0])
        tol = self.tol * max(1.0, float(np.max(np.abs(z))) if z.size else 1.0)
        v = z - BT @ mu
        y = np.clip(v, lo, hi)
        r = B @ y
        it = 0
        res = float(np.max(np.abs(r)))
        stalled = False
        while res > tol:
            if it >= self.max_iter:
                raise InfeasibleError(
                    f"projection did not reach feasibility {tol:g} in {self.max_iter} steps "
                    f"(residual {np.max(np.abs(r)):.3e})")
            it += 1
            free = (v > lo) & (v < hi)
            if stalled and res <= self.floor * tol:
                # same active set and no progress: rounding floor of the Newton solve
                break
            if it <= self.switch:
                weight = free.astype(float)
                dead = self._absB @ weight == 0
                d = self._newton.solve(weight, r, dead.astype(float))
                if dead.any():
                    d[dead] = self._dead_step(v, r, dead)
            else:
                # far from the solution: small curvature on clipped entries is more robust
                weight = np.where(free, 1.0, self.clip_weight)
                d = self._newton.solve(weight, r, np.zeros(r.size))
            w = BT @ d
            slope0 = float(d @ r)
            if not slope0 > 0:
                d, w, slope0 = r, BT @ r, float(r @ r)
            t = _exact_step(v, w, lo, hi, slope0)
            if t is None:
                raise InfeasibleError("polyhedral set is empty (dual objective is unbounded)")
            mu = mu + t * d
            v = z - BT @ mu
            y = np.clip(v, lo, hi)
            r = B @ y
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(mu))):
                raise InfeasibleError("projection multipliers diverged")
            new_res = float(np.max(np.abs(r)))
            new_free = (v > lo) & (v < hi)
            stalled = np.array_equal(new_free, free) and new_res > 0.5 * res
            res = new_res
        self.last_iterations = it
        self.mu = mu
        return y


def project(lo, hi, B, z, tol=1e-14):
    """One-shot projection of ``z`` onto ``{lo <= y <= hi, B y = 0}``."""
    return Projector(lo, hi, B, tol=tol)(z, warm=False)
