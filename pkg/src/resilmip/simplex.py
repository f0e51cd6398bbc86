"""Bounded-variable primal simplex on a dense tableau.

This is the LP core under the branch-and-bound solver. Variables carry
individual (possibly infinite) bounds handled directly in the basis logic:
nonbasic variables rest at a finite bound (free ones at zero), the ratio test
caps steps by both the blocking basic variable and the entering variable's own
opposite bound, and a step capped by the latter is a basis-preserving bound
flip. Infeasibility is resolved by a phase-1 artificial objective restricted
to rows whose slack cannot absorb the initial residual.

Anti-cycling: pricing starts as Dantzig (most negative reduced cost) and
switches to the least-index rule after ``bland_threshold`` consecutive
degenerate pivots, which guarantees termination. Any claimed optimum is
re-verified on an exactly refactorized tableau before it is returned, so
accumulated round-off can delay but never corrupt the answer; iteration
exhaustion surfaces as an explicit numerical-failure status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mipmodel import RowSense

INF = math.inf

_TOL_DJ = 1e-9       # reduced-cost threshold for an improving column
_TOL_PIV = 1e-9      # minimum magnitude of a usable pivot element
_TOL_DEG = 1e-10     # step sizes below this count as degenerate
_AT_BOUND = 1e-9     # "sitting at a bound" slack when classifying nonbasics


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL = "numerical_failure"


@dataclass
class LpResult:
    status: LpStatus
    objective: float
    x: np.ndarray | None
    iterations: int


def solve_bounded_lp(
    c: np.ndarray,
    a: np.ndarray,
    senses: list[RowSense],
    b: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    *,
    maximize: bool = False,
    bland_threshold: int = 50,
    max_iters: int | None = None,
    feas_tol: float = 1e-8,
) -> LpResult:
    """Minimize (or maximize) c'x subject to row senses and variable bounds."""
    n = c.shape[0]
    m = a.shape[0]
    sign = -1.0 if maximize else 1.0

    # slack per row: A x + s = b with sense folded into the slack's bounds
    slack_lo = np.empty(m)
    slack_hi = np.empty(m)
    for i, sense in enumerate(senses):
        if sense is RowSense.LE:
            slack_lo[i], slack_hi[i] = 0.0, INF
        elif sense is RowSense.GE:
            slack_lo[i], slack_hi[i] = -INF, 0.0
        else:
            slack_lo[i], slack_hi[i] = 0.0, 0.0

    n_tot = n + 2 * m  # structurals, slacks, artificials
    full = np.zeros((m, n_tot))
    if m:
        full[:, :n] = a
        full[:, n : n + m] = np.eye(m)
    vlo = np.concatenate([lo, slack_lo, np.zeros(m)])
    vhi = np.concatenate([hi, slack_hi, np.zeros(m)])

    val = np.zeros(n_tot)
    for j in range(n):
        if np.isfinite(vlo[j]):
            val[j] = vlo[j]
        elif np.isfinite(vhi[j]):
            val[j] = vhi[j]

    # choose the starting basis: the row's slack when it can absorb the
    # residual, otherwise an artificial column carrying the overshoot
    resid = b - full[:, :n] @ val[:n] if m else np.zeros(0)
    basis = np.empty(m, dtype=np.int64)
    in_basis = np.zeros(n_tot, dtype=bool)
    need_phase1 = False
    for i in range(m):
        clipped = min(max(resid[i], slack_lo[i]), slack_hi[i])
        overshoot = resid[i] - clipped
        if abs(overshoot) <= feas_tol:
            basis[i] = n + i
            val[n + i] = resid[i]
        else:
            val[n + i] = clipped
            art = n + m + i
            full[i, art] = 1.0 if overshoot >= 0 else -1.0
            vhi[art] = INF
            val[art] = abs(overshoot)
            basis[i] = art
            need_phase1 = True
    in_basis[basis] = True

    # initial tableau: the basis matrix is diagonal +-1
    diag = np.array([full[i, basis[i]] for i in range(m)]) if m else np.zeros(0)
    tab = full * diag[:, None] if m else full.copy()

    cost1 = np.zeros(n_tot)
    cost1[n + m :] = 1.0
    cost2 = np.zeros(n_tot)
    cost2[:n] = sign * c

    if max_iters is None:
        max_iters = 5000 + 200 * (m + n_tot)

    phase = 1 if need_phase1 else 2
    cost = cost1 if phase == 1 else cost2
    art_scale = feas_tol * (1.0 + (float(np.max(np.abs(b))) if m else 0.0))
    iters = 0
    degen_streak = 0
    rebuilds = 0

    def rebuild() -> bool:
        """Refactorize the tableau and basic values exactly; False on failure."""
        nonlocal tab
        if not m:
            return True
        bmat = full[:, basis]
        rest = val.copy()
        rest[basis] = 0.0
        try:
            tab = np.linalg.solve(bmat, full)
            val[basis] = np.linalg.solve(bmat, b - full @ rest)
        except np.linalg.LinAlgError:
            return False
        return True

    while True:
        if iters > max_iters:
            return LpResult(LpStatus.NUMERICAL, math.nan, None, iters)
        iters += 1

        # pricing
        d = cost - (cost[basis] @ tab if m else 0.0)
        movable = (~in_basis) & (vlo < vhi)
        movable[n + m :] = False  # artificials never re-enter
        at_lo = movable & np.isfinite(vlo) & (val <= vlo + _AT_BOUND)
        at_hi = movable & np.isfinite(vhi) & (val >= vhi - _AT_BOUND)
        free = movable & ~np.isfinite(vlo) & ~np.isfinite(vhi)
        can_incr = (at_lo | free) & (d < -_TOL_DJ)
        can_decr = ((at_hi & ~at_lo) | free) & (d > _TOL_DJ)

        if not (can_incr.any() or can_decr.any()):
            # claimed optimal: verify on an exact refactorization first
            if rebuilds < 2 and m:
                rebuilds += 1
                if not rebuild():
                    return LpResult(LpStatus.NUMERICAL, math.nan, None, iters)
                continue
            if phase == 1:
                art_sum = float(np.sum(val[n + m :]))
                if art_sum > art_scale + 1e-12:
                    return LpResult(LpStatus.INFEASIBLE, math.nan, None, iters)
                vlo[n + m :] = 0.0
                vhi[n + m :] = 0.0
                np.clip(val[n + m :], 0.0, None, out=val[n + m :])
                phase = 2
                cost = cost2
                rebuilds = 0
                degen_streak = 0
                continue
            obj = float(sign * (cost2[:n] @ val[:n]))
            return LpResult(LpStatus.OPTIMAL, obj, val[:n].copy(), iters)

        bland = degen_streak >= bland_threshold
        if bland:
            cands = np.flatnonzero(can_incr | can_decr)
            j = int(cands[0])
        else:
            score = np.where(can_incr, -d, 0.0)
            score = np.maximum(score, np.where(can_decr, d, 0.0))
            j = int(np.argmax(score))
        sigma = 1.0 if can_incr[j] and (not can_decr[j] or d[j] < 0) else -1.0

        # ratio test
        flip = vhi[j] - vlo[j]  # inf when either side is open
        if m:
            w = tab[:, j]
            delta = -sigma * w
            tvec = np.full(m, INF)
            up = delta > _TOL_PIV
            dn = delta < -_TOL_PIV
            bvals = val[basis]
            with np.errstate(invalid="ignore"):
                tvec[up] = (vhi[basis[up]] - bvals[up]) / delta[up]
                tvec[dn] = (vlo[basis[dn]] - bvals[dn]) / delta[dn]
            np.maximum(tvec, 0.0, out=tvec)
            t_block = float(np.min(tvec)) if m else INF
        else:
            tvec = np.zeros(0)
            t_block = INF

        t_star = min(flip, t_block)
        if not np.isfinite(t_star):
            status = LpStatus.UNBOUNDED if phase == 2 else LpStatus.NUMERICAL
            return LpResult(status, -sign * INF if phase == 2 else math.nan, None, iters)

        degen_streak = degen_streak + 1 if t_star <= _TOL_DEG else 0

        if flip <= t_block:
            # bound flip: the entering variable crosses to its other bound
            val[j] = vhi[j] if sigma > 0 else vlo[j]
            if m:
                val[basis] -= sigma * t_star * w
            continue

        near = tvec <= t_star * (1.0 + 1e-9) + 1e-12
        rows = np.flatnonzero(near)
        if bland:
            r = int(rows[np.argmin(basis[rows])])
        else:
            r = int(rows[np.argmax(np.abs(w[rows]))])

        leaving = basis[r]
        val[j] += sigma * t_star
        val[basis] -= sigma * t_star * w
        # park the leaving variable exactly on the bound it hit
        val[leaving] = vhi[leaving] if -sigma * w[r] > 0 else vlo[leaving]

        piv = tab[r, j]
        if abs(piv) < _TOL_PIV:
            return LpResult(LpStatus.NUMERICAL, math.nan, None, iters)
        tab[r] /= piv
        col = tab[:, j].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        tab[:, j] = 0.0
        tab[r, j] = 1.0
        in_basis[leaving] = False
        in_basis[j] = True
        basis[r] = j
