"""Resilience bounds and robustness verdicts on top of the branch-and-bound core.

The headline quantity is the maximum-perturbation bound phi(m, alpha, k): the
smallest 1-norm input change that can carry some point strongly classified as
class m (score ratio >= alpha against every rival) to a point where at least k
rivals match or beat class m. Larger phi means a sturdier class. xi is the
worst phi over classes that can be strongly classified at all; local
robustness asks whether a specific anchor survives every perturbation within
a budget; the ratio bound reports the largest alpha any input attains.

Perturbation searches run in three steps: find one strongly-classified
anchor, compute the cheapest class-flipping perturbation from that fixed
anchor, then solve the full two-copy model warm-started with that witness and
restricted to objective values no worse than the fixed-anchor optimum. Both
presolves only speed up the final exact search; they never change its answer.

Arc-tangent activations are encoded by a sound outer envelope, so for nets
containing them phi/xi are conservative (possibly lower than the true bound),
ROBUST verdicts remain trustworthy, and apparent violations are re-validated
against the exact forward pass before being reported as real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import encoder
from .dataflow import IntervalBounds, propagate_intervals, tighten_lookback
from .encoder import EncodedQuery, QueryKind, QuerySpec
from .mipmodel import MipModel, ObjSense, RowSense
from .network import Network, class_scores, competitor_count, forward, strongly_classifies
from .solver import SolveConfig, SolveResult, SolveStatus, solve

_WITNESS_TOL = 1e-7


class Verdict(Enum):
    ROBUST = "ROBUST"
    VIOLATED = "VIOLATED"
    UNKNOWN = "UNKNOWN"


@dataclass
class PhiResult:
    """Outcome of one maximum-perturbation query.

    phi is the incumbent objective (an upper bound on the exact encoded
    optimum unless status is OPTIMAL, in which case it is the optimum);
    lower_bound is the solver's proven dual bound. phi = inf with status
    INFEASIBLE means no admissible anchor/perturbation pair exists, so the
    class is vacuously unbreakable at these parameters.
    """

    m: int
    alpha: float
    k: int
    phi: float
    status: SolveStatus
    lower_bound: float
    anchor: np.ndarray | None = None
    eps: np.ndarray | None = None
    perturbed: np.ndarray | None = None
    anchor_input: np.ndarray | None = None   # the step-1 seed
    anchor_phi: float | None = None          # the step-2 fixed-anchor optimum
    solve: SolveResult | None = None
    # True when the witness pair re-validates through the exact forward pass
    # (anchor strongly classified, perturbed point k-dominated, both within
    # 1e-6); False signals the relaxed-envelope slack of arc-tangent nodes;
    # None when there is no witness to check.
    witness_exact: bool | None = None

    @property
    def exact(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE)


@dataclass
class XiResult:
    xi: float
    status: SolveStatus
    per_class: dict[int, PhiResult] = field(default_factory=dict)
    weakest_class: int | None = None
    excluded: list[int] = field(default_factory=list)  # classes with phi = inf


@dataclass
class RobustnessResult:
    verdict: Verdict
    m: int
    delta: float
    k: int
    eps: np.ndarray | None = None
    perturbed: np.ndarray | None = None
    note: str = ""
    solve: SolveResult | None = None


@dataclass
class MaxAlphaResult:
    alpha_max: float
    t_star: float
    attainable: bool           # alpha_max >= 1, i.e. the class can lead at all
    status: SolveStatus
    upper_bound: float         # exp of the dual bound
    anchor: np.ndarray | None = None
    solve: SolveResult | None = None


def _prepare_bounds(net: Network, bounds: IntervalBounds | None,
                    lookback: int | None, config: SolveConfig | None) -> IntervalBounds:
    if bounds is None:
        bounds = propagate_intervals(net)
    if lookback is not None and lookback >= 2:
        workers = config.workers if config is not None else 1
        bounds = tighten_lookback(net, bounds, depth=lookback, workers=workers)
    return bounds


def _vals(assignment, ids) -> np.ndarray:
    return np.array([assignment[i] for i in ids], dtype=np.float64)


def _witness_holds(net: Network, anchor: np.ndarray, perturbed: np.ndarray,
                   m: int, alpha: float, k: int, tol: float = 1e-6) -> bool:
    """Re-validate a perturbation witness with exact forward passes: the
    anchor's log-score margin must reach ln(alpha) and the perturbed point
    must have k true competitors, both within tol."""
    s = class_scores(net, anchor)
    margin = float(s[m - 1] - np.delete(s, m - 1).max())
    return (margin >= math.log(alpha) - tol
            and competitor_count(net, perturbed, m, tol=tol) >= k)


def find_strong_anchor(net: Network, m: int, alpha: float,
                       bounds: IntervalBounds, config: SolveConfig | None = None,
                       segments: int = 8) -> tuple[np.ndarray | None, SolveStatus]:
    """Some in-domain input the encoding certifies as strongly classified, or
    None when the strong region is (provably) empty."""
    last = net.score_layer + 1
    model = MipModel(f"anchor_m{m}")
    lo = net.input_bounds[:, 0]
    hi = net.input_bounds[:, 1]
    a_ids = [model.add_variable(f"a{i}", float(lo[i]), float(hi[i]))
             for i in range(net.input_dim)]
    body = encoder.encode_network_copy(model, net, bounds, 1, last, a_ids, "b", segments)
    encoder.encode_strong_classification(model, body.x_ids[last], m - 1, alpha, "SC")
    model.set_objective([], ObjSense.MINIMIZE)
    encoder.assign_branch_priorities(model, net, [body])
    res = solve(model.freeze(), config or SolveConfig())
    if res.assignment is not None:
        return _vals(res.assignment, a_ids), res.status
    return None, res.status


def compute_phi(net: Network, m: int, alpha: float = 1.0, k: int = 1, *,
                a_ini: np.ndarray | None = None,
                config: SolveConfig | None = None,
                bounds: IntervalBounds | None = None,
                lookback: int | None = None,
                segments: int = 8,
                presolve: bool = True) -> PhiResult:
    """Maximum-perturbation bound for class m at ratio alpha and overlap k."""
    cfg = config or SolveConfig()
    bounds = _prepare_bounds(net, bounds, lookback, cfg)

    anchor: np.ndarray | None = None
    anchor_phi: float | None = None
    eps_seed: np.ndarray | None = None
    if a_ini is not None:
        anchor = np.asarray(a_ini, dtype=np.float64).reshape(-1)
        if not strongly_classifies(net, anchor, m, alpha):
            raise ValueError(
                f"given anchor is not strongly classified as class {m} at alpha={alpha}"
            )
    elif presolve:
        anchor, a_status = find_strong_anchor(net, m, alpha, bounds, cfg, segments)
        if anchor is None and a_status is SolveStatus.INFEASIBLE:
            # no input is strongly classified: the minimum ranges over an
            # empty set and the class is vacuously unbreakable
            return PhiResult(m, alpha, k, math.inf, SolveStatus.INFEASIBLE,
                             math.inf)

    if anchor is not None and presolve:
        enc2 = encoder.encode_min_perturbation_at(net, bounds, anchor, m, k, segments)
        res2 = solve(enc2.model, cfg)
        if res2.status is SolveStatus.INFEASIBLE:
            # the dominance region is empty regardless of the anchor
            return PhiResult(m, alpha, k, math.inf, SolveStatus.INFEASIBLE,
                             math.inf, anchor_input=anchor)
        if res2.assignment is not None:
            anchor_phi = float(res2.objective)
            eps_seed = _vals(res2.assignment, enc2.eps_ids)

    enc = encoder.encode_query(net, bounds, QuerySpec(QueryKind.MAX_PERTURBATION,
                                                      m=m, alpha=alpha, k=k), segments)
    if anchor_phi is not None:
        enc.model.thaw()
        enc.model.add_constraint("RESTRICT", [(f, 1.0) for f in enc.eps_abs_ids],
                                 RowSense.LE, anchor_phi + 1e-9)
        enc.model.freeze()
    if anchor is not None and eps_seed is not None:
        enc.model.set_warm_start(encoder.build_warm_start(enc, net, anchor, eps_seed))

    res = solve(enc.model, cfg)
    out = PhiResult(m, alpha, k, math.inf, res.status, res.dual_bound,
                    anchor_input=anchor, anchor_phi=anchor_phi, solve=res)
    if res.status is SolveStatus.INFEASIBLE:
        out.lower_bound = math.inf
        return out
    if res.assignment is not None:
        out.phi = float(res.objective)
        out.anchor = _vals(res.assignment, enc.input_ids)
        out.eps = _vals(res.assignment, enc.eps_ids)
        out.perturbed = _vals(res.assignment, enc.pert_input_ids)
        out.witness_exact = _witness_holds(net, out.anchor, out.perturbed,
                                           m, alpha, k)
    return out


def compute_xi(net: Network, alpha: float = 1.0, k: int = 1, *,
               config: SolveConfig | None = None,
               bounds: IntervalBounds | None = None,
               lookback: int | None = None,
               segments: int = 8) -> XiResult:
    """Network resilience: the worst finite phi over all classes. Classes that
    cannot be strongly classified (phi = inf) do not constrain the minimum."""
    bounds = _prepare_bounds(net, bounds, lookback, config)
    per_class: dict[int, PhiResult] = {}
    xi = math.inf
    weakest: int | None = None
    excluded: list[int] = []
    status = SolveStatus.OPTIMAL
    for m in range(1, net.num_classes + 1):
        r = compute_phi(net, m, alpha, k, config=config, bounds=bounds,
                        segments=segments)
        per_class[m] = r
        if math.isinf(r.phi):
            excluded.append(m)
            continue
        if r.phi < xi:
            xi = r.phi
            weakest = m
        if not r.exact:
            status = r.status
    return XiResult(xi, status, per_class, weakest, excluded)


def check_local_robustness(net: Network, a: np.ndarray, delta: float, *,
                           m: int | None = None, k: int = 1,
                           config: SolveConfig | None = None,
                           bounds: IntervalBounds | None = None,
                           lookback: int | None = None,
                           segments: int = 8) -> RobustnessResult:
    """Is class m's verdict at anchor a stable against every perturbation of
    1-norm at most delta? Decided by a feasibility model over the perturbed
    copy; an infeasible model proves robustness, a feasible point is
    re-validated with the exact forward pass before being called a violation.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if m is None:
        m = int(np.argmax(class_scores(net, a))) + 1
    bounds = _prepare_bounds(net, bounds, lookback, config)
    q = QuerySpec(QueryKind.LOCAL_ROBUSTNESS, m=m, k=k, a=a, delta=float(delta))
    enc = encoder.encode_query(net, bounds, q, segments)
    res = solve(enc.model, config or SolveConfig())
    if res.status is SolveStatus.INFEASIBLE:
        return RobustnessResult(Verdict.ROBUST, m, delta, k, solve=res)
    if res.assignment is not None:
        eps = _vals(res.assignment, enc.eps_ids)
        p = np.clip(a + eps, net.input_bounds[:, 0], net.input_bounds[:, 1])
        real = (competitor_count(net, p, m, tol=_WITNESS_TOL) >= k
                and float(np.sum(np.abs(eps))) <= delta + _WITNESS_TOL)
        if real:
            return RobustnessResult(Verdict.VIOLATED, m, delta, k, eps=eps,
                                    perturbed=p, solve=res)
        return RobustnessResult(
            Verdict.UNKNOWN, m, delta, k, eps=eps, perturbed=p, solve=res,
            note="model admits a perturbation but the exact forward pass does "
                 "not confirm it (envelope slack)")
    return RobustnessResult(Verdict.UNKNOWN, m, delta, k, solve=res,
                            note=f"search stopped at status {res.status.value}")


def compute_max_alpha(net: Network, m: int, *,
                      config: SolveConfig | None = None,
                      bounds: IntervalBounds | None = None,
                      lookback: int | None = None,
                      segments: int = 8) -> MaxAlphaResult:
    """Largest dominance ratio alpha at which class m is strongly classified
    anywhere in the domain: maximize the worst log-score margin t and report
    e^t. t < 0 means the class never tops every rival simultaneously."""
    bounds = _prepare_bounds(net, bounds, lookback, config)
    enc = encoder.encode_query(net, bounds, QuerySpec(QueryKind.MAX_ALPHA, m=m), segments)
    res = solve(enc.model, config or SolveConfig())
    t_star = float(res.objective)
    anchor = None
    if res.assignment is not None:
        anchor = _vals(res.assignment, enc.input_ids)
    alpha_max = math.exp(t_star) if math.isfinite(t_star) else (
        0.0 if t_star < 0 else math.inf)
    upper = math.exp(res.dual_bound) if math.isfinite(res.dual_bound) else math.inf
    return MaxAlphaResult(alpha_max, t_star, t_star >= 0.0, res.status, upper,
                          anchor, res)
