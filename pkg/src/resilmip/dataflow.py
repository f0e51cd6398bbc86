"""Interval analysis over a network: per-node value bounds, activation phases,
and big-M magnitudes, plus an exact MIP-backed bound tightener.

Bounds are sound: every exact forward trace of an in-domain input lies inside
them. Pre-activation bounds of a dense node sum the per-predecessor extremes
min/max(w*lo, w*hi); the bias row contributes exactly its weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import IO

import numpy as np

from .network import DENSE_KINDS, LayerKind, Network

# Inflation applied to big-M magnitudes so gadget rows never bind at the
# exact interval edge: M = max(|im_lo|, |im_hi|) * (1 + REL) + ABS.
BIG_M_REL = 1e-7
BIG_M_ABS = 1e-9

# Slack when adopting MIP-tightened bounds, guarding against LP round-off
# pushing a bound past the true extreme.
ADOPT_SLACK = 1e-7


class Phase(IntEnum):
    """ReLU activation phase decided from pre-activation bounds."""

    ALWAYS_INACTIVE = 0
    ALWAYS_ACTIVE = 1
    UNDECIDED = 2


@dataclass
class LayerBounds:
    """Bounds for one layer: outputs always, pre-activations for dense kinds."""

    lo: np.ndarray
    hi: np.ndarray
    im_lo: np.ndarray | None = None
    im_hi: np.ndarray | None = None
    phase: np.ndarray | None = None  # Phase codes, relu_dense layers only
    big_m: np.ndarray | None = None  # dense layers only

    def copy(self) -> "LayerBounds":
        dup = lambda a: None if a is None else a.copy()
        return LayerBounds(
            lo=self.lo.copy(),
            hi=self.hi.copy(),
            im_lo=dup(self.im_lo),
            im_hi=dup(self.im_hi),
            phase=dup(self.phase),
            big_m=dup(self.big_m),
        )


@dataclass
class IntervalBounds:
    """Input box plus one LayerBounds per layer, aligned with net.layers."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    layers: list[LayerBounds] = field(default_factory=list)

    def x_lo(self, pos: int) -> np.ndarray:
        """Output lower bounds of layer position pos (0 = the input box)."""
        return self.input_lo if pos == 0 else self.layers[pos - 1].lo

    def x_hi(self, pos: int) -> np.ndarray:
        return self.input_hi if pos == 0 else self.layers[pos - 1].hi

    def copy(self) -> "IntervalBounds":
        return IntervalBounds(
            input_lo=self.input_lo.copy(),
            input_hi=self.input_hi.copy(),
            layers=[lb.copy() for lb in self.layers],
        )


def big_m_for(im_lo: np.ndarray, im_hi: np.ndarray) -> np.ndarray:
    mag = np.maximum(np.abs(im_lo), np.abs(im_hi))
    return mag * (1.0 + BIG_M_REL) + BIG_M_ABS


def _affine_bounds(w: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = np.clip(w[1:], 0.0, None)
    neg = np.clip(w[1:], None, 0.0)
    im_lo = w[0] + lo @ pos + hi @ neg
    im_hi = w[0] + hi @ pos + lo @ neg
    return im_lo, im_hi


def relu_phases(im_lo: np.ndarray, im_hi: np.ndarray) -> np.ndarray:
    phase = np.full(im_lo.shape, Phase.UNDECIDED, dtype=np.int8)
    phase[im_hi <= 0.0] = Phase.ALWAYS_INACTIVE
    phase[im_lo >= 0.0] = Phase.ALWAYS_ACTIVE  # wins on the degenerate [0, 0]
    return phase


def _layer_bounds(spec, lo: np.ndarray, hi: np.ndarray) -> LayerBounds:
    if spec.kind in DENSE_KINDS:
        im_lo, im_hi = _affine_bounds(spec.weights, lo, hi)
        out = LayerBounds(lo=im_lo, hi=im_hi, im_lo=im_lo, im_hi=im_hi,
                          big_m=big_m_for(im_lo, im_hi))
        if spec.kind is LayerKind.RELU_DENSE:
            out.phase = relu_phases(im_lo, im_hi)
            out.lo = np.maximum(0.0, im_lo)
            out.hi = np.maximum(0.0, im_hi)
        elif spec.kind is LayerKind.ATAN_DENSE:
            out.lo = np.arctan(im_lo)
            out.hi = np.arctan(im_hi)
        else:
            out.lo = im_lo.copy()
            out.hi = im_hi.copy()
        return out
    if spec.kind is LayerKind.MAX_POOL:
        g_lo = np.array([max(lo[i - 1] for i in g) for g in spec.pool_groups])
        g_hi = np.array([max(hi[i - 1] for i in g) for g in spec.pool_groups])
        return LayerBounds(lo=g_lo, hi=g_hi)
    # softmax outputs sit in [0, 1]; these bounds are never encoded
    n = lo.shape[0]
    return LayerBounds(lo=np.zeros(n), hi=np.ones(n))


def propagate_intervals(net: Network) -> IntervalBounds:
    """Push the input box through every layer."""
    bounds = IntervalBounds(
        input_lo=net.input_bounds[:, 0].copy(),
        input_hi=net.input_bounds[:, 1].copy(),
    )
    lo, hi = bounds.input_lo, bounds.input_hi
    for spec in net.layers:
        lb = _layer_bounds(spec, lo, hi)
        bounds.layers.append(lb)
        lo, hi = lb.lo, lb.hi
    return bounds


def _refresh_outputs(spec, lb: LayerBounds) -> None:
    """Recompute a dense layer's output bounds/phase/big_m from its im bounds."""
    lb.big_m = big_m_for(lb.im_lo, lb.im_hi)
    if spec.kind is LayerKind.RELU_DENSE:
        lb.phase = relu_phases(lb.im_lo, lb.im_hi)
        lb.lo = np.maximum(0.0, lb.im_lo)
        lb.hi = np.maximum(0.0, lb.im_hi)
    elif spec.kind is LayerKind.ATAN_DENSE:
        lb.lo = np.arctan(lb.im_lo)
        lb.hi = np.arctan(lb.im_hi)
    else:
        lb.lo = lb.im_lo.copy()
        lb.hi = lb.im_hi.copy()


def tighten_lookback(
    net: Network,
    bounds: IntervalBounds,
    depth: int = 2,
    config=None,
    workers: int = 1,
) -> IntervalBounds:
    """Tighten pre-activation intervals with per-node window MIPs.

    For each dense node at layer position l >= 2, maximizes and minimizes its
    pre-activation over an exact encoding of the `depth` preceding layers,
    boxing everything older at the current bounds. A tightened value is
    adopted only when the window solve is Optimal; budget exhaustion keeps the
    old bound. Results are always pointwise contained in the inputs.
    """
    from . import encoder  # local import: encoder depends on these types
    from .solver import SolveConfig, SolveStatus, solve

    if depth < 1:
        raise ValueError("depth must be >= 1")
    cfg = config if config is not None else SolveConfig(node_limit=10_000)

    work = bounds.copy()
    for pos, spec in enumerate(net.layers, start=1):
        lb = work.layers[pos - 1]
        if spec.kind not in DENSE_KINDS:
            if spec.kind is LayerKind.MAX_POOL:
                # no pre-activation to probe; refresh from tightened predecessors
                fresh = _layer_bounds(spec, work.x_lo(pos - 1), work.x_hi(pos - 1))
                lb.lo = np.maximum(lb.lo, fresh.lo)
                lb.hi = np.minimum(lb.hi, fresh.hi)
                np.minimum(lb.lo, lb.hi, out=lb.lo)  # guard numeric crossings
            continue
        if pos == 1:
            continue  # window over the input box reproduces the plain bounds

        def probe(node: int) -> tuple[int, float, float]:
            new_lo, new_hi = lb.im_lo[node], lb.im_hi[node]
            for sense_max in (False, True):
                model, im_var = encoder.encode_bound_probe(
                    net, work, pos, node, depth, maximize=sense_max
                )
                res = solve(model, cfg)
                if res.status is SolveStatus.OPTIMAL:
                    slack = ADOPT_SLACK * max(1.0, abs(res.objective))
                    if sense_max:
                        new_hi = min(new_hi, res.objective + slack)
                    else:
                        new_lo = max(new_lo, res.objective - slack)
            return node, new_lo, min(new_hi, max(new_lo, new_hi))

        n_nodes = lb.im_lo.shape[0]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(probe, range(n_nodes)))
        else:
            results = [probe(i) for i in range(n_nodes)]
        for node, new_lo, new_hi in results:
            if new_lo > new_hi:  # numeric crossing: keep the sound midpoint
                mid = 0.5 * (new_lo + new_hi)
                new_lo = new_hi = mid
            lb.im_lo[node] = new_lo
            lb.im_hi[node] = new_hi
        _refresh_outputs(spec, lb)
    return work


def write_bounds_dump(net: Network, bounds: IntervalBounds, out: IO[str]) -> None:
    """Write one line per node: layer, node, kind, im/x bounds, phase, big_m."""
    out.write("# layer\tnode\tkind\tim_lo\tim_hi\tlo\thi\tphase\tbig_m\n")
    fmt = lambda v: "-" if v is None else f"{v:.6g}"
    for i in range(net.input_dim):
        out.write(
            f"0\t{i + 1}\tinput\t-\t-\t{fmt(bounds.input_lo[i])}\t"
            f"{fmt(bounds.input_hi[i])}\t-\t-\n"
        )
    phase_names = {
        int(Phase.ALWAYS_INACTIVE): "always_inactive",
        int(Phase.ALWAYS_ACTIVE): "always_active",
        int(Phase.UNDECIDED): "undecided",
    }
    for pos, spec in enumerate(net.layers, start=1):
        lb = bounds.layers[pos - 1]
        for i in range(lb.lo.shape[0]):
            im_lo = fmt(lb.im_lo[i]) if lb.im_lo is not None else "-"
            im_hi = fmt(lb.im_hi[i]) if lb.im_hi is not None else "-"
            phase = phase_names[int(lb.phase[i])] if lb.phase is not None else "-"
            big_m = fmt(lb.big_m[i]) if lb.big_m is not None else "-"
            out.write(
                f"{pos}\t{i + 1}\t{spec.kind.value}\t{im_lo}\t{im_hi}\t"
                f"{fmt(lb.lo[i])}\t{fmt(lb.hi[i])}\t{phase}\t{big_m}\n"
            )


def domain_samples(net: Network, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the input box, shape (n, input_dim)."""
    lo = net.input_bounds[:, 0]
    hi = net.input_bounds[:, 1]
    return lo + rng.random((n, net.input_dim)) * (hi - lo)
