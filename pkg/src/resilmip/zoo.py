"""Small hand-checkable networks used by the tests, examples and docs.

Every builder returns a fresh Network; the *expected* values quoted in the
docstrings are exact pencil-and-paper results the test-suite asserts against.
"""

from __future__ import annotations

import numpy as np

from .network import LayerKind, LayerSpec, Network


def two_class_linear() -> Network:
    """Identity scores s = (x1, x2) on [0, 1]^2 with a softmax head.

    Strong classification of class 1 at ratio alpha=e means x1 - x2 >= 1,
    which pins the anchor to (1, 0); the dominated set {x2 >= x1} is the
    diagonal and above, so the maximum-perturbation bound is exactly 1 and
    the best attainable ratio for class 1 is exactly e.
    """
    return Network(
        input_dim=2,
        input_bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def three_class_linear() -> Network:
    """Scores s = (x1, x2, 0) on [0, 1]^2: a third, constant rival makes
    k = 2 overlap queries meaningful. At alpha = e the strong region of
    class 1 is the single point (1, 0) and the 2-overlap region is the
    segment {x1 = 0}, so phi(1, e, 2) = 1."""
    return Network(
        input_dim=2,
        input_bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.array([[0.0, 0.0, 0.0],
                                        [1.0, 0.0, 0.0],
                                        [0.0, 1.0, 0.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def identity3() -> Network:
    """Three pass-through scores on [-5, 5]^3 feeding a softmax; handy for
    checking the probability head itself (e.g. scores (-1, 2, 3) map to
    probabilities (0.0132, 0.2654, 0.7214))."""
    return Network(
        input_dim=3,
        input_bounds=np.array([[-5.0, 5.0]] * 3),
        layers=(
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.vstack([np.zeros(3), np.eye(3)])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def relu_mixed_phases() -> Network:
    """2-4-2 rectifier net on [-1, 1]^2 whose hidden nodes hit all three
    phases under plain interval propagation: node 0 is always active
    (im = 3 + x1), node 1 always inactive (im = -3 + x1), nodes 2 and 3
    undecided (x1 +- x2). Scores are the two undecided activations."""
    hidden = LayerSpec(LayerKind.RELU_DENSE,
                       weights=np.array([
                           [3.0, -3.0, 0.0, 0.0],   # bias row
                           [1.0, 1.0, 1.0, 1.0],
                           [0.0, 0.0, 1.0, -1.0],
                       ]))
    out = LayerSpec(LayerKind.LINEAR_OUTPUT,
                    weights=np.array([
                        [0.0, 0.0],
                        [0.0, 0.0],
                        [0.0, 0.0],
                        [1.0, 0.0],
                        [0.0, 1.0],
                    ]))
    return Network(
        input_dim=2,
        input_bounds=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        layers=(hidden, out, LayerSpec(LayerKind.SOFTMAX)),
    )


def lookback_chain() -> Network:
    """One input on [-1, 1] computing z = x - max(0, x) = min(x, 0).

    Plain interval propagation sees the hidden pair r = x + 2, p = max(0, x)
    independently and bounds z by [-2, 1]; a window that re-couples one
    preceding layer proves the exact range [-1, 0]."""
    return Network(
        input_dim=1,
        input_bounds=np.array([[-1.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.RELU_DENSE,
                      weights=np.array([[2.0, 0.0], [1.0, 1.0]])),
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.array([[-2.0], [1.0], [-1.0]])),
        ),
    )


def atan_narrow() -> Network:
    """Single arc-tangent node with pre-activation exactly [-1, 1] (the
    envelope's central band) and a two-class linear read-out."""
    return Network(
        input_dim=1,
        input_bounds=np.array([[-1.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.ATAN_DENSE, weights=np.array([[0.0], [1.0]])),
            LayerSpec(LayerKind.LINEAR_OUTPUT, weights=np.array([[0.0, 0.0], [1.0, -1.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def atan_wide() -> Network:
    """Single arc-tangent node with pre-activation [-3, 3], forcing all three
    envelope regions (reciprocal below -1, central band, reciprocal above 1)."""
    return Network(
        input_dim=1,
        input_bounds=np.array([[-1.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.ATAN_DENSE, weights=np.array([[0.0], [3.0]])),
            LayerSpec(LayerKind.LINEAR_OUTPUT, weights=np.array([[0.0, 0.0], [1.0, -1.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def pool_pairs() -> Network:
    """Four inputs max-pooled in two pairs, read out as two classes."""
    return Network(
        input_dim=4,
        input_bounds=np.array([[0.0, 1.0]] * 4),
        layers=(
            LayerSpec(LayerKind.MAX_POOL, pool_groups=((1, 2), (3, 4))),
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def pool_quad() -> Network:
    """One max over four inputs (a 4-wide pool group) with a linear read-out;
    exercises the pairwise pool decomposition without any query machinery."""
    return Network(
        input_dim=4,
        input_bounds=np.array([[-1.0, 1.0]] * 4),
        layers=(
            LayerSpec(LayerKind.MAX_POOL, pool_groups=((1, 2, 3, 4),)),
            LayerSpec(LayerKind.LINEAR_OUTPUT, weights=np.array([[0.0], [1.0]])),
        ),
    )


def pool_duel() -> Network:
    """Two inputs pooled into y = max(x1, x2), read out as scores (y, 1 - y).

    At ratio e the strong region of class 1 is {y >= 1} and the dominated set
    is {y <= 1/2}, so the maximum-perturbation bound is exactly 1/2 (move the
    larger coordinate from 1 to 1/2)."""
    return Network(
        input_dim=2,
        input_bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
        layers=(
            LayerSpec(LayerKind.MAX_POOL, pool_groups=((1, 2),)),
            LayerSpec(LayerKind.LINEAR_OUTPUT,
                      weights=np.array([[0.0, 1.0], [1.0, -1.0]])),
            LayerSpec(LayerKind.SOFTMAX),
        ),
    )


def relu_deep() -> Network:
    """Two stacked rectifier layers on [-1, 1]^2 with integer-friendly
    weights; no pencil-and-paper bound is quoted — the grid reference is the
    ground truth for this one."""
    first = LayerSpec(LayerKind.RELU_DENSE,
                      weights=np.array([
                          [0.0, 0.0],
                          [1.0, 1.0],
                          [1.0, -1.0],
                      ]))
    second = LayerSpec(LayerKind.RELU_DENSE,
                       weights=np.array([
                           [0.5, -0.25],
                           [1.0, 0.0],
                           [-1.0, 1.0],
                       ]))
    out = LayerSpec(LayerKind.LINEAR_OUTPUT,
                    weights=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    return Network(
        input_dim=2,
        input_bounds=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        layers=(first, second, out, LayerSpec(LayerKind.SOFTMAX)),
    )


def random_relu_net(rng: np.random.Generator, input_dim: int = 2,
                    hidden: tuple[int, ...] = (3,), classes: int = 2,
                    scale: float = 1.0) -> Network:
    """Random rectifier net on [-1, 1]^d ending in a softmax; weights are
    N(0, scale/sqrt(fan_in)) so pre-activations stay moderate."""
    layers: list[LayerSpec] = []
    prev = input_dim
    for width in hidden:
        w = rng.normal(0.0, scale / np.sqrt(prev), size=(prev + 1, width))
        layers.append(LayerSpec(LayerKind.RELU_DENSE, weights=w))
        prev = width
    w = rng.normal(0.0, scale / np.sqrt(prev), size=(prev + 1, classes))
    layers.append(LayerSpec(LayerKind.LINEAR_OUTPUT, weights=w))
    layers.append(LayerSpec(LayerKind.SOFTMAX))
    bounds = np.tile(np.array([-1.0, 1.0]), (input_dim, 1))
    return Network(input_dim=input_dim, input_bounds=bounds, layers=tuple(layers))


FIXTURES = {
    "two_class_linear": two_class_linear,
    "three_class_linear": three_class_linear,
    "identity3": identity3,
    "relu_mixed_phases": relu_mixed_phases,
    "lookback_chain": lookback_chain,
    "atan_narrow": atan_narrow,
    "atan_wide": atan_wide,
    "pool_pairs": pool_pairs,
    "pool_quad": pool_quad,
    "pool_duel": pool_duel,
    "relu_deep": relu_deep,
}
