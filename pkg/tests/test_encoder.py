"""MIP gadgets and query models: indicator semantics, envelope containment,
gating, warm starts, branch priorities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilmip import zoo
from resilmip.dataflow import Phase, propagate_intervals
from resilmip.encoder import (
    ATAN_APPROX_ERR,
    EncodingError,
    QueryKind,
    QuerySpec,
    add_gated,
    build_warm_start,
    encode_atan,
    encode_bound_probe,
    encode_maxpool,
    encode_min_perturbation_at,
    encode_network_eval,
    encode_query,
    encode_relu,
    encode_strong_classification,
)
from resilmip.mipmodel import MipModel, ObjSense, RowSense, check_feasible
from resilmip.network import forward
from resilmip.solver import SolveConfig, SolveStatus, solve

_SECANT_CURVE = 2 * 0.273 / 8.0  # |q''| h^2 / 8 with the h factored out


def _relu_bench(im_value: float, big_m: float, force_b: int):
    """Feasibility of the six-row rectifier gadget with the indicator pinned."""
    m = MipModel("bench")
    x = m.add_variable("x", 0.0, big_m)
    im = m.add_variable("im", -big_m, big_m)
    m.add_constraint("fix", [(im, 1.0)], RowSense.EQ, im_value)
    g = encode_relu(m, x, im, Phase.UNDECIDED, big_m, "R")
    m.add_constraint("pin", [(g.b_id, 1.0)], RowSense.EQ, float(force_b))
    return solve(m.freeze(), SolveConfig()), x


class TestReluGadget:
    @pytest.mark.parametrize("big_m", [1.0, 3.0])
    def test_correct_indicator_reproduces_the_function(self, big_m):
        for v in np.linspace(-big_m, big_m, 21):
            r, x = _relu_bench(float(v), big_m, 1 if v >= 0 else 0)
            assert r.status is SolveStatus.OPTIMAL
            assert r.assignment[x] == pytest.approx(max(0.0, v), abs=1e-9)

    @pytest.mark.parametrize("big_m", [1.0, 3.0])
    def test_wrong_indicator_is_infeasible(self, big_m):
        for v in np.linspace(-big_m, big_m, 21):
            if v == 0.0:
                continue  # both phases meet at the kink
            r, _ = _relu_bench(float(v), big_m, 0 if v >= 0 else 1)
            assert r.status is SolveStatus.INFEASIBLE, v

    def test_kink_accepts_both_indicators(self):
        for b in (0, 1):
            r, x = _relu_bench(0.0, 3.0, b)
            assert r.status is SolveStatus.OPTIMAL
            assert r.assignment[x] == pytest.approx(0.0, abs=1e-9)

    def test_fixed_phases_need_no_binary(self):
        m = MipModel("fixed")
        x = m.add_variable("x", 0.0, 5.0)
        im = m.add_variable("im", 1.0, 5.0)
        g = encode_relu(m, x, im, Phase.ALWAYS_ACTIVE, 5.0, "Ra")
        assert g.b_id is None
        x2 = m.add_variable("x2", 0.0, 0.0)
        im2 = m.add_variable("im2", -5.0, -1.0)
        g2 = encode_relu(m, x2, im2, Phase.ALWAYS_INACTIVE, 5.0, "Ri")
        assert g2.b_id is None
        assert not m.dense_arrays().binary_ids

    def test_unusable_big_m_rejected(self):
        m = MipModel("bad")
        x = m.add_variable("x", 0.0, 1.0)
        im = m.add_variable("im", -1.0, 1.0)
        with pytest.raises(EncodingError):
            encode_relu(m, x, im, Phase.UNDECIDED, 0.0, "R")
        with pytest.raises(EncodingError):
            encode_relu(m, x, im, Phase.UNDECIDED, math.inf, "R")

    @given(
        lo=st.floats(-10.0, -0.01),
        hi=st.floats(0.01, 10.0),
        theta=st.floats(0.0, 1.0),
    )
    @settings(max_examples=60)
    def test_exact_point_always_feasible(self, lo, hi, theta):
        v = lo + theta * (hi - lo)
        big_m = max(abs(lo), hi)
        m = MipModel("h")
        x = m.add_variable("x", 0.0, big_m)
        im = m.add_variable("im", lo, hi)
        g = encode_relu(m, x, im, Phase.UNDECIDED, big_m, "R")
        asg = {im: v, x: max(0.0, v), g.b_id: 1.0 if v >= 0 else 0.0}
        assert check_feasible(m, asg, 1e-9)


class TestMaxPool:
    def _pool_model(self, vals, lo=-1.0, hi=1.0):
        m = MipModel("pool")
        ops = []
        for i, v in enumerate(vals):
            vid = m.add_variable(f"u{i}", lo, hi)
            m.add_constraint(f"fix{i}", [(vid, 1.0)], RowSense.EQ, float(v))
            ops.append((vid, lo, hi))
        y = m.add_variable("y", lo, hi)
        pairs = encode_maxpool(m, y, ops, "P")
        return m, y, pairs

    @pytest.mark.parametrize("sense", [ObjSense.MINIMIZE, ObjSense.MAXIMIZE])
    def test_pair_and_quad_agree_with_brute_max(self, sense, rng):
        for n in (2, 4):
            for _ in range(10):
                vals = rng.uniform(-1.0, 1.0, size=n)
                m, y, _ = self._pool_model(vals)
                m.set_objective([(y, 1.0)], sense)
                r = solve(m.freeze(), SolveConfig())
                assert r.status is SolveStatus.OPTIMAL
                assert r.objective == pytest.approx(float(vals.max()), abs=1e-7)

    def test_dominated_operand_collapses_the_pair(self):
        m = MipModel("dom")
        u = m.add_variable("u", 5.0, 6.0)
        v = m.add_variable("v", 0.0, 1.0)
        y = m.add_variable("y", 5.0, 6.0)
        pairs = encode_maxpool(m, y, [(u, 5.0, 6.0), (v, 0.0, 1.0)], "P")
        assert pairs[0].b_id is None
        assert pairs[0].keep == "left"
        assert not m.dense_arrays().binary_ids

    def test_quad_builds_three_pairs(self):
        m, _, pairs = self._pool_model([0.1, 0.2, 0.3, 0.4])
        assert len(pairs) == 3

    def test_bad_group_size_rejected(self):
        m = MipModel("bad")
        ops = [(m.add_variable(f"u{i}", 0.0, 1.0), 0.0, 1.0) for i in range(3)]
        y = m.add_variable("y", 0.0, 1.0)
        with pytest.raises(EncodingError):
            encode_maxpool(m, y, ops, "P")


def _atan_extreme(im_lo, im_hi, im_value, sense, segments=8):
    m = MipModel("atanbench")
    x = m.add_variable("x", -math.pi / 2 - 1.0, math.pi / 2 + 1.0)
    im = m.add_variable("im", im_lo, im_hi)
    m.add_constraint("fix", [(im, 1.0)], RowSense.EQ, float(im_value))
    encode_atan(m, x, im, im_lo, im_hi, segments, "T")
    m.set_objective([(x, 1.0)], sense)
    r = solve(m.freeze(), SolveConfig())
    assert r.status is SolveStatus.OPTIMAL
    return r.objective


class TestAtanEnvelope:
    def test_central_band_contains_atan_and_stays_narrow(self):
        h = 2.0 / 8.0
        half = ATAN_APPROX_ERR + _SECANT_CURVE * h * h
        for v in np.linspace(-1.0, 1.0, 41):
            lo = _atan_extreme(-1.0, 1.0, v, ObjSense.MINIMIZE)
            hi = _atan_extreme(-1.0, 1.0, v, ObjSense.MAXIMIZE)
            truth = math.atan(v)
            assert lo - 1e-7 <= truth <= hi + 1e-7
            assert hi - lo <= 2.0 * half + 1e-6

    def test_outer_region_contains_atan(self):
        for v in (1.2, 2.0, 2.9):
            lo = _atan_extreme(1.1, 3.0, v, ObjSense.MINIMIZE)
            hi = _atan_extreme(1.1, 3.0, v, ObjSense.MAXIMIZE)
            assert lo - 1e-7 <= math.atan(v) <= hi + 1e-7
            assert hi - lo <= 0.05

    def test_three_regions_cover_a_wide_interval(self):
        m = MipModel("wide")
        x = m.add_variable("x", -2.0, 2.0)
        im = m.add_variable("im", -3.0, 3.0)
        g = encode_atan(m, x, im, -3.0, 3.0, 8, "T")
        assert [r.kind for r in g.regions] == ["neg", "mid", "pos"]
        assert all(r.gate_id is not None for r in g.regions)
        assert g.regions[0].im_lo == -3.0 and g.regions[-1].im_hi == 3.0
        for left, right in zip(g.regions, g.regions[1:]):
            assert left.im_hi == right.im_lo
        # gating works end to end on points from each region
        for v in (-2.5, 0.3, 2.5):
            lo = _atan_extreme(-3.0, 3.0, v, ObjSense.MINIMIZE)
            hi = _atan_extreme(-3.0, 3.0, v, ObjSense.MAXIMIZE)
            assert lo - 1e-7 <= math.atan(v) <= hi + 1e-7

    def test_single_narrow_region_needs_no_gate(self):
        m = MipModel("narrow")
        x = m.add_variable("x", -2.0, 2.0)
        im = m.add_variable("im", -0.8, 0.9)
        g = encode_atan(m, x, im, -0.8, 0.9, 8, "T")
        assert len(g.regions) == 1
        assert g.regions[0].kind == "mid"
        assert g.regions[0].gate_id is None

    def test_degenerate_interval_pins_the_output(self):
        m = MipModel("deg")
        x = m.add_variable("x", -2.0, 2.0)
        im = m.add_variable("im", 0.5, 0.5)
        g = encode_atan(m, x, im, 0.5, 0.5 + 1e-13, 8, "T")
        assert g.regions == []
        m.set_objective([(x, 1.0)], ObjSense.MAXIMIZE)
        r = solve(m.freeze(), SolveConfig())
        assert r.objective == pytest.approx(math.atan(0.5), abs=1e-9)

    def test_unbounded_preactivation_rejected(self):
        m = MipModel("unb")
        x = m.add_variable("x", -2.0, 2.0)
        im = m.add_variable("im", 0.0, math.inf)
        with pytest.raises(EncodingError):
            encode_atan(m, x, im, 0.0, math.inf, 8, "T")


class TestAddGated:
    def test_no_gate_is_a_plain_row(self):
        m = MipModel("g")
        x = m.add_variable("x", 0.0, 4.0)
        add_gated(m, "r", [(x, 1.0)], RowSense.LE, 1.0, None)
        assert not check_feasible(m, {x: 2.0}, 1e-9)
        assert check_feasible(m, {x: 0.5}, 1e-9)

    def test_open_gate_enforces_and_closed_gate_releases(self):
        m = MipModel("g")
        x = m.add_variable("x", 0.0, 4.0)
        b = m.add_binary("b")
        add_gated(m, "r", [(x, 1.0)], RowSense.LE, 1.0, b)
        assert check_feasible(m, {x: 4.0, b: 0.0}, 1e-9)  # vacuous at the bound
        assert not check_feasible(m, {x: 4.0, b: 1.0}, 1e-9)
        assert check_feasible(m, {x: 1.0, b: 1.0}, 1e-9)

    def test_ge_direction(self):
        m = MipModel("g")
        x = m.add_variable("x", -3.0, 3.0)
        b = m.add_binary("b")
        add_gated(m, "r", [(x, 1.0)], RowSense.GE, 2.0, b)
        assert check_feasible(m, {x: -3.0, b: 0.0}, 1e-9)
        assert not check_feasible(m, {x: 0.0, b: 1.0}, 1e-9)

    def test_equality_must_be_split(self):
        m = MipModel("g")
        x = m.add_variable("x", 0.0, 1.0)
        b = m.add_binary("b")
        with pytest.raises(EncodingError):
            add_gated(m, "r", [(x, 1.0)], RowSense.EQ, 0.5, b)

    def test_unbounded_expression_rejected(self):
        m = MipModel("g")
        x = m.add_variable("x", 0.0, math.inf)
        b = m.add_binary("b")
        with pytest.raises(EncodingError):
            add_gated(m, "r", [(x, 1.0)], RowSense.LE, 1.0, b)


class TestStrongClassification:
    def test_rows_encode_the_log_ratio_test(self):
        m = MipModel("sc")
        s = [m.add_variable(f"s{j}", -5.0, 5.0) for j in range(3)]
        rows = encode_strong_classification(m, s, 0, math.e, "SC")
        assert len(rows) == 2
        assert check_feasible(m, {s[0]: 2.0, s[1]: 1.0, s[2]: 0.5}, 1e-9)
        assert not check_feasible(m, {s[0]: 2.0, s[1]: 1.5, s[2]: 0.5}, 1e-9)


class TestBoundProbe:
    def test_window_recovers_the_exact_output_range(self):
        net = zoo.lookback_chain()
        bounds = propagate_intervals(net)
        vals = {}
        for maximize in (False, True):
            model, _ = encode_bound_probe(net, bounds, 2, 0, 2, maximize=maximize)
            r = solve(model, SolveConfig())
            assert r.status is SolveStatus.OPTIMAL
            vals[maximize] = r.objective
        assert vals[False] == pytest.approx(-1.0, abs=1e-7)
        assert vals[True] == pytest.approx(0.0, abs=1e-7)

    def test_probe_rejects_pool_targets(self):
        net = zoo.pool_pairs()
        bounds = propagate_intervals(net)
        with pytest.raises(EncodingError):
            encode_bound_probe(net, bounds, 1, 0, 1, maximize=True)


class TestQueryModels:
    def test_max_perturbation_reaches_the_known_optimum(self):
        net = zoo.two_class_linear()
        enc = encode_query(net, propagate_intervals(net),
                           QuerySpec(QueryKind.MAX_PERTURBATION, m=1, alpha=math.e, k=1))
        r = solve(enc.model, SolveConfig())
        assert r.status is SolveStatus.OPTIMAL
        assert r.objective == pytest.approx(1.0, abs=1e-7)
        # the witness pair must be readable off the assignment
        a = [r.assignment[v] for v in enc.input_ids]
        p = [r.assignment[v] for v in enc.pert_input_ids]
        assert a == pytest.approx([1.0, 0.0], abs=1e-6)
        assert p[1] >= p[0] - 1e-7

    def test_local_robustness_budget_flips_feasibility(self):
        net = zoo.two_class_linear()
        bounds = propagate_intervals(net)
        anchor = np.array([1.0, 0.0])
        tight = encode_query(net, bounds, QuerySpec(
            QueryKind.LOCAL_ROBUSTNESS, m=1, k=1, a=anchor, delta=0.9))
        loose = encode_query(net, bounds, QuerySpec(
            QueryKind.LOCAL_ROBUSTNESS, m=1, k=1, a=anchor, delta=1.1))
        assert solve(tight.model, SolveConfig()).status is SolveStatus.INFEASIBLE
        assert solve(loose.model, SolveConfig()).status is SolveStatus.OPTIMAL

    def test_max_alpha_solves_the_margin(self):
        net = zoo.two_class_linear()
        enc = encode_query(net, propagate_intervals(net),
                           QuerySpec(QueryKind.MAX_ALPHA, m=1))
        r = solve(enc.model, SolveConfig())
        assert r.status is SolveStatus.OPTIMAL
        assert r.objective == pytest.approx(1.0, abs=1e-7)  # alpha_max = e^1

    def test_fixed_anchor_restriction(self):
        net = zoo.two_class_linear()
        enc = encode_min_perturbation_at(
            net, propagate_intervals(net), np.array([1.0, 0.0]), 1, 1)
        r = solve(enc.model, SolveConfig())
        assert r.status is SolveStatus.OPTIMAL
        assert r.objective == pytest.approx(1.0, abs=1e-7)

    def test_validation_errors(self):
        net = zoo.two_class_linear()
        bounds = propagate_intervals(net)
        bad = [
            QuerySpec(QueryKind.MAX_PERTURBATION, m=0),
            QuerySpec(QueryKind.MAX_PERTURBATION, m=3),
            QuerySpec(QueryKind.MAX_PERTURBATION, m=1, alpha=0.5),
            QuerySpec(QueryKind.MAX_PERTURBATION, m=1, k=2),
            QuerySpec(QueryKind.LOCAL_ROBUSTNESS, m=1),
            QuerySpec(QueryKind.LOCAL_ROBUSTNESS, m=1, a=np.array([0.5, 0.5]),
                      delta=-0.1),
            QuerySpec(QueryKind.LOCAL_ROBUSTNESS, m=1, a=np.array([2.0, 0.0]),
                      delta=0.1),
            QuerySpec(QueryKind.LOCAL_ROBUSTNESS, m=1, a=np.array([0.5]),
                      delta=0.1),
        ]
        for q in bad:
            with pytest.raises(EncodingError):
                encode_query(net, bounds, q)

    def test_query_requires_a_softmax_head(self):
        net = zoo.lookback_chain()
        with pytest.raises(EncodingError):
            encode_query(net, propagate_intervals(net),
                         QuerySpec(QueryKind.MAX_PERTURBATION, m=1))


class TestBranchPriorities:
    def test_earlier_layers_branch_first(self):
        net = zoo.relu_mixed_phases()
        enc = encode_query(net, propagate_intervals(net),
                           QuerySpec(QueryKind.MAX_PERTURBATION, m=1, alpha=math.e))
        total = net.num_layers
        for copy in (enc.base, enc.pert):
            assert copy.binary_layer  # the fixture has undecided nodes
            for vid, pos in copy.binary_layer.items():
                assert enc.model.variables[vid].branch_priority == total - pos
        for cid in enc.class_sel.values():
            assert enc.model.variables[cid].branch_priority == 0

    def test_atan_binaries_carry_their_layer_position(self):
        net = zoo.atan_wide()
        model, copy = encode_network_eval(net, propagate_intervals(net))
        assert copy.binary_layer
        for vid, pos in copy.binary_layer.items():
            assert pos == 1
            assert model.variables[vid].branch_priority == net.num_layers - 1


class TestWarmStart:
    @pytest.mark.parametrize("name,m,alpha,a,eps", [
        ("two_class_linear", 1, math.e, [1.0, 0.0], [-0.5, 0.5]),
        ("relu_mixed_phases", 1, math.e, [1.0, 1.0], [0.0, -1.0]),
        ("atan_wide", 1, 1.0, [1.0], [-1.0]),
        ("pool_pairs", 1, 1.0, [1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]),
    ])
    def test_trace_assignment_satisfies_every_row(self, name, m, alpha, a, eps):
        net = zoo.FIXTURES[name]()
        enc = encode_query(net, propagate_intervals(net),
                           QuerySpec(QueryKind.MAX_PERTURBATION, m=m, alpha=alpha))
        ws = build_warm_start(enc, net, np.array(a), np.array(eps))
        assert check_feasible(enc.model, ws, 1e-6)
        assert len(ws) == len(enc.model.variables)

    def test_warm_start_objective_matches_the_step(self):
        net = zoo.two_class_linear()
        enc = encode_query(net, propagate_intervals(net),
                           QuerySpec(QueryKind.MAX_PERTURBATION, m=1, alpha=math.e))
        ws = build_warm_start(enc, net, np.array([1.0, 0.0]), np.array([-0.5, 0.5]))
        assert sum(ws[f] for f in enc.eps_abs_ids) == pytest.approx(1.0)
