"""Command-line front end.

Subcommands: eval (forward pass), bounds (interval propagation, optionally
window-tightened), verify (local robustness; exit code carries the verdict),
phi (maximum-perturbation bound), xi (network resilience), max-alpha
(best attainable dominance ratio), export (write a query as an MPS file).

Exit codes: 0 success (for verify: ROBUST), 10 verify found a violation,
20 the verdict or bound could not be settled within the solver's limits,
1 runtime failure, 2 usage error. All numbers print with 6 significant
digits; --json-out writes the same result as a machine-readable sidecar.
The RESILMIP_WORKERS environment variable sets the default thread count.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import zoo
from .dataflow import propagate_intervals, tighten_lookback, write_bounds_dump
from .encoder import EncodingError, QueryKind, QuerySpec, encode_query
from .mipmodel import ModelError, export_mps
from .network import (
    Network,
    NetworkFormatError,
    NetworkValidationError,
    class_scores,
    forward,
    load_network,
)
from .resilience import (
    Verdict,
    check_local_robustness,
    compute_max_alpha,
    compute_phi,
    compute_xi,
)
from .solver import SolveConfig

EXIT_OK = 0
EXIT_VIOLATED = 10
EXIT_UNKNOWN = 20
EXIT_ERROR = 1


def _g(x: float) -> str:
    return f"{x:.6g}"


def _vec(v) -> str:
    return "(" + ", ".join(_g(float(t)) for t in v) + ")"


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RESILMIP_WORKERS", "1")))
    except ValueError:
        return 1


def _load_net(ref: str) -> Network:
    if ref in zoo.FIXTURES:
        return zoo.FIXTURES[ref]()
    path = Path(ref)
    if path.exists():
        return load_network(path)
    raise NetworkFormatError(
        f"{ref!r} is neither a readable file nor one of the built-in nets "
        f"({', '.join(sorted(zoo.FIXTURES))})"
    )


def _parse_input(text: str, dim: int) -> np.ndarray:
    """An input point: inline comma/space-separated reals, or a file holding a
    JSON array or whitespace-separated numbers."""
    raw = text
    path = Path(text)
    if path.exists():
        raw = path.read_text().strip()
        if raw.startswith("["):
            vals = [float(t) for t in json.loads(raw)]
            return _check_dim(vals, dim, text)
    try:
        vals = [float(t) for t in raw.replace(",", " ").split()]
    except ValueError as e:
        raise NetworkFormatError(f"cannot parse input point {text!r}: {e}") from None
    return _check_dim(vals, dim, text)


def _check_dim(vals, dim: int, src: str) -> np.ndarray:
    if len(vals) != dim:
        raise NetworkFormatError(
            f"input point {src!r} has {len(vals)} values, expected {dim}")
    return np.array(vals, dtype=np.float64)


def _solve_config(args) -> SolveConfig:
    return SolveConfig(
        workers=args.workers,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        mip_gap=args.mip_gap,
        log_interval=1.0 if args.verbose else None,
    )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [float(t) for t in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit_json(args, payload: dict) -> None:
    if getattr(args, "json_out", None):
        Path(args.json_out).write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=_default_workers(),
                   help="solver threads (default from RESILMIP_WORKERS)")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--mip-gap", type=float, default=1e-6)
    p.add_argument("--segments", type=int, default=8,
                   help="breakpoints per arc-tangent envelope region")
    p.add_argument("--lookback", type=int, nargs="?", const=2, default=None,
                   metavar="DEPTH", help="tighten bounds with window models "
                   "of this depth before encoding (default depth 2)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", required=True,
                   help="network JSON file or built-in fixture name")
    p.add_argument("--json-out", default=None, metavar="FILE",
                   help="also write the result as JSON")
    p.add_argument("--verbose", action="store_true", help="log solver progress")


def cmd_eval(args) -> int:
    net = _load_net(args.net)
    point = _parse_input(args.input, net.input_dim)
    trace = forward(net, point)
    out = trace.outputs
    scores = class_scores(net, point)
    top = int(np.argmax(scores)) + 1
    print(f"input    {_vec(point)}")
    print(f"scores   {_vec(scores)}")
    if net.ends_in_softmax:
        print(f"probs    {_vec(out)}")
    print(f"class    {top}")
    _emit_json(args, {"input": point, "scores": scores,
                      "outputs": out, "top_class": top})
    return EXIT_OK


def cmd_bounds(args) -> int:
    net = _load_net(args.net)
    bounds = propagate_intervals(net)
    if args.lookback is not None:
        bounds = tighten_lookback(net, bounds, depth=args.lookback,
                                  workers=args.workers)
    buf = io.StringIO()
    write_bounds_dump(net, bounds, buf)
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    _emit_json(args, {
        "layers": [
            {"lo": lb.lo, "hi": lb.hi, "im_lo": lb.im_lo, "im_hi": lb.im_hi}
            for lb in bounds.layers
        ]
    })
    return EXIT_OK


def cmd_verify(args) -> int:
    net = _load_net(args.net)
    point = _parse_input(args.input, net.input_dim)
    res = check_local_robustness(
        net, point, args.delta, m=args.cls, k=args.k,
        config=_solve_config(args), lookback=args.lookback, segments=args.segments)
    print(f"verdict  {res.verdict.value}")
    print(f"class    {res.m}")
    print(f"delta    {_g(res.delta)}")
    if res.eps is not None and res.verdict is Verdict.VIOLATED:
        print(f"eps      {_vec(res.eps)}")
        print(f"point    {_vec(res.perturbed)}")
        print(f"cost     {_g(float(np.sum(np.abs(res.eps))))}")
    if res.note:
        print(f"note     {res.note}")
    payload = {"verdict": res.verdict.value, "class": res.m,
               "delta": res.delta, "k": res.k, "eps": res.eps,
               "perturbed": res.perturbed, "note": res.note}
    _emit_json(args, payload)
    if args.witness_out and res.eps is not None:
        Path(args.witness_out).write_text(
            json.dumps(_jsonable({"eps": res.eps, "perturbed": res.perturbed,
                                  "anchor": point}), indent=2) + "\n")
        print(f"witness  {args.witness_out}")
    if res.verdict is Verdict.ROBUST:
        return EXIT_OK
    if res.verdict is Verdict.VIOLATED:
        return EXIT_VIOLATED
    return EXIT_UNKNOWN


def _print_phi(res) -> None:
    print(f"phi      {_g(res.phi)}")
    print(f"status   {res.status.value}")
    print(f"exact    {'yes' if res.exact else 'no'}")
    if not res.exact and math.isfinite(res.lower_bound):
        print(f"bound    {_g(res.lower_bound)}")
    if math.isinf(res.phi) and res.status.value == "infeasible":
        print(f"note     infeasible at alpha={_g(res.alpha)}: no input is "
              "strongly classified (or no overlap point exists); "
              "phi is vacuously infinite")
    if res.anchor is not None:
        print(f"anchor   {_vec(res.anchor)}")
        print(f"eps      {_vec(res.eps)}")
        print(f"point    {_vec(res.perturbed)}")
    if res.witness_exact is not None:
        print(f"witness  {'validated' if res.witness_exact else 'envelope-relaxed'}")
    if res.solve is not None:
        print(f"nodes    {res.solve.nodes_explored}")
        print(f"time     {_g(res.solve.wall_time)}s")


def _phi_payload(res) -> dict:
    return {
        "m": res.m, "alpha": res.alpha, "k": res.k, "phi": res.phi,
        "status": res.status.value, "exact": res.exact,
        "witness_exact": res.witness_exact,
        "lower_bound": res.lower_bound,
        "anchor": res.anchor, "eps": res.eps, "perturbed": res.perturbed,
        "nodes": res.solve.nodes_explored if res.solve else 0,
        "wall_time": res.solve.wall_time if res.solve else 0.0,
    }


def cmd_phi(args) -> int:
    net = _load_net(args.net)
    res = compute_phi(net, args.cls, args.alpha, args.k,
                      config=_solve_config(args), lookback=args.lookback,
                      segments=args.segments)
    _print_phi(res)
    _emit_json(args, _phi_payload(res))
    return EXIT_OK if res.exact else EXIT_UNKNOWN


def cmd_xi(args) -> int:
    net = _load_net(args.net)
    res = compute_xi(net, args.alpha, args.k, config=_solve_config(args),
                     lookback=args.lookback, segments=args.segments)
    print(f"xi       {_g(res.xi)}")
    print(f"status   {res.status.value}")
    if res.weakest_class is not None:
        print(f"weakest  class {res.weakest_class}")
    if res.excluded:
        print(f"excluded {', '.join(str(m) for m in res.excluded)} (never strongly classified)")
    for m, r in sorted(res.per_class.items()):
        print(f"  phi[{m}] {_g(r.phi)} ({r.status.value})")
    _emit_json(args, {"xi": res.xi, "status": res.status.value,
                      "weakest_class": res.weakest_class, "excluded": res.excluded,
                      "per_class": {str(m): _phi_payload(r)
                                    for m, r in res.per_class.items()}})
    exact = all(r.exact for r in res.per_class.values())
    return EXIT_OK if exact else EXIT_UNKNOWN


def cmd_max_alpha(args) -> int:
    net = _load_net(args.net)
    res = compute_max_alpha(net, args.cls, config=_solve_config(args),
                            lookback=args.lookback, segments=args.segments)
    print(f"alpha    {_g(res.alpha_max)}")
    print(f"log      {_g(res.t_star)}")
    print(f"status   {res.status.value}")
    if not res.attainable:
        print("note     class never tops every rival (alpha < 1)")
    if res.anchor is not None:
        print(f"anchor   {_vec(res.anchor)}")
    _emit_json(args, {"alpha_max": res.alpha_max, "t_star": res.t_star,
                      "attainable": res.attainable, "status": res.status.value,
                      "anchor": res.anchor})
    from .solver import SolveStatus
    return EXIT_OK if res.status is SolveStatus.OPTIMAL else EXIT_UNKNOWN


def cmd_export(args) -> int:
    net = _load_net(args.net)
    bounds = propagate_intervals(net)
    if args.lookback is not None:
        bounds = tighten_lookback(net, bounds, depth=args.lookback,
                                  workers=args.workers)
    kind = {"phi": QueryKind.MAX_PERTURBATION,
            "robustness": QueryKind.LOCAL_ROBUSTNESS,
            "max-alpha": QueryKind.MAX_ALPHA}[args.query]
    anchor = None
    if kind is QueryKind.LOCAL_ROBUSTNESS:
        if args.input is None:
            raise EncodingError("--query robustness needs --input")
        anchor = _parse_input(args.input, net.input_dim)
    q = QuerySpec(kind, m=args.cls, alpha=args.alpha, k=args.k,
                  a=anchor, delta=args.delta)
    enc = encode_query(net, bounds, q, segments=args.segments)
    text = export_mps(enc.model)
    Path(args.out).write_text(text)
    rows = enc.model.num_constraints
    cols = enc.model.num_variables
    bins = len(enc.model.binary_ids)
    print(f"wrote {args.out} ({rows} rows, {cols} columns, {bins} binaries)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="resilmip",
        description="perturbation-resilience analysis of small feed-forward "
                    "networks by mixed-integer programming")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="exact forward pass at a point")
    _common(p)
    p.add_argument("--input", required=True,
                   help="input point: inline values or a file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bounds", help="per-node activation intervals")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--out", default=None, metavar="FILE", help="write TSV here")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="local robustness at a point "
                       "(exit 0 robust, 10 violated, 20 unknown)")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--input", required=True, help="anchor point: inline or file")
    p.add_argument("--delta", type=float, required=True, help="1-norm budget")
    p.add_argument("--class", dest="cls", type=int, default=None,
                   help="1-based class to protect (default: the anchor's top class)")
    p.add_argument("--k", "-k", type=int, default=1,
                   help="how many rivals must reach the class's score")
    p.add_argument("--witness-out", default=None, metavar="FILE",
                   help="write the violating perturbation as JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("phi", help="maximum-perturbation bound of one class")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--class", dest="cls", type=int, required=True, help="1-based class")
    p.add_argument("--alpha", type=float, default=1.0, help="dominance ratio (>= 1)")
    p.add_argument("--k", "-k", type=int, default=1)
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("xi", help="network resilience (worst finite phi)")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--k", "-k", type=int, default=1)
    p.set_defaults(func=cmd_xi)

    p = sub.add_parser("max-alpha", help="largest attainable dominance ratio")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--class", dest="cls", type=int, required=True)
    p.set_defaults(func=cmd_max_alpha)

    p = sub.add_parser("export", help="write a query model as fixed-format MPS")
    _common(p)
    _add_solver_args(p)
    p.add_argument("--out", required=True, help="output .mps path")
    p.add_argument("--query", choices=("phi", "robustness", "max-alpha"),
                   default="phi")
    p.add_argument("--class", dest="cls", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--k", "-k", type=int, default=1)
    p.add_argument("--input", default=None, help="anchor for --query robustness")
    p.add_argument("--delta", type=float, default=0.0)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")
    try:
        return args.func(args)
    except (NetworkFormatError, NetworkValidationError, EncodingError,
            ModelError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
