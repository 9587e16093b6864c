"""Command-line entry point ``classdeg``.

Every report is a JSON object holding the tool version, the instance hash,
the resolved configuration (seed and workers included) and the result.
Output depends only on the flags, so reruns are byte-identical.

Exit codes: 0 success, 2 validation error, 3 no transition block within the
bound or no feasible cell, 4 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .class_degree import (
    TransitionBlock,
    count_transition_classes_periodic,
    is_transition_block,
    minimal_transition_block,
    routing_table,
)
from .errors import ClassdegError, ValidationError
from .estimators import empirical_entropy
from .io import Instance, as_markov, load_instance, load_measure, load_potential, parse_word
from .joinings import RijSampler, common_routing_check, estimate_class_diagonal_mass, mark_occurrences, rij_sample
from .measures import (
    PushforwardMeasure,
    entropy,
    equilibrium_state,
    integral,
    make_rng,
    parry_measure,
    perron,
    sample_path,
)
from .splicing import (
    EtaParams,
    bound_report,
    chain_constants,
    choose_separator,
    delta_grid,
    hstar_grid,
    jump_entropy_check,
)

COMMANDS = (
    "degree", "min-tb", "routing-table", "parry", "equilibrium", "entropy", "sample", "joining-stats",
    "pointroute-check", "jump-entropy", "delta", "bound-report", "oracle-classes",
)


# ---------------------------------------------------------------------------
# helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _nu(instance: Instance, measure) -> PushforwardMeasure:
    if isinstance(measure, PushforwardMeasure):
        return measure
    return PushforwardMeasure(measure, instance.triple)


def _parse_tb(text: str, instance: Instance, nu, lmax: int) -> TransitionBlock:
    if text == "auto":
        return minimal_transition_block(instance.triple, nu, lmax=lmax, certificate=False)
    try:
        w, n, M = text.split("/")
    except ValueError:
        raise ValidationError("--tb must be 'auto' or W/N/M, e.g. 'bbb/1/A'") from None
    tr = instance.triple
    w = parse_word(w, tr.y_alphabet)
    M = tuple(parse_word(m, tr.x.alphabet)[0] if len(m) else m for m in M.split(","))
    n = int(n)
    if not is_transition_block(tr, w, n, M):
        raise ValidationError(f"({w}, {n}, {M}) is not a transition block")
    return TransitionBlock(w, n, M)


def _grid(values) -> tuple[list, list]:
    Ns, ps = None, None
    for item in values:
        key, _, rhs = item.partition("=")
        nums = [v for v in rhs.split(",") if v]
        if key == "N":
            Ns = [int(v) for v in nums]
        elif key == "p":
            ps = [float(v) for v in nums]
        else:
            raise ValidationError(f"grid item {item!r} must start with N= or p=")
    if not Ns or not ps:
        raise ValidationError("--grid needs both N=... and p=...")
    return Ns, ps


def _ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v]


# ---------------------------------------------------------------------------
# subcommands


def cmd_degree(args, inst):
    nu = _nu(inst, load_measure(args.measure, inst))
    tb = minimal_transition_block(inst.triple, nu, lmax=args.lmax)
    d = tb.to_dict()
    if args.command == "degree":
        return {k: d[k] for k in ("depth", "w", "n", "M", "certificate_size")}
    d["certificate"] = tb.certificate.to_dict() if tb.certificate is not None else None
    return d


def cmd_routing_table(args, inst):
    nu = _nu(inst, load_measure(args.measure, inst))
    tb = _parse_tb(args.tb, inst, nu, args.lmax)
    table = routing_table(inst.triple, tb, cap=args.cap)
    return {"transition_block": tb.to_dict(), "entries": table.to_dict()}


def cmd_parry(args, inst):
    mu = parry_measure(inst.triple.x)
    rho, _, _ = perron(inst.triple.x.adjacency.astype(float))
    return {"alphabet": list(inst.triple.x.alphabet), "perron_value": rho, "entropy_nats": entropy(mu),
            "transition": mu.transition, "stationary": mu.stationary}


def cmd_equilibrium(args, inst):
    V = load_potential(args.potential, inst)
    eq = equilibrium_state(inst.triple.x, V)
    mu = eq.measure
    return {"pressure": eq.pressure, "entropy_nats": entropy(mu), "integral": integral(mu, eq.potential),
            "block_length": eq.block_length, "alphabet": [list(b) if isinstance(b, tuple) else b for b in mu.sft.alphabet],
            "transition": mu.transition, "stationary": mu.stationary}


def cmd_entropy(args, inst):
    mu = as_markov(load_measure(args.measure, inst))
    x = sample_path(mu, args.path_len, seed=args.seed)
    est = empirical_entropy(x, _ints(args.k_schedule), seed=args.seed, lz=args.lz)
    return {"estimate": est.to_dict(), "exact_nats": entropy(mu)}


def cmd_sample(args, inst):
    mu = as_markov(load_measure(args.measure, inst))
    x = sample_path(mu, args.path_len, seed=args.seed)
    return {"path": list(inst.triple.x.decode(x)), "image": list(inst.triple.decode_y(inst.triple.code_index[x]))}


def _sampler(args, inst):
    mu1 = load_measure(args.mu1, inst)
    mu2 = load_measure(args.mu2, inst)
    nu = _nu(inst, mu1)
    return RijSampler(inst.triple, as_markov(mu1), as_markov(mu2), nu), nu


def cmd_joining_stats(args, inst):
    sampler, nu = _sampler(args, inst)
    tb = _parse_tb(args.tb, inst, nu, args.lmax)
    rep = estimate_class_diagonal_mass(sampler, tb, args.trials, window=args.window, seed=args.seed)
    return {"transition_block": tb.to_dict(), "diagonal": rep.to_dict()}


def cmd_pointroute(args, inst):
    sampler, nu = _sampler(args, inst)
    tb = _parse_tb(args.tb, inst, nu, args.lmax)
    violations, occurrences = [], 0
    w_idx = inst.triple.encode_y(tb.w)
    for trial in range(args.trials):
        pair = rij_sample(sampler, args.path_len, rng=make_rng(args.seed, trial))
        bad = common_routing_check(inst.triple, tb, pair)
        occurrences += len(mark_occurrences(pair.y, w_idx))
        violations.extend([trial, i] for i in bad)
    return {"transition_block": tb.to_dict(), "occurrences": occurrences, "violations": len(violations),
            "first_violations": violations[:20]}


def cmd_jump_entropy(args, inst):
    mu = as_markov(load_measure(args.measure, inst))
    a_word = parse_word(args.a_word, inst.triple.x.alphabet) if args.a_word else ()
    rep = jump_entropy_check(mu, a_word, EtaParams(args.N, args.p), args.path_len, seed=args.seed, k=args.k)
    return rep.to_dict()


def cmd_delta(args, inst):
    sampler, nu = _sampler(args, inst)
    tb = _parse_tb(args.tb, inst, nu, args.lmax)
    V = load_potential(args.potential, inst)
    Ns, ps = _grid(args.grid)
    a_word = parse_word(args.a_word, inst.triple.x.alphabet) if args.a_word else choose_separator(
        sampler.mu1, sampler.mu2)
    reports = delta_grid(sampler, tb, {"V": V}, [(N, p) for N in Ns for p in ps], args.path_len, args.trials,
                         seed=args.seed, k=args.k, a_word=a_word, hstar_trials=args.hstar_trials,
                         workers=args.workers)
    cells = [r.to_dict() for r in reports.values()]
    hs = hstar_grid(sampler, tb, sorted(set(Ns) | set(_ints(args.hstar_n))), a_word, args.hstar_trials, args.seed)
    consts = chain_constants(inst.triple, tb, nu, V)
    try:
        selection = bound_report(consts, hs, grid_ps=ps).to_dict()
    except ClassdegError as exc:
        selection = {"error": type(exc).__name__, "message": str(exc)}
    return {"transition_block": tb.to_dict(), "cells": cells, "hstar": {str(N): h.to_dict() for N, h in hs.items()},
            "bound_report": selection}


def cmd_bound_report(args, inst):
    sampler, nu = _sampler(args, inst)
    tb = _parse_tb(args.tb, inst, nu, args.lmax)
    V = load_potential(args.potential, inst)
    a_word = parse_word(args.a_word, inst.triple.x.alphabet) if args.a_word else choose_separator(
        sampler.mu1, sampler.mu2)
    hs = hstar_grid(sampler, tb, _ints(args.N_grid), a_word, args.hstar_trials, args.seed)
    consts = chain_constants(inst.triple, tb, nu, V)
    sel = bound_report(consts, hs, grid_ps=[float(p) for p in args.p_grid.split(",")])
    return {"selection": sel.to_dict(), "hstar": {str(N): h.to_dict() for N, h in hs.items()}}


def cmd_oracle(args, inst):
    y = parse_word(args.y, inst.triple.y_alphabet)
    return {"y": list(y), "classes": count_transition_classes_periodic(inst.triple, y)}


HANDLERS = {
    "degree": cmd_degree, "min-tb": cmd_degree, "routing-table": cmd_routing_table, "parry": cmd_parry,
    "equilibrium": cmd_equilibrium, "entropy": cmd_entropy, "sample": cmd_sample,
    "joining-stats": cmd_joining_stats, "pointroute-check": cmd_pointroute, "jump-entropy": cmd_jump_entropy,
    "delta": cmd_delta, "bound-report": cmd_bound_report, "oracle-classes": cmd_oracle,
}


# ---------------------------------------------------------------------------
# parser and output


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="classdeg", description="Class degree, joinings and splicing for factor codes.")
    parser.add_argument("--version", action="version", version=f"classdeg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, *, measure=False, pair=False, tb=False, seed=False, potential=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("instance", help="instance JSON file")
        p.add_argument("--format", choices=("json", "csv", "text"), default="json")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        if measure:
            p.add_argument("--measure", required=True, help="measure JSON file")
        if pair:
            p.add_argument("--mu1", required=True)
            p.add_argument("--mu2", required=True)
        if tb:
            p.add_argument("--tb", default="auto", help="'auto' or W/N/M")
            p.add_argument("--lmax", type=int, default=6)
        if seed:
            p.add_argument("--seed", type=int, default=0)
        if potential:
            p.add_argument("--potential", required=True)
        return p

    for name in ("degree", "min-tb"):
        p = add(name, "depth of a minimal transition block", measure=True)
        p.add_argument("--lmax", type=int, default=6)
    p = add("routing-table", "routing symbols of every preimage of w", measure=True, tb=True)
    p.add_argument("--cap", type=int, default=None)
    add("parry", "measure of maximal entropy")
    add("equilibrium", "equilibrium state of a potential", potential=True)
    p = add("entropy", "empirical entropy rate of a sampled path", measure=True, seed=True)
    p.add_argument("--path-len", type=int, default=1_000_000)
    p.add_argument("--k-schedule", default="4,6,8,10")
    p.add_argument("--lz", action="store_true")
    p = add("sample", "sample a path", measure=True, seed=True)
    p.add_argument("--path-len", type=int, default=100)
    p = add("joining-stats", "class-diagonal mass of the relatively independent joining", pair=True, tb=True,
            seed=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--window", type=int, default=10_000)
    p = add("pointroute-check", "common routing symbols at every occurrence of w", pair=True, tb=True, seed=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--path-len", type=int, default=1000)
    p = add("jump-entropy", "entropy of the jump extension against its closed form", measure=True, seed=True)
    p.add_argument("--a-word", default="", help="word defining A (empty: whole space)")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--path-len", type=int, default=10_000_000)
    p.add_argument("--k", type=int, default=8)
    p = add("delta", "entropy-gain reports over an (N, p) grid", pair=True, tb=True, seed=True, potential=True)
    p.add_argument("--grid", nargs="+", default=["N=8,16,32", "p=0.05,0.1,0.25"])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--path-len", type=int, default=200_000)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--a-word", default="")
    p.add_argument("--hstar-trials", type=int, default=20_000)
    p.add_argument("--hstar-n", default="64,128,256,512,1024", help="extra N values for choosing N")
    p = add("bound-report", "choose p, then N, for a positive lower bound", pair=True, tb=True, seed=True,
            potential=True)
    p.add_argument("--N-grid", default="8,16,32,64,128,256,512,1024")
    p.add_argument("--p-grid", default="0.05,0.1,0.25")
    p.add_argument("--a-word", default="")
    p.add_argument("--hstar-trials", type=int, default=20_000)
    p = add("oracle-classes", "transition classes over a periodic point")
    p.add_argument("--y", required=True, help="period word of y")
    return parser


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "format"}
    return _jsonable(cfg)


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and not any(isinstance(v, (dict, list)) for v in obj):
        out[prefix] = " ".join(str(v) for v in obj)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, out)
    else:
        out[prefix] = obj


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt == "text":
        flat = {}
        _flatten("", report, flat)
        return "".join(f"{k}: {v}\n" for k, v in flat.items())
    cells = report["result"].get("cells") if isinstance(report.get("result"), dict) else None
    if cells is None:
        raise ValidationError("csv output is available for grid sweeps (delta) only")
    rows = []
    for cell in cells:
        flat = {}
        _flatten("", cell, flat)
        rows.append(flat)
    fields = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise ValidationError("--workers must be at least 1")
        inst = load_instance(args.instance)
        result = HANDLERS[args.command](args, inst)
        report = {
            "tool": "classdeg",
            "version": __version__,
            "instance_hash": inst.hash,
            "config": _config(args),
            "result": _jsonable(result),
        }
        sys.stdout.write(render(report, args.format))
    except ClassdegError as exc:
        print(f"classdeg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
