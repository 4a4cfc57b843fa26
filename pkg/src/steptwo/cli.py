"""Command-line front end: `verify <task> --config <file> [--seed N] [--out DIR]`.

Each task reads a strict JSON config (unknown keys rejected), runs one scan,
and writes `<task>.csv` plus `<task>_summary.json` into the output
directory.  Exit codes: 0 all configured assertions pass, 2 config error,
3 numerical failure or assertion failure.  CSV bodies are byte-stable for a
fixed config (including the seed); every row carries the seed and a sample
index so any single sample can be replayed in isolation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffusion as df
from . import distance as ds
from . import groups as gr
from . import heatkernel as hk
from . import mcp
from .errors import InputError, NumericalFailure
from .geodesics import Covector, _exp_xt
from .groups import GroupPoint
from .util import sub_rng, to_jsonable

TASKS = ("algebra-check", "exp-check", "distance-check", "kernel-check",
         "mcp-scan", "weighted-mcp-scan", "n32-chain", "core-lemma",
         "qbe-scan", "volume-check")

REQUIRED = object()

# task -> {key: default}; REQUIRED means the config must supply it
SCHEMAS = {
    "algebra-check": {"n_samples": 1000, "tol": 1e-12},
    "exp-check": {"n_samples": 1000, "rtol": 1e-6},
    "distance-check": {"n_samples": 2000, "box": 3.0},
    "kernel-check": {"d_max": 8.0, "n_grid": 24, "mass_tol": 1e-3},
    "mcp-scan": {"N": REQUIRED, "n_samples": 10000, "threshold": None},
    "weighted-mcp-scan": {"N": REQUIRED, "n_samples": 10000},
    "n32-chain": {"n_samples": 1000, "N0": 14},
    "core-lemma": {"n_samples": 16, "A_param": 5.0, "d_range": [6.0, 10.0]},
    "qbe-scan": {"h": 1.0, "n_paths": 10000, "n_steps": 32, "k": 1,
                 "n_functions": 5, "n_points": 3, "ceiling": 10.0},
    "volume-check": {"radii": [0.5, 1.0, 2.0], "n_samples": 10000},
}


@dataclass
class ExperimentConfig:
    task: str
    group: str
    seed: int = 0
    out: str = "."
    params: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, task, path, seed=None, out=None):
        with open(path) as fh:
            raw = json.load(fh)
        if task not in SCHEMAS:
            raise InputError(f"unknown task {task!r}")
        if "group" not in raw:
            raise InputError("config must name a group")
        schema = SCHEMAS[task]
        params = {}
        for key, default in schema.items():
            if key in raw:
                params[key] = raw.pop(key)
            elif default is REQUIRED:
                raise InputError(f"missing required key {key!r} for {task}")
            else:
                params[key] = default
        group = raw.pop("group")
        cfg_seed = raw.pop("seed", 0)
        cfg_out = raw.pop("out", ".")
        if raw:
            raise InputError(f"unknown config keys: {sorted(raw)}")
        return cls(task=task, group=group,
                   seed=int(seed if seed is not None else cfg_seed),
                   out=str(out if out is not None else cfg_out), params=params)


def parse_group(label):
    if isinstance(label, dict):
        return gr.GroupSpec(q=int(label["q"]), m=int(label["m"]),
                            U=np.array(label["U"]), name=label.get("name", "custom"))
    label = label.strip()
    if label == "n32":
        return gr.n32()
    if label.startswith("heisenberg(") and label.endswith(")"):
        return gr.heisenberg(int(label[11:-1]))
    if label.startswith("htype(") and label.endswith(")"):
        a, b = label[6:-1].split(",")
        return gr.htype(int(a), int(b))
    raise InputError(f"cannot parse group {label!r}")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _input_hash(config):
    blob = json.dumps({"task": config.task, "group": config.group,
                       "seed": config.seed, "params": config.params},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _summary(config, checks, stats):
    return {
        "task": config.task,
        "group": config.group,
        "config": {"seed": config.seed, **config.params},
        "input_hash": _input_hash(config),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "pass": all(c["passed"] for c in checks),
        "checks": checks,
        "stats": to_jsonable(stats),
    }


def _check(name, passed, value=None, threshold=None):
    return {"name": name, "passed": bool(passed),
            "value": to_jsonable(value), "threshold": to_jsonable(threshold)}


def _run_algebra(spec, seed, p):
    rng = sub_rng(seed, 20)
    n = p["n_samples"]
    X = rng.uniform(-3, 3, size=(3, n, spec.q))
    T = rng.uniform(-3, 3, size=(3, n, spec.m))
    a, b, c = (GroupPoint(X[i], T[i]) for i in range(3))
    ab_c = gr.multiply(spec, gr.multiply(spec, a, b), c)
    a_bc = gr.multiply(spec, a, gr.multiply(spec, b, c))
    assoc = np.maximum(np.max(np.abs(ab_c.x - a_bc.x), axis=1),
                       np.max(np.abs(ab_c.t - a_bc.t), axis=1))
    inv = gr.multiply(spec, gr.inverse(spec, gr.multiply(spec, a, b)),
                      gr.multiply(spec, a, b))
    inv_def = np.maximum(np.max(np.abs(inv.x), axis=1), np.max(np.abs(inv.t), axis=1))
    r = rng.uniform(0.2, 3.0, size=n)
    lhs = gr.dilate(spec, r, gr.multiply(spec, a, b))
    rhs = gr.multiply(spec, gr.dilate(spec, r, a), gr.dilate(spec, r, b))
    dil = np.maximum(np.max(np.abs(lhs.x - rhs.x), axis=1),
                     np.max(np.abs(lhs.t - rhs.t), axis=1))
    rows = [(spec.name, "algebra", seed, i, repr(float(assoc[i])),
             repr(float(inv_def[i])), repr(float(dil[i]))) for i in range(n)]
    checks = [
        _check("associativity", float(np.max(assoc)) <= p["tol"], float(np.max(assoc)), p["tol"]),
        _check("inverse-law", float(np.max(inv_def)) <= p["tol"], float(np.max(inv_def)), p["tol"]),
        _check("dilation-automorphism", float(np.max(dil)) <= p["tol"], float(np.max(dil)), p["tol"]),
    ]
    header = ["group", "op", "seed", "index", "assoc_defect", "inverse_defect",
              "dilation_defect"]
    return rows, header, checks, {"n_samples": n}


def _run_exp(spec, seed, p):
    eta = mcp.sample_domain(spec, p["n_samples"], seed=seed)
    x, t = _exp_xt(spec, eta.zeta, eta.tau)
    sol = ds.cc_distance_batch(spec, GroupPoint(x, t))
    zn = np.linalg.norm(eta.zeta, axis=1)
    ok = sol.ok
    rel = np.abs(sol.distance - zn) / zn
    rows = [(spec.name, "exp-roundtrip", seed, i, repr(float(zn[i])),
             repr(float(sol.distance[i])), repr(float(rel[i])))
            for i in range(len(zn))]
    checks = [_check("roundtrip-rel-error",
                     bool(np.all(rel[ok] <= p["rtol"])), float(np.max(rel[ok])), p["rtol"]),
              _check("resolved-fraction", ok.mean() >= 0.95, float(ok.mean()), 0.95)]
    stats = {"n_resolved": int(ok.sum())}
    if spec.name.startswith("heisenberg"):
        th = 0.5 * np.linalg.norm(eta.tau, axis=1)
        pred = np.where(th > 1e-12, np.sin(th) / np.where(th > 1e-12, th, 1.0), 1.0) * zn
        sinc_err = np.max(np.abs(np.linalg.norm(x, axis=1) - pred)
                          / np.maximum(pred, 1e-300))
        checks.append(_check("sinc-identity", sinc_err <= 1e-8, float(sinc_err), 1e-8))
        stats["sinc_err"] = float(sinc_err)
    header = ["group", "op", "seed", "index", "zeta_norm", "distance", "rel_err"]
    return rows, header, checks, stats


def _run_distance(spec, seed, p):
    n = p["n_samples"]
    c_low, c_high = ds.norm_equivalence_scan(spec, n, seed=seed, box=p["box"])
    rng = sub_rng(seed, 21)
    X = rng.uniform(-p["box"], p["box"], size=(n, spec.q))
    T = rng.uniform(-p["box"], p["box"], size=(n, spec.m))
    g = GroupPoint(X, T)
    fwd = ds.cc_distance_batch(spec, g)
    bwd = ds.cc_distance_batch(spec, gr.inverse(spec, g))
    both = fwd.ok & bwd.ok
    sym = np.max(np.abs(fwd.distance[both] - bwd.distance[both])
                 / np.maximum(fwd.distance[both], 1e-12))
    rows = [(spec.name, "norm-equivalence", seed, n, repr(0.0), repr(0.0),
             repr(c_low), repr(c_high))]
    checks = [
        _check("band-positive", 0 < c_low <= c_high < np.inf, [c_low, c_high]),
        _check("inversion-symmetry", sym <= 1e-6, float(sym), 1e-6),
    ]
    header = ["group", "op", "seed", "n_samples", "value", "stderr", "c_low", "c_high"]
    return rows, header, checks, {"c_low": c_low, "c_high": c_high}


def _run_kernel(spec, seed, p):
    model = hk.oscillatory_model(spec)
    mass = hk.kernel_mass(spec)
    n_grid = p["n_grid"]
    rng = sub_rng(seed, 22)
    dirs = rng.standard_normal((n_grid, spec.q))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dvals = np.linspace(0.3, p["d_max"], n_grid)
    th = rng.uniform(-0.9 * np.pi, 0.9 * np.pi, n_grid)
    Z = dirs * dvals[:, None]
    Tau = (2.0 * th)[:, None] * np.ones(spec.m) / np.sqrt(spec.m)
    x, t = _exp_xt(spec, Z, Tau)
    g = GroupPoint(x, t)
    pvals = np.atleast_1d(model(g, 1.0))
    n = spec.q // 2
    if spec.m == 1:
        comp = hk.comparator_heisenberg(n, g, d=dvals)
    else:
        comp = hk.comparator_htype(n, spec.m, g, d=dvals)
    comp = np.atleast_1d(np.asarray(comp))
    ratio = pvals / comp
    band = float(np.max(ratio) / np.min(ratio))
    inv = hk.check_kernel_invariants(model, g[np.argsort(dvals)[:8]])
    rows = [(spec.name, repr(float(dvals[i])), repr(float(np.linalg.norm(x[i]))),
             repr(1.0), repr(float(pvals[i])), repr(float(comp[i])),
             repr(float(ratio[i])), seed, i) for i in range(n_grid)]
    checks = [
        _check("mass", abs(mass - 1.0) <= p["mass_tol"], float(mass), p["mass_tol"]),
        _check("comparator-band-finite", np.isfinite(band) and band > 0, band),
        _check("scaling-identity", inv["scaling"] <= 1e-6, inv["scaling"], 1e-6),
        _check("inversion-symmetry", inv["symmetry"] <= 1e-8, inv["symmetry"], 1e-8),
    ]
    header = ["group", "d", "x_norm", "h", "p", "comparator", "ratio", "seed", "index"]
    return rows, header, checks, {"mass": float(mass), "band": band}


def _mcp_rows(spec, rep, seed):
    return [(spec.name, rep.N, rep.argmin["s"],
             repr(float(np.linalg.norm(rep.argmin["zeta"]))) if "zeta" in rep.argmin else "",
             repr(float(np.linalg.norm(rep.argmin["tau"]))) if "tau" in rep.argmin else "",
             repr(rep.inf_ratio), seed, 0)]


def _run_mcp(spec, seed, p, weighted=False):
    kernel = hk.oscillatory_model(spec) if weighted else None
    rep = mcp.mcp_scan(spec, p["N"], p["n_samples"], seed=seed, kernel=kernel,
                       threshold=p.get("threshold"))
    rows = _mcp_rows(spec, rep, seed)
    if weighted:
        checks = [_check("weighted-inf-positive", rep.inf_ratio > 0,
                         rep.inf_ratio, 0.0)]
    else:
        checks = [_check("no-violations", rep.violations == 0,
                         rep.violations, 0),
                  _check("jacobians-positive", rep.extra["jacobian_positive"], None)]
    header = ["group", "N", "s", "zeta_norm", "tau_norm", "ratio", "seed", "index"]
    return rows, header, checks, rep.to_jsonable()


def _run_n32_chain(spec, seed, p):
    if not spec.is_cross:
        raise InputError("n32-chain requires the n32 group")
    eta = mcp.sample_domain(spec, p["n_samples"], seed=seed, zeta_range=(0.5, 4.0))
    x, t = _exp_xt(spec, eta.zeta, eta.tau)
    rep = mcp.n32_chain_check(GroupPoint(x, t), N0=p["N0"], seed=seed)
    rows = [(spec.name, p["N0"], s, "", "", repr(rep.inf_ratio), seed, i)
            for i, s in enumerate(rep.s_grid)]
    checks = [
        _check("chain-inf-positive", rep.inf_ratio > 0, rep.inf_ratio, 0.0),
        _check("aux-bound-finite", np.isfinite(rep.extra["sup_A_over_eps2_d4"]),
               rep.extra["sup_A_over_eps2_d4"]),
    ]
    header = ["group", "N0", "s", "zeta_norm", "tau_norm", "inf_ratio", "seed", "index"]
    return rows, header, checks, rep.to_jsonable()


def _run_core_lemma(spec, seed, p):
    model = hk.oscillatory_model(spec)
    rng = sub_rng(seed, 23)
    n = p["n_samples"]
    lo, hi = p["d_range"]
    dirs = rng.standard_normal((n, spec.q))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    zn = rng.uniform(lo, hi, n)
    th = rng.uniform(-1.2, 1.2, n)
    tau = (2 * th)[:, None] * np.ones(spec.m) / np.sqrt(spec.m)
    x, t = _exp_xt(spec, dirs * zn[:, None], tau)
    rep = mcp.core_lemma_check(spec, model, GroupPoint(x, t), p["A_param"], seed=seed)
    rows = [(spec.name, repr(rep.sup_ratio), repr(rep.extra["d_scaling_defect"]),
             seed, 0)]
    checks = [
        _check("sup-finite", np.isfinite(rep.sup_ratio), rep.sup_ratio),
        _check("geodesic-distance-scaling", rep.extra["d_scaling_defect"] <= 1e-6,
               rep.extra["d_scaling_defect"], 1e-6),
    ]
    header = ["group", "sup_ratio", "d_scaling_defect", "seed", "index"]
    return rows, header, checks, rep.to_jsonable()


def _run_qbe(spec, seed, p):
    cfg = df.DiffusionConfig(h=p["h"], n_paths=p["n_paths"],
                             n_steps=max(p["n_steps"], int(np.ceil(16 / p["h"]))),
                             seed=seed)
    paths = df.simulate_paths(spec, cfg)
    rng = sub_rng(seed, 24)
    fams = df.bump_family(spec, p["n_functions"])
    pts = [GroupPoint(rng.uniform(-1.5, 1.5, spec.q), rng.uniform(-1, 1, spec.m))
           for _ in range(p["n_points"])]
    rows = []
    sup = 0.0
    ceiling_ok = True
    for fi, f in enumerate(fams):
        for gi, g in enumerate(pts):
            est = df.qbe_ratio(spec, f, g, cfg, k=p["k"], paths=paths)
            sup = max(sup, est.ratio)
            ceiling_ok &= est.ci_low <= p["ceiling"]
            d = float(ds.cc_distance_batch(spec, GroupPoint(g.x[None], g.t[None])).distance[0])
            rows.append((spec.name, p["k"], p["h"], repr(d), repr(est.ratio),
                         repr(est.ci_low), repr(est.ci_high), cfg.n_paths, seed,
                         fi * len(pts) + gi))
    calib = df.qbe_ratio(spec, df.coordinate_function(spec, "x", 0),
                         pts[0], cfg, k=1, paths=paths)
    checks = [
        _check("calibration-ratio-one", abs(calib.ratio - 1) <= 1e-6 + 2 * (calib.ci_high - calib.ci_low),
               calib.ratio, 1.0),
        _check("ceiling", ceiling_ok, sup, p["ceiling"]),
    ]
    header = ["group", "k", "h", "d", "ratio", "ci_low", "ci_high", "n_paths",
              "seed", "index"]
    return rows, header, checks, {"sup_ratio": sup}


def _run_volume(spec, seed, p):
    rows = []
    vals = []
    for i, r in enumerate(p["radii"]):
        est = ds.ball_volume_estimate(spec, r, p["n_samples"], seed=seed + i)
        vals.append((r, est))
        rows.append((spec.name, "volume", seed, i, repr(est.value),
                     repr(est.stderr), repr(float(r)), repr(est.value / r ** spec.Q)))
    consts = [est.value / r ** spec.Q for r, est in vals]
    errs = [est.stderr / r ** spec.Q for r, est in vals]
    spread_ok = all(abs(consts[i] - consts[0]) <= 3 * np.hypot(errs[i], errs[0])
                    for i in range(1, len(consts)))
    checks = [_check("rQ-scaling", spread_ok, consts)]
    header = ["group", "op", "seed", "index", "value", "stderr", "radius", "const"]
    return rows, header, checks, {"constants": consts, "stderrs": errs}


_RUNNERS = {
    "algebra-check": _run_algebra,
    "exp-check": _run_exp,
    "distance-check": _run_distance,
    "kernel-check": _run_kernel,
    "mcp-scan": lambda s, seed, p: _run_mcp(s, seed, p, weighted=False),
    "weighted-mcp-scan": lambda s, seed, p: _run_mcp(s, seed, p, weighted=True),
    "n32-chain": _run_n32_chain,
    "core-lemma": _run_core_lemma,
    "qbe-scan": _run_qbe,
    "volume-check": _run_volume,
}


def run(config):
    """Execute one task; returns (exit_code, summary dict)."""
    spec = parse_group(config.group)
    os.makedirs(config.out, exist_ok=True)
    try:
        rows, header, checks, stats = _RUNNERS[config.task](spec, config.seed,
                                                            config.params)
    except NumericalFailure as exc:
        summary = _summary(config, [_check("completed", False, str(exc))], {})
        _emit(config, [], ["error"], summary)
        return 3, summary
    summary = _summary(config, checks, stats)
    _emit(config, rows, header, summary)
    return (0 if summary["pass"] else 3), summary


def _emit(config, rows, header, summary):
    base = os.path.join(config.out, config.task)
    _write_csv(base + ".csv", header, rows)
    with open(base + "_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_merge(paths):
    """Merge run summaries into one document; order-independent, idempotent."""
    docs = []
    for path in paths:
        with open(path) as fh:
            doc = json.load(fh)
        for key in ("task", "input_hash", "pass", "checks"):
            if key not in doc:
                raise InputError(f"{path}: not a run summary (missing {key!r})")
        docs.append(doc)
    docs.sort(key=lambda d: (d["task"], d.get("group", ""), d["input_hash"]))
    return {
        "kind": "merged-report",
        "n_inputs": len(docs),
        "pass": all(d["pass"] for d in docs),
        "tasks": [{k: d[k] for k in ("task", "group", "input_hash", "pass",
                                     "checks", "stats") if k in d}
                  for d in docs],
    }


def main(argv=None):
    threads = os.environ.get("VERIFY_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = argparse.ArgumentParser(prog="verify",
                                     description="step-two Carnot group verification harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        sp = sub.add_parser(task)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
    mp = sub.add_parser("merge")
    mp.add_argument("inputs", nargs="+")
    mp.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    if args.command == "merge":
        try:
            merged = report_merge(args.inputs)
        except (InputError, OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        text = json.dumps(merged, indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0 if merged["pass"] else 3

    try:
        config = ExperimentConfig.from_file(args.command, args.config,
                                            seed=args.seed, out=args.out)
        parse_group(config.group)
    except (InputError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    code, summary = run(config)
    status = "PASS" if summary["pass"] else "FAIL"
    print(f"[{status}] {config.task} group={config.group} "
          f"hash={summary['input_hash']}")
    for c in summary["checks"]:
        print(f"  {'ok ' if c['passed'] else 'BAD'} {c['name']}: {c['value']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
