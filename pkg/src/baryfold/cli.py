"""Command-line front end: verification sweeps written as JSON summaries and CSV tables."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curvature import check_negative_kricci, sphere_directions, _forms
from .jacobi import (DEFAULT_HORIZON, calculus_lemma_check, equality_profile, random_profile,
                     verify_key_estimate)
from .measures import MeasureError, VisualFamily, normalize, sphere_quadrature, visual_measure
from .models import BallIsometry, HyperbolicSpace, ModelError, ModelSpace, model_from_descriptor
from .natural_map import (NaturalMapSetup, entropy_estimate, jacobian_natural_map, map_from_descriptor)
from .straightening import (BarycenterError, DegenerateMeasureError, SimplexSpec, d_straighten,
                            d_straighten_fd, jacobian_chain_check, random_spherical_point,
                            ratio_bound_constant, solve_barycenter, straighten,
                            tangent_basis)

COMMANDS = ("check-ricci", "curvature-report", "key-estimate", "calculus-lemma", "barycenter",
            "straighten", "jacobian-scan", "ratio-bound", "natural-map", "entropy")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CHUNK = 25
SEED_LIMIT = 2 ** 64


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration and reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    command: str
    model: dict
    seed: int = 0
    samples: int | None = None
    resolution: int | None = None
    tol: float | None = None
    out: str | None = None
    params: dict = field(default_factory=dict)

    def validate(self) -> ModelSpace:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < SEED_LIMIT:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.samples is not None and self.samples < 1:
            raise UsageError("samples must be positive")
        if self.resolution is not None and self.resolution < 1:
            raise UsageError("resolution must be positive")
        if self.tol is not None and not self.tol > 0.0:
            raise UsageError("tolerance must be positive")
        if not isinstance(self.params, dict):
            raise UsageError("params must be a JSON object")
        try:
            return model_from_descriptor(self.model)
        except (ModelError, TypeError, KeyError, ValueError) as exc:
            raise UsageError(f"invalid model: {exc}") from None

    def canonical(self) -> dict:
        """Everything that determines the results; the output directory does not."""
        return {"command": self.command, "model": self.model, "seed": self.seed, "samples": self.samples,
                "resolution": self.resolution, "tol": self.tol, "params": self.params}

    def hash(self) -> str:
        text = json.dumps(_plain(self.canonical()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class Report:
    config: RunConfig
    checks: list
    empirical_constants: dict
    details: dict
    rows: list | None = None
    wall_clock: float = 0.0

    @property
    def failures(self) -> int:
        return sum(not c["passed"] for c in self.checks)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.failures == 0 else EXIT_FAIL

    def to_dict(self) -> dict:
        # wall-clock stays out of the file so reruns are byte-identical
        return {"command": self.config.canonical(), "config_hash": self.config.hash(),
                "checks": self.checks,
                "summary": {"checks_run": len(self.checks), "failures": self.failures,
                            "empirical_constants": self.empirical_constants},
                "details": self.details}

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str | None:
        if not self.rows:
            return None
        flat = [_flatten(r) for r in self.rows]
        cols = []
        for r in flat:
            cols.extend(k for k in r if k not in cols)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in flat:
            wr.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _flatten(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        v = _plain(v)
        if isinstance(v, list):
            for i, x in enumerate(np.ravel(np.asarray(v, dtype=object))):
                out[f"{k}_{i}"] = x
        else:
            out[k] = v
    return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _check(name: str, passed, value=None, **extra) -> dict:
    rec = {"name": name, "passed": bool(passed)}
    if value is not None:
        rec["value"] = value
    rec.update(extra)
    return rec


def write_atomic(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.splitext(path)[1])
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# deterministic parallel sweeps
# --------------------------------------------------------------------------

def thread_count() -> int:
    raw = os.environ.get("BARYFOLD_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError("BARYFOLD_THREADS must be an integer") from None


def _partition(total: int, seed: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    """(size, seed) per fixed-size chunk; independent of the thread count."""
    sizes = [min(chunk, total - i) for i in range(0, total, chunk)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(s, int(c.generate_state(1, np.uint64)[0])) for s, c in zip(sizes, children)]


def _sweep(fn, items) -> list:
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _param(cfg: RunConfig, key: str, default):
    return cfg.params.get(key, default)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _cmd_check_ricci(cfg: RunConfig, model: ModelSpace) -> Report:
    k = int(_param(cfg, "k", model.dim // 4 + 1))
    r = check_negative_kricci(model, k, cfg.samples or 4096, cfg.seed, int(_param(cfg, "points", 4)))
    checks = [_check("negative_ricci", r["holds"], r["worst_value"], k=k),
              _check("conditions_consistent", r["consistent"])]
    consts = {"C0": r["C0"], "delta": r["delta"], "worst_value": r["worst_value"]}
    return Report(cfg, checks, consts, r)


def _cmd_curvature_report(cfg: RunConfig, model: ModelSpace) -> Report:
    n = model.dim
    k = int(_param(cfg, "k", n // 4 + 1))
    points = int(_param(cfg, "points", 2))
    rng = np.random.default_rng(cfg.seed)
    dirs = sphere_directions(n, cfg.samples or 64, int(rng.integers(2 ** 32)))
    rows, worst_psd, worst_null, mono = [], np.inf, 0.0, True
    min_trk, min_lam = np.inf, np.inf
    for j in range(points):
        p = model.random_point(rng, 1.0)
        mats = _forms(model.sectional_matrix(p), dirs)
        ev = np.linalg.eigvalsh(mats)
        null = np.abs(np.einsum("nij,nj->ni", mats, dirs)).max(axis=1)
        table = np.cumsum(ev, axis=1)
        worst_psd = min(worst_psd, float(ev[:, 0].min()))
        worst_null = max(worst_null, float(null.max()))
        mono &= bool(np.all(np.diff(table, axis=1) >= -1e-12))
        min_trk = min(min_trk, float(table[:, k - 1].min()))
        min_lam = min(min_lam, float(ev[:, k - 1].min()))
        for d, e, t in zip(dirs, ev, table):
            rows.append({"point": j, "direction": d, "eigenvalues": e, "tr_k": t, "ric_k": -t[k - 1]})
    checks = [_check("psd", worst_psd >= -1e-10, worst_psd),
              _check("direction_in_null_space", worst_null <= 1e-10, worst_null),
              _check("tr_k_monotone", mono)]
    if min_trk > 1e-10:
        checks.append(_check("eigenvalue_floor", min_lam >= min_trk / n - 1e-12, min_lam,
                             delta_over_n=min_trk / n))
    return Report(cfg, checks, {"min_tr_k": min_trk, "min_lambda_k": min_lam},
                  {"k": k, "points": points, "directions": len(dirs)}, rows)


def _cmd_key_estimate(cfg: RunConfig, model: ModelSpace) -> Report:
    horizon = float(_param(cfg, "horizon", DEFAULT_HORIZON))
    parts = _partition(cfg.samples or 100, cfg.seed)
    results = _sweep(lambda p: verify_key_estimate(model, p[0], horizon, p[1]), parts)
    rows = [dict(w, kind="curved") for r in results for w in r["witnesses"]]
    rows += [dict(w, kind="flat") for r in results for w in r["flat_witnesses"]]
    axis = results[0]["axis_witnesses"]
    ratios = [w["ratio"] for r in results for w in r["witnesses"]]
    emp = min(ratios) if ratios else float("nan")
    flat_ok = all(r["flat_hessian_nonnegative"] for r in results)
    checks = [_check("empirical_C_positive", bool(ratios) and emp > 0.0, emp),
              _check("flat_hessian_nonnegative", flat_ok)]
    details = {"empirical_C": emp, "n_samples": cfg.samples or 100, "n_flat": sum(r["n_flat"] for r in results),
               "T": horizon, "seed": cfg.seed, "axis_witnesses": axis}
    return Report(cfg, checks, {"empirical_C": emp}, details, rows)


def _cmd_calculus_lemma(cfg: RunConfig, model: ModelSpace) -> Report:
    def run(part):
        size, seed = part
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(size):
            t, f, L = random_profile(rng)
            r = calculus_lemma_check(f, t, L)
            out.append({"kind": "spline", "L": L, "F0": f[0], "lhs": r["lhs"], "rhs": r["rhs"],
                        "holds": r["holds"], "precondition_ok": r["precondition_ok"]})
        return out

    rows = [r for part in _sweep(run, _partition(cfg.samples or 10000, cfg.seed, 500)) for r in part]
    t = np.linspace(0.0, 10.0, 20001)
    for c in (0.25, 1.0, 4.0):
        for L in (0.5, 2.0, 8.0):
            r = calculus_lemma_check(equality_profile(c, L, t), t, L)
            rows.append({"kind": "equality", "L": L, "F0": c, "lhs": r["lhs"], "rhs": r["rhs"],
                         "holds": r["holds"], "precondition_ok": r["precondition_ok"]})
    bad = sum(not r["holds"] for r in rows)
    pre = sum(not r["precondition_ok"] for r in rows)
    eq = [r for r in rows if r["kind"] == "equality"]
    gap = max(abs(r["lhs"] - r["rhs"]) / max(r["rhs"], 1e-300) for r in eq)
    checks = [_check("zero_violations", bad == 0, bad), _check("preconditions", pre == 0, pre),
              _check("equality_case_tight", gap <= 1e-3, gap)]
    return Report(cfg, checks, {"equality_relative_gap": gap}, {"trials": len(rows)}, rows)


def _cmd_barycenter(cfg: RunConfig, model: ModelSpace) -> Report:
    tol = cfg.tol or 1e-6
    radius = float(_param(cfg, "radius", 1.4))
    ref = sphere_quadrature(model, cfg.resolution)
    fam = VisualFamily(model)

    def run(part):
        size, seed = part
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(size):
            x = model.random_point(rng, radius)
            res = solve_barycenter(normalize(visual_measure(fam, x, ref)))
            out.append({"x": x, "barycenter": res.point, "error": model.distance(x, res.point),
                        "grad_norm": res.grad_norm, "iterations": res.iterations})
        return out

    rows = [r for part in _sweep(run, _partition(cfg.samples or 100, cfg.seed)) for r in part]
    worst = max(r["error"] for r in rows)
    grad = max(r["grad_norm"] for r in rows)
    checks = [_check("first_order", grad <= 1e-10, grad)]
    # the product stand-in family is not equivariant, so bar(nu_x) = x is only asserted on H^n
    if isinstance(model, HyperbolicSpace):
        checks.insert(0, _check("fixed_point", worst <= tol, worst, tol=tol))
    return Report(cfg, checks, {"max_error": worst}, {"resolution": ref.resolution, "radius": radius}, rows)


def _require_ball(model):
    if not isinstance(model, HyperbolicSpace):
        raise UsageError("this command needs a hyperbolic model")


def _cmd_straighten(cfg: RunConfig, model: ModelSpace) -> Report:
    _require_ball(model)
    tol = cfg.tol or 1e-6
    n = model.dim

    def run(part):
        size, seed = part
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(size):
            verts = np.array([model.random_point(rng, 1.2) for _ in range(n + 1)])
            spec = SimplexSpec(model, verts, cfg.resolution)
            vert_err = max(model.distance(straighten(spec, np.eye(n + 1)[i]), verts[i]) for i in range(n + 1))
            a = random_spherical_point(rng, n + 1)
            g = BallIsometry.random(n, rng)
            moved = SimplexSpec(model, g(verts), cfg.resolution)
            eq_err = model.distance(straighten(moved, a), g(straighten(spec, a)[None])[0])
            out.append({"vertex_error": vert_err, "equivariance_error": eq_err})
        return out

    rows = [r for part in _sweep(run, _partition(cfg.samples or 100, cfg.seed, 5)) for r in part]
    v = max(r["vertex_error"] for r in rows)
    e = max(r["equivariance_error"] for r in rows)
    checks = [_check("vertex_consistency", v <= tol, v), _check("equivariance", e <= tol, e)]
    return Report(cfg, checks, {"max_vertex_error": v, "max_equivariance_error": e}, {"tol": tol}, rows)


def _cmd_jacobian_scan(cfg: RunConfig, model: ModelSpace) -> Report:
    n = model.dim
    fd_checks = int(_param(cfg, "fd_checks", 5))
    radius = float(_param(cfg, "radius", 1.2))

    def run(part):
        size, seed = part
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(size):
            verts = np.array([model.random_point(rng, radius) for _ in range(n + 1)])
            spec = SimplexSpec(model, verts, cfg.resolution)
            out.append((spec, jacobian_chain_check(spec, random_spherical_point(rng, n + 1))))
        return out

    pairs = [r for part in _sweep(run, _partition(cfg.samples or 100, cfg.seed, 10)) for r in part]
    rows = [{k: r[k] for k in ("delta", "st_point", "jac", "detH", "detK", "ratio", "holds")} for _, r in pairs]
    fd_err = 0.0
    for spec, r in pairs[:fd_checks]:
        a = np.asarray(r["delta"])
        an = d_straighten(spec, a)
        for u in tangent_basis(a).T:
            col = an @ u
            fd_err = max(fd_err, float(np.linalg.norm(d_straighten_fd(spec, a, u) - col)
                                       / max(np.linalg.norm(col), 1e-12)))
    bad = sum(not r["holds"] for _, r in pairs)
    bad_bound = sum(not r["straightening_bound_holds"] for _, r in pairs)
    checks = [_check("chain_inequality", bad == 0, bad), _check("straightening_bound", bad_bound == 0, bad_bound)]
    if fd_checks:
        checks.append(_check("finite_difference_agreement", fd_err <= 1e-3, fd_err))
    sup = max(r["ratio"] for _, r in pairs)
    return Report(cfg, checks, {"max_ratio": sup, "fd_relative_error": fd_err}, {"simplices": len(pairs)}, rows)


def _cmd_ratio_bound(cfg: RunConfig, model: ModelSpace) -> Report:
    k_ric = _param(cfg, "k_ric", None)
    parts = _partition(cfg.samples or 200, cfg.seed, 50)
    results = _sweep(lambda p: ratio_bound_constant(model, k_ric, p[0], p[1], cfg.resolution), parts)
    sup = max(r["empirical_sup_ratio"] for r in results)
    consts = {"empirical_sup_ratio": sup, "C0_used": min(r["C0_used"] for r in results),
              "C_prime": max(r["C_prime"] for r in results)}
    checks = [_check("mu_bound", all(r["mu_bound_holds"] for r in results)),
              _check("lambda_floor", all(r["lambda_floor_holds"] for r in results))]
    details = {"k_ric": results[0]["k_ric"], "resolution": results[0]["resolution"]}
    if "envelope" in results[0]:
        env = results[0]["envelope"]
        checks.append(_check("within_envelope", sup <= env * (1 + 1e-9), sup, envelope=env))
        consts["envelope"] = env
    return Report(cfg, checks, consts, details)


def _cmd_natural_map(cfg: RunConfig, model: ModelSpace) -> Report:
    _require_ball(model)
    n, h = model.dim, model.entropy
    phi = map_from_descriptor(model, _param(cfg, "map", {"kind": "identity"}))
    svals = [float(s) for s in _param(cfg, "s", [h + 0.2, h + 1.0, h + 3.0, h + 8.0])]
    normalized = bool(_param(cfg, "normalized", True))
    radius = float(_param(cfg, "radius", 0.5))
    C = _param(cfg, "C", None)
    rng = np.random.default_rng(cfg.seed)
    ys = [model.random_point(rng, radius) for _ in range(cfg.samples or 2)]
    setups = {s: NaturalMapSetup.build(phi, s, cfg.resolution, normalized=normalized) for s in svals}
    fam = VisualFamily(model)
    jobs = [(i, s) for i in range(len(ys)) for s in svals]
    results = _sweep(lambda j: jacobian_natural_map(phi, fam, ys[j[0]], j[1], C, setup=setups[j[1]]), jobs)
    rows = [{"y": r["y"], "s": r["s"], "jac": r["jac"], "bound": r["bound"], "holds": r["holds"],
             "bound_local": r["bound_local"], "holds_local": r["holds_local"], "F": r["F"]} for r in results]
    bad = sum(not r["holds"] for r in rows)
    bad_local = sum(not r["holds_local"] for r in rows)
    checks = [_check("jacobian_bound", bad == 0, bad), _check("local_jacobian_bound", bad_local == 0, bad_local)]
    ref = next(iter(setups.values()))
    details = {"C": results[0]["C"], "n": n, "seed": cfg.seed, "map": phi.descriptor(),
               "boundary_resolution": ref.reference.resolution, "source_resolution": ref.source_resolution,
               "convention": "normalized" if normalized else "unnormalized", "family": fam.label}
    return Report(cfg, checks, {"C": results[0]["C"], "max_jac": max(abs(r["jac"]) for r in rows)}, details, rows)


def _cmd_entropy(cfg: RunConfig, model: ModelSpace) -> Report:
    window = tuple(float(w) for w in _param(cfg, "window", (10.0, 30.0)))
    r = entropy_estimate(model, window=window)
    tol = cfg.tol or 0.03
    checks = [_check("closed_form_agreement", r["relative_error"] <= tol, r["relative_error"], tol=tol)]
    return Report(cfg, checks, {"entropy": r["entropy"]}, r)


_DISPATCH = {
    "check-ricci": _cmd_check_ricci,
    "curvature-report": _cmd_curvature_report,
    "key-estimate": _cmd_key_estimate,
    "calculus-lemma": _cmd_calculus_lemma,
    "barycenter": _cmd_barycenter,
    "straighten": _cmd_straighten,
    "jacobian-scan": _cmd_jacobian_scan,
    "ratio-bound": _cmd_ratio_bound,
    "natural-map": _cmd_natural_map,
    "entropy": _cmd_entropy,
}


def run(config: RunConfig) -> Report:
    """Validate ``config``, run its command and write the report files if ``out`` is set."""
    model = config.validate()
    start = time.perf_counter()
    try:
        report = _DISPATCH[config.command](config, model)
    except (ModelError, MeasureError) as exc:
        raise UsageError(str(exc)) from None
    report.wall_clock = time.perf_counter() - start
    if config.out:
        stem = os.path.join(config.out, config.command)
        write_atomic(stem + ".json", report.to_json())
        table = report.to_csv()
        if table is not None:
            write_atomic(stem + ".csv", table)
    return report


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from None


def _param_arg(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError("expected key=value")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="baryfold", description="Barycenter-method verification sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with any of the fields below; flags override it")
        p.add_argument("--model", type=_json_arg, help='model descriptor, e.g. {"kind":"hyperbolic","n":3}')
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--resolution", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--out", help="directory for the JSON report and CSV table")
        p.add_argument("--param", type=_param_arg, action="append", default=[],
                       help="command parameter key=value (value parsed as JSON when possible)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(base) - {"model", "seed", "samples", "resolution", "tol", "out", "params"}
        if unknown:
            raise UsageError(f"unknown config fields: {sorted(unknown)}")
    for key in ("model", "seed", "samples", "resolution", "tol", "out"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    params = dict(base.get("params", {}))
    params.update(dict(args.param))
    if "model" not in base:
        raise UsageError("a model descriptor is required (--model or config file)")
    return RunConfig(command=args.command, model=base["model"], seed=base.get("seed", 0),
                     samples=base.get("samples"), resolution=base.get("resolution"), tol=base.get("tol"),
                     out=base.get("out"), params=params)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report = run(config)
    except UsageError as exc:
        print(f"baryfold: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateMeasureError, BarycenterError) as exc:
        print(f"baryfold: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}" + (f"  value={c['value']}" if "value" in c else ""))
    print(f"{report.config.command}: {len(report.checks)} checks, {report.failures} failures, "
          f"{report.wall_clock:.2f} s, config {report.config.hash()[:12]}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
