"""Command-line harness: scenario batches in, JSON reports out.

Exit codes: 0 when every check passes, 2 when an estimate or comparison is
violated beyond tolerance, 1 on configuration or execution errors (including
curvature hypotheses that the manifold does not satisfy).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from json.decoder import scanstring
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .comparison import ComparisonError, HypothesisViolation, verify_comparison
from .estimates import (
    INF,
    EstimateError,
    EstimateParams,
    HypothesisError,
    sup_L,
    verify,
)
from .geometry import (
    CurvatureParams,
    GeometryError,
    Grid1D,
    ModelManifold,
    admissible_K,
    as_extended,
    c_const,
    conformal_bounds,
    epsilon_range_contains,
    format_extended,
    radial_ricci,
    tangential_ricci,
)
from .oracle import (
    BarenblattParams,
    OracleError,
    barenblatt,
    barenblatt_mass,
    barenblatt_pressure_identities,
    barenblatt_residual,
    gaussian_heat,
    gaussian_li_yau,
    refine_study,
    sample_solution,
)
from .schema import SCHEMA, SCHEMA_VERSION
from .solver import PMEProblem, SolverError, TimeStepPolicy, pressure_evolution_residual, solve

log = logging.getLogger("pmelab")

COMMANDS = ("run", "curvature", "compare", "simulate", "verify", "oracle")
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def locate(text: str, path) -> int:
    """1-based line of the JSON value addressed by ``path`` (keys / indices);
    falls back to the deepest enclosing value that exists."""
    dec = json.JSONDecoder()
    i = _skip_ws(text, 0)
    for key in path:
        if text[i] == "{":
            j = _skip_ws(text, i + 1)
            found = None
            while j < len(text) and text[j] != "}":
                name, j = scanstring(text, j + 1)
                j = _skip_ws(text, j)
                j = _skip_ws(text, j + 1)  # ':'
                if name == key:
                    found = j
                    break
                _, j = dec.raw_decode(text, j)
                j = _skip_ws(text, j)
                if text[j] == ",":
                    j = _skip_ws(text, j + 1)
            if found is None:
                break
            i = found
        elif text[i] == "[" and isinstance(key, int):
            j = _skip_ws(text, i + 1)
            for _ in range(key):
                _, j = dec.raw_decode(text, j)
                j = _skip_ws(text, j)
                j = _skip_ws(text, j + 1)
            i = j
        else:
            break
    return _line_of(text, i)


def load_config(path) -> dict:
    text = Path(path).read_text()
    return parse_config(text)


def parse_config(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    errors = sorted(Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: (list(map(str, e.path)), e.message))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.path) or "<root>"
        raise ConfigError(f"schema violation at '{where}' (line {locate(text, list(err.path))}): {err.message}")
    ids = [sc["id"] for sc in doc["scenarios"]]
    dupes = sorted({x for x in ids if ids.count(x) > 1})
    if dupes:
        raise ConfigError(f"duplicate scenario id(s): {', '.join(dupes)}")
    return doc


# ---------------------------------------------------------------------------
# JSON output


def clean(obj):
    """Recursively convert to plain JSON types; NaN -> null, inf -> "inf"."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(doc) -> str:
    return json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# scenario building


@dataclass(frozen=True)
class Options:
    out: str
    tolerance: float | None = None
    legacy_coth: bool = False
    cor32_printed_form: bool = False


def _manifold(sc) -> ModelManifold:
    return ModelManifold.from_dict(sc["manifold"])


def _curvature_doc(sc) -> dict:
    if "curvature" not in sc:
        raise ConfigError(f"scenario {sc['id']}: a 'curvature' section is required here")
    return sc["curvature"]


def _barenblatt_params(man: ModelManifold, prob: dict) -> BarenblattParams:
    if man.kind != "euclidean-radial" or not man.weight.is_constant:
        raise ConfigError("Barenblatt data needs flat unweighted euclidean-radial geometry")
    p = prob["initial"].get("params", {})
    return BarenblattParams(man.n, prob["m"], C=p.get("C", 1.0), t0=prob.get("t0", 1.0))


def _initial(man: ModelManifold, prob: dict):
    init = prob["initial"]
    name, p = init["name"], init.get("params", {})
    if name == "barenblatt":
        bp = _barenblatt_params(man, prob)
        return lambda r: barenblatt(bp, r, bp.t0)
    if name == "cosine":
        return lambda r: p.get("base", 1.0) + p.get("amplitude", 0.5) * np.cos(p.get("frequency", 1.0) * r)
    if name == "gaussian":
        return lambda r: p.get("floor", 0.1) + p.get("amplitude", 1.0) * np.exp(-((r / p.get("width", 1.0)) ** 2))
    if name == "constant":
        return lambda r: np.full_like(r, p.get("value", 1.0))
    raise ConfigError(f"initial profile {name!r} can only be sampled, not solved from")


def build_solution(sc):
    man = _manifold(sc)
    prob = sc.get("problem")
    if prob is None:
        raise ConfigError(f"scenario {sc['id']}: a 'problem' section is required here")
    mode = prob.get("mode", "solve")
    t0 = prob.get("t0", 0.0)
    dt = prob.get("dt", 1e-3)
    name = prob["initial"]["name"]
    if mode == "sample":
        grid = Grid1D(man, prob["M"])
        steps = int(round((prob["T"] - t0) / dt))
        times = t0 + dt * np.arange(steps + 1)
        if name == "barenblatt":
            bp = _barenblatt_params(man, prob)
            fn = lambda r, t: barenblatt(bp, r, t)  # noqa: E731
        elif name == "heat-kernel":
            if man.kind != "euclidean-radial" or not man.weight.is_constant:
                raise ConfigError("the heat kernel needs flat unweighted euclidean-radial geometry")
            fn = lambda r, t: gaussian_heat(man.n, r, t)  # noqa: E731
        else:
            raise ConfigError(f"no closed form to sample for initial profile {name!r}")
        return sample_solution(grid, prob["m"], fn, times)
    policy = TimeStepPolicy(dt=dt, save_every=prob.get("save_every", 1))
    problem = PMEProblem(
        man, prob["m"], _initial(man, prob), prob["T"], prob["M"], t0=t0, policy=policy,
        allow_vacuum=name == "barenblatt",
        barenblatt=_barenblatt_params(man, prob) if name == "barenblatt" else None,
    )
    return solve(problem)


def _front(sc):
    prob = sc.get("problem") or {}
    if prob.get("initial", {}).get("name") != "barenblatt":
        raise ConfigError("exact_front needs Barenblatt data")
    return _barenblatt_params(_manifold(sc), prob).support_radius


# ---------------------------------------------------------------------------
# sections


def curvature_section(sc) -> dict:
    man = _manifold(sc)
    cd = _curvature_doc(sc)
    N, eps = as_extended(cd["N"]), float(cd["eps"])
    region = tuple(cd.get("region", man.domain))
    M = (sc.get("problem") or {}).get("M", 400)
    grid = Grid1D(man, M)
    out = {"N": format_extended(N), "eps": eps, "region": list(region)}
    out["eps_in_range"] = epsilon_range_contains(N, man.n, eps)
    try:
        out["c"] = c_const(man.n, N, eps)
    except GeometryError as exc:
        out["c"] = None
        out["c_note"] = str(exc)
    if out["eps_in_range"]:
        out["K_admissible"] = admissible_K(man, N, eps, region, grid)
        out["K_admissible_radial"] = admissible_K(man, N, eps, region, grid, directions="radial")
        out["p1"], out["p2"] = conformal_bounds(man, eps, region, grid)
    mask = grid.region_mask(*region)
    r = grid.r[mask]
    rad, tan = radial_ricci(man, N, r), tangential_ricci(man, N, r)
    out["ricci_radial_min"] = float(np.min(rad))
    out["ricci_tangential_min"] = float(np.min(tan))
    stride = max(1, len(r) // 20)
    out["profile"] = [{"r": float(a), "radial": float(b), "tangential": float(c)}
                      for a, b, c in zip(r[::stride], rad[::stride], tan[::stride])]
    return out


def comparison_section(sc) -> dict:
    man = _manifold(sc)
    cd = _curvature_doc(sc)
    comp = sc.get("comparison", {})
    grid = Grid1D(man, comp.get("M", 400))
    region = tuple(comp.get("region", man.domain))
    N, eps = as_extended(cd["N"]), float(cd["eps"])
    auto_K = admissible_K(man, N, eps, region, grid, directions="radial")
    p1, p2 = conformal_bounds(man, eps, region, grid)
    K = auto_K if cd.get("K", "auto") == "auto" else float(cd["K"])
    p1 = p1 if cd.get("p1", "auto") == "auto" else float(cd["p1"])
    p2 = p2 if cd.get("p2", "auto") == "auto" else float(cd["p2"])
    params = CurvatureParams(N=N, eps=eps, K=K, p1=p1, p2=p2)
    rep = verify_comparison(man, params, grid, region)
    doc = rep.to_dict(comp.get("tolerance", 1e-10))
    doc["auto"] = {k: cd.get(k, "auto") == "auto" for k in ("K", "p1", "p2")}
    return doc


def _estimate_params(sc, est: dict, solution, opts: Options):
    man = _manifold(sc)
    kind = est["kind"]
    n, m = man.n, solution.m
    lo, hi = man.domain
    R = est.get("R", "inf")
    R = INF if R == "inf" else float(R)
    center = float(est.get("center", 0.0))
    local = kind in ("local-Thm3.1", "constant-Thm2.2")
    if local and R == INF:
        raise ConfigError(f"{kind} needs a finite R")
    region = (max(lo, center - 2 * R), min(hi, center + 2 * R)) if local else (lo, hi)
    grid = solution.grid
    cd = sc.get("curvature", {"N": n, "eps": 1.0})
    N = as_extended(cd["N"]) if kind != "LiYau-2.4/2.5" else float(n)
    eps = float(cd.get("eps", 1.0))
    alpha = float(est.get("alpha", 2.0 if local else 1.0))

    def pick(key, auto):
        val = cd.get(key, "auto")
        return auto() if val == "auto" else float(val)

    c, p1, p2 = 1.0, 1.0, 1.0
    if kind in ("local-Thm3.1", "global-Cor3.2"):
        c = c_const(n, N, eps)
        K = pick("K", lambda: admissible_K(man, N, eps, region, grid))
        p1 = pick("p1", lambda: conformal_bounds(man, eps, region, grid)[0])
        p2 = pick("p2", lambda: conformal_bounds(man, eps, region, grid)[1])
    elif kind in ("constant-Thm2.2", "constant-Cor2.2"):
        if N == INF:
            raise ConfigError(f"{kind} needs a finite N >= n")
        c = 1.0 / (N - 1.0)
        K = pick("K", lambda: admissible_K(man, N, 1.0, region, grid))
    elif kind == "LiYau-2.4/2.5":
        K = pick("K", lambda: admissible_K(man, n, 1.0, region, grid))
    else:
        K = 0.0
    needs_L = kind in ("local-Thm3.1", "global-Cor3.2", "constant-Thm2.2", "constant-Cor2.2")
    L = 0.0
    if needs_L:
        L_doc = est.get("L", "auto")
        L = sup_L(solution, region) if L_doc == "auto" else float(L_doc)
    params = EstimateParams(alpha=alpha, m=m, N=N, n=n, L=L, R=R, K=K, p1=p1, p2=p2, c=c,
                            center=center, legacy_coth=opts.legacy_coth)
    return params, (eps if kind in ("local-Thm3.1", "global-Cor3.2") else None)


def estimate_section(sc, est: dict, solution, opts: Options, index: int) -> dict:
    kind = est["kind"]
    params, eps = _estimate_params(sc, est, solution, opts)
    tol = opts.tolerance if opts.tolerance is not None else float(est.get("tolerance", 0.0))
    rep = verify(
        solution, kind, params, eps=eps, delta=est.get("delta"), band=int(est.get("band", 0)),
        t_min=est.get("t_min"), t_max=est.get("t_max"), tolerance=tol,
        printed_form=opts.cor32_printed_form and kind == "global-Cor3.2",
        front=_front(sc) if est.get("exact_front") else None,
    )
    scale = float(est.get("rhs_scale", 1.0))
    if scale != 1.0:
        rep.rhs = rep.rhs * scale
    doc = rep.to_dict()
    doc["rhs_scale"] = scale
    if kind == "global-Cor3.2":
        doc["printed_form"] = bool(opts.cor32_printed_form)
    if est.get("export_csv"):
        name = f"{sc['id']}.estimate{index}.csv"
        rep.write_csv(Path(opts.out) / name)
        doc["csv"] = name
    return doc


def oracle_section(sc, solution=None) -> dict:
    man = _manifold(sc)
    prob = sc.get("problem")
    if prob is None:
        raise ConfigError(f"scenario {sc['id']}: the oracle needs a 'problem' section")
    name = prob["initial"]["name"]
    out: dict = {"initial": name}
    if name == "barenblatt":
        bp = _barenblatt_params(man, prob)
        t_mid = 0.5 * (bp.t0 + prob["T"])
        grid = Grid1D(man, prob["M"])
        inside = (grid.r > 0) & (grid.r < 0.8 * bp.support_radius(t_mid))
        res = barenblatt_residual(bp, grid.r[inside], t_mid)
        out["barenblatt"] = {
            "params": bp.to_dict(),
            "residual_max_inside": float(np.max(np.abs(res))),
            "mass": barenblatt_mass(bp),
            "identities": barenblatt_pressure_identities(bp, t_mid),
        }
        if prob.get("mode", "solve") == "solve":
            problem = PMEProblem(
                man, prob["m"], _initial(man, prob), prob["T"], prob["M"], t0=bp.t0,
                policy=TimeStepPolicy(dt=prob.get("dt", 1e-3)), allow_vacuum=True, barenblatt=bp,
            )
            levels = sc.get("oracle", {}).get("levels", 3)
            out["refinement"] = refine_study(problem, levels=levels).to_dict()
    elif name == "heat-kernel":
        t = np.linspace(prob.get("t0", 1.0), prob["T"], 5)
        r = np.linspace(*man.domain, 7)
        dev = max(float(np.max(np.abs(gaussian_li_yau(man.n, r, tt) - man.n / (2 * tt)))) for tt in t)
        out["li_yau_identity_max_deviation"] = dev
    if solution is not None and solution.m > 1:
        res = pressure_evolution_residual(solution)
        out["pressure_residual_max"] = float(np.nanmax(res))
        out["mass_rel_drift"] = solution.summary()["mass_rel_drift"]
    return out


# ---------------------------------------------------------------------------
# execution


def run_scenario(sc: dict, command: str, opts: Options) -> dict:
    doc: dict = {"id": sc["id"], "command": command, "schema_version": SCHEMA_VERSION,
                 "manifold": sc["manifold"]}
    statuses: list[str] = []
    try:
        man = _manifold(sc)
        doc["manifold"] = man.to_dict()
        if command in ("run", "curvature") and "curvature" in sc:
            doc["curvature"] = curvature_section(sc)
        if command == "compare" or (command == "run" and "comparison" in sc):
            comp = comparison_section(sc)
            doc["comparison"] = comp
            statuses.append(comp["status"])
        solution = None
        wants_solution = command in ("simulate", "verify") or (
            command in ("run", "oracle") and "problem" in sc and (sc.get("estimates") or command == "run")
        )
        if wants_solution:
            solution = build_solution(sc)
            doc["simulation"] = solution.summary()
            if (sc.get("problem") or {}).get("export_csv"):
                name = f"{sc['id']}.solution.csv"
                solution.write_csv(Path(opts.out) / name)
                doc["simulation"]["csv"] = name
        if command in ("run", "verify"):
            doc["estimates"] = []
            for i, est in enumerate(sc.get("estimates", [])):
                try:
                    rep = estimate_section(sc, est, solution, opts, i)
                except HypothesisError as exc:
                    rep = {"kind": est["kind"], "status": "HYPOTHESIS-VIOLATION", "error": str(exc)}
                doc["estimates"].append(rep)
                statuses.append(rep["status"])
        if command == "oracle" or (command == "run" and "oracle" in sc):
            doc["oracle"] = oracle_section(sc, solution)
    except (HypothesisViolation,) as exc:
        statuses.append("HYPOTHESIS-VIOLATION")
        doc["error"] = str(exc)
    except (ConfigError, GeometryError, SolverError, EstimateError, ComparisonError, OracleError, KeyError) as exc:
        statuses.append("ERROR")
        doc["error"] = f"{type(exc).__name__}: {exc}"
    doc["status"] = _combine(statuses)
    return doc


def _combine(statuses) -> str:
    for s in ("ERROR", "HYPOTHESIS-VIOLATION", "FAIL"):
        if s in statuses:
            return s
    return "PASS"


def exit_code(statuses) -> int:
    if any(s in ("ERROR", "HYPOTHESIS-VIOLATION") for s in statuses):
        return EXIT_ERROR
    if "FAIL" in statuses:
        return EXIT_FAIL
    return EXIT_PASS


def _worker(args):
    sc, command, opts = args
    return run_scenario(sc, command, opts)


def run_batch(config: dict, command: str, opts: Options, jobs: int = 1) -> tuple[dict, int]:
    out = Path(opts.out)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = sorted(config["scenarios"], key=lambda sc: sc["id"])
    tasks = [(sc, command, opts) for sc in scenarios]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_worker, tasks))
    else:
        reports = [_worker(t) for t in tasks]
    for rep in reports:
        (out / f"{rep['id']}.json").write_text(dumps(rep))
    statuses = [rep["status"] for rep in reports]
    code = exit_code(statuses)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "exit_code": code,
        "counts": {s: statuses.count(s) for s in sorted(set(statuses))},
        "scenarios": [
            {"id": rep["id"], "status": rep["status"], "report": f"{rep['id']}.json",
             **({"error": rep["error"]} if "error" in rep else {})}
            for rep in reports
        ],
    }
    (out / "summary.json").write_text(dumps(summary))
    return summary, code


class _Parser(argparse.ArgumentParser):
    # usage errors are execution errors (exit 1); exit 2 is reserved for violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmelab", description="Porous medium gradient-estimate verification harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "run": "run every section requested by each scenario",
        "curvature": "Ric_psi^N profile, admissible K, p1/p2, c and eps-range verdict",
        "compare": "Laplacian comparison report",
        "simulate": "solve and export",
        "verify": "solve and evaluate estimate reports",
        "oracle": "closed-form residual and convergence certificates",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="scenario batch (JSON)")
        p.add_argument("--out", default="pmelab-out", help="report directory")
        p.add_argument("--jobs", type=int, default=1, help="scenario-level worker processes")
        p.add_argument("--tolerance", type=float, default=None, help="override every estimate tolerance")
        p.add_argument("--legacy-coth", action="store_true", help="use coth(sqrt(K) R) in the local bounds")
        p.add_argument("--cor32-printed-form", action="store_true", help="square the global-bound bracket")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        config = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    opts = Options(out=args.out, tolerance=args.tolerance, legacy_coth=args.legacy_coth,
                   cor32_printed_form=args.cor32_printed_form)
    summary, code = run_batch(config, args.command, opts, args.jobs)
    for row in summary["scenarios"]:
        print(f"{row['status']:<22} {row['id']}" + (f"  ({row['error']})" if "error" in row else ""))
    print(f"exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
