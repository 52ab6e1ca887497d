"""Command-line batch driver.

    gravinst zoo list
    gravinst verify  --family kerr --m 1 --a 0.3 --suite wu,identities
    gravinst flux    --family kerr --shells 20,40,80,160 --csv flux.csv
    gravinst falloff --family kerr
    gravinst compare --family kerr --a 0.30 --against --a 0.31 --k 3
    gravinst report merge a.json b.json -o all.json

Exit status: 0 every enabled assertion passed, 1 an assertion failed,
2 the configuration could not be parsed, 3 a numerical procedure did not
converge (inconclusive).  ``GRAVINST_THREADS`` sets the number of shells
evaluated in parallel.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import asymptotics as A
from . import identities as I
from . import zoo as Z
from .errors import ConfigError, ConvergenceError, GeometryError
from .wu import WuStack

SCHEMA_VERSION = 1
SUITES = ("curvature", "wu", "identities", "flux", "falloff", "compare")
PARAM_KEYS = ("m", "a", "n", "radius", "link")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INCONCLUSIVE = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "ricci": 1e-8,
    "wu_relative": 1e-8,
    "nabla_omega": 1e-6,
    "killing": 1e-6,
    "jacobi_killing": 1e-5,
    "weitzenbock_einstein": 1e-5,
    "weitzenbock_rescaled": 1e-4,
    "hodge": 1e-5,
    "weyl_divergence": 1e-7,
    "weighted_divergence": 1e-6,
    "inequality": 1e-10,
    "quadrature": A.STABILITY_TOL,
}


# configuration -------------------------------------------------------------------------

@dataclass
class SamplePlanConfig:
    count: int = 50
    seed: int = 0
    shells: List[float] = field(default_factory=lambda: [20.0, 40.0, 80.0, 160.0])  # in family scale units
    nodes: List[int] = field(default_factory=lambda: list(A.DEFAULT_NODES))


@dataclass
class OutputConfig:
    report: Optional[str] = None   # None: print the report to stdout
    csv: Optional[str] = None


@dataclass
class RunConfig:
    family: str = "flat"
    params: Dict[str, object] = field(default_factory=dict)
    suites: List[str] = field(default_factory=lambda: ["curvature"])
    sample: SamplePlanConfig = field(default_factory=SamplePlanConfig)
    tolerances: Dict[str, float] = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)
    against: Dict[str, object] = field(default_factory=dict)
    k: int = 3
    falloff_quantities: List[str] = field(default_factory=lambda: ["riemann", "w_plus", "alpha_h", "alpha_g"])

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        d.pop("schema_version", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            sample = SamplePlanConfig(**d.pop("sample", {}))
            output = OutputConfig(**d.pop("output", {}))
            cfg = cls(sample=sample, output=output, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def validate(self) -> None:
        if self.family not in Z.FAMILY_NAMES:
            raise ConfigError(f"unknown family {self.family!r}")
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suites {bad}; choose from {SUITES}")
        bad = [k for k in self.tolerances if k not in DEFAULT_TOLERANCES]
        if bad:
            raise ConfigError(f"unknown tolerance keys {bad}")
        if len(self.sample.nodes) != 3 or any(int(n) < 1 for n in self.sample.nodes):
            raise ConfigError("sample.nodes must be three positive integers")
        if self.sample.count < 1:
            raise ConfigError("sample.count must be positive")
        if not 0 <= self.k <= 3:
            raise ConfigError("k must be between 0 and 3")
        bad = [q for q in self.falloff_quantities if q not in A.FALLOFF_QUANTITIES]
        if bad:
            raise ConfigError(f"unknown fall-off quantities {bad}")
        Z.family(self.family, **self.params)
        if "compare" in self.suites:
            Z.family(self.family, **{**self.params, **self.against})


# report helpers ------------------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: numpy to builtins, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _table(points, **cols) -> dict:
    return {"points": np.asarray(points).tolist(), **{k: np.asarray(v).tolist() for k, v in cols.items()}}


# suites ----------------------------------------------------------------------------------

def _wu_sign(fam: Z.MetricFamily) -> Optional[int]:
    if fam.flags.wu_plus:
        return 1
    if fam.flags.wu_minus:
        return -1
    return None


def suite_curvature(cfg: RunConfig, fam, spec) -> dict:
    pts = _points(cfg, fam, spec)
    geo = Z._geometry(spec, pts)
    n_ric, n_rm, floor, n_tf = Z._norms(geo)
    halves = Z.weyl_half_dets(spec, pts)
    tol = cfg.tol("ricci")
    checks = {}
    if fam.flags.ricci_flat:
        rel = Z._relative(n_ric, n_rm, floor)
        checks["ricci_flat"] = {"max_relative": float(np.max(rel)), "tol": tol, "pass": bool(np.max(rel) < tol)}
    elif fam.flags.einstein:
        rel = Z._relative(n_tf, n_rm, floor)
        checks["einstein"] = {"max_relative": float(np.max(rel)), "tol": tol, "pass": bool(np.max(rel) < tol)}
    for key, flag in (("plus", fam.flags.wu_plus), ("minus", fam.flags.wu_minus)):
        if flag:
            checks[f"det_w_{key}_positive"] = {"min_det": float(np.min(halves[key]["det"])),
                                             "pass": bool(np.all(halves[key]["det"] > 0))}
    return {
        "checks": checks,
        "max_riemann": float(np.max(n_rm)),
        "max_ricci": float(np.max(n_ric)),
        "table": _table(pts, riemann=n_rm, ricci=n_ric, det_w_plus=halves["plus"]["det"],
                        det_w_minus=halves["minus"]["det"]),
    }


def _points(cfg: RunConfig, fam, spec) -> np.ndarray:
    return Z.sample_points(fam, spec, cfg.sample.count, cfg.sample.seed)


def _stack(cfg, fam, spec, order) -> Optional[WuStack]:
    sign = _wu_sign(fam)
    if sign is None:
        return None
    return WuStack(spec, _points(cfg, fam, spec), order=order, sign=sign, anchor=Z.anchor_form(spec))


def suite_wu(cfg: RunConfig, fam, spec) -> dict:
    st = _stack(cfg, fam, spec, 7)
    if st is None:
        return {"applicable": False, "reason": "det W > 0 fails on both halves", "checks": {}}
    s_g = st.s_g.value
    a_g = st.alpha_g.value
    rel = np.abs(s_g - 6.0 * a_g) / np.maximum(np.abs(s_g), 1e-300)
    nab = st.nabla_omega()
    kil, kil_scale = st.killing_residual("h")
    jk, jk_scale = st.jacobi_killing_residual("h")
    det = st.h_geo.weyl_det(st.sign).value
    checks = {
        "det_w_positive": {"min": float(np.min(det)), "pass": bool(np.all(det > 0))},
        "s_g_positive": {"min": float(np.min(s_g)), "pass": bool(np.all(s_g > 0))},
        "s_g_equals_6_alpha_g": {"max_relative": float(np.max(rel)), "tol": cfg.tol("wu_relative"),
                                 "pass": bool(np.max(rel) < cfg.tol("wu_relative"))},
        "nabla_omega": {"max": float(np.max(nab)), "tol": cfg.tol("nabla_omega"),
                        "pass": bool(np.max(nab) < cfg.tol("nabla_omega"))},
        "killing": {"max": float(np.max(kil)), "tol": cfg.tol("killing"),
                    "pass": bool(np.max(kil) < cfg.tol("killing"))},
        "jacobi_killing": {"max": float(np.max(jk)), "tol": cfg.tol("jacobi_killing"),
                           "pass": bool(np.max(jk) < cfg.tol("jacobi_killing"))},
    }
    return {
        "applicable": True,
        "sign": st.sign,
        "checks": checks,
        "table": _table(st.points, alpha_h=st.alpha_h.value, s_g=s_g, alpha_g=a_g, nabla_omega=nab,
                        killing=kil, jacobi_killing=jk),
    }


def suite_identities(cfg: RunConfig, fam, spec) -> dict:
    pts = _points(cfg, fam, spec)
    reports = []
    if fam.flags.einstein:
        reports.append(I.weitzenbock_einstein_residual(spec, pts, cfg.tol("weitzenbock_einstein")).summary())
        reports += [r.summary() for r in I.weyl_divergence_pair(spec, pts, cfg.tol("weyl_divergence"))]
    st = _stack(cfg, fam, spec, 6)
    if st is not None:
        reports.append(I.weitzenbock_rescaled_residual(spec, tol=cfg.tol("weitzenbock_rescaled"), stack=st).summary())
        reports.append(I.weighted_divergence_residual(spec, tol=cfg.tol("weighted_divergence"), stack=st).summary())
        reports.append(I.hodge_weitzenbock_kahler(spec, tol=cfg.tol("hodge"), stack=st).summary())
        for r in I.inequality_battery(spec, tol=cfg.tol("inequality"), stack=st):
            reports.append(r.summary())
    checks = {r["name"]: {"pass": r["pass"] or r.get("informational", False)} for r in reports}
    return {"checks": checks, "reports": reports}


def _radii(cfg: RunConfig, fam) -> List[float]:
    return [float(r) * fam.scale for r in cfg.sample.shells]


def flux_csv(report: A.FluxReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("radius",) + A.FLUX_COLUMNS)
    for row in report.rows():
        w.writerow([repr(float(row["radius"]))] + [repr(float(row[k])) for k in A.FLUX_COLUMNS])
    return buf.getvalue()


def suite_flux(cfg: RunConfig, fam, spec) -> dict:
    sign = _wu_sign(fam)
    if spec.alf is None or sign is None:
        return {"applicable": False, "reason": "needs an ALF family with det W > 0", "checks": {}}
    rep = A.boundary_integrals(spec, _radii(cfg, fam), tuple(cfg.sample.nodes), sign=sign)
    trend = rep.flux_trend()
    l1 = A.s_l1_proxy(rep)
    checks = {
        "quadrature_converged": {"max_change": rep.max_change, "tol": cfg.tol("quadrature"), "pass": True},
        "omega_flux_to_zero": {"pass": trend["passed"]},
        "s_g_l1_proxy": {"pass": l1["converges"]},
    }
    return {"applicable": True, "checks": checks, "flux": rep.summary(), "s_l1": l1,
            "_csv": flux_csv(rep)}


def suite_falloff(cfg: RunConfig, fam, spec) -> dict:
    if spec.alf is None:
        return {"applicable": False, "reason": "no ALF end", "checks": {}}
    sign = _wu_sign(fam) or 1
    fits, checks = {}, {}
    nodes = tuple(max(1, n // 4) for n in cfg.sample.nodes)
    for q in cfg.falloff_quantities:
        if q in ("alpha_g", "grad_alpha_g") and _wu_sign(fam) is None:
            continue
        rep = A.falloff_fit(spec, q, _radii(cfg, fam), nodes=nodes, sign=sign)
        fits[q] = rep.summary()
        decays = rep.fit.exact_zero or (rep.fit.slope is not None and rep.fit.slope < 0)
        checks[f"{q}_decays"] = {"pass": bool(decays)}
    return {"applicable": True, "checks": checks, "fits": fits, "sup_nodes": list(nodes)}


def suite_compare(cfg: RunConfig, fam, spec) -> dict:
    other = Z.family(cfg.family, **{**cfg.params, **cfg.against})
    h0 = Z.instantiate(other)
    plan = A.SamplePlan(seed=cfg.sample.seed, scale=fam.scale)
    w = A.weighted_distance(spec, h0, cfg.k, plan)
    return {"against": other.label(), "distance": w.summary(),
            "checks": {"finite": {"pass": bool(math.isfinite(w.value))}}}


SUITE_FUNCS = {
    "curvature": suite_curvature,
    "wu": suite_wu,
    "identities": suite_identities,
    "flux": suite_flux,
    "falloff": suite_falloff,
    "compare": suite_compare,
}


def run(cfg: RunConfig) -> tuple:
    """Run the enabled suites; returns (exit status, report dict, csv text or None)."""
    cfg.validate()
    fam = Z.family(cfg.family, **cfg.params)
    spec = Z.instantiate(fam)
    # output destinations do not affect results, so they stay out of the report
    echo = {k: v for k, v in cfg.to_dict().items() if k != "output"}
    report = {"schema_version": SCHEMA_VERSION, "config": echo, "family": fam.label(),
              "flags": dataclasses.asdict(fam.flags), "suites": {}}
    failed = inconclusive = False
    csv_text = None
    for name in cfg.suites:
        try:
            res = SUITE_FUNCS[name](cfg, fam, spec)
        except ConfigError:
            raise
        except ConvergenceError as exc:
            report["suites"][name] = {"error": "non-convergence", "message": str(exc), "checks": {}, "pass": False}
            inconclusive = True
            continue
        except GeometryError as exc:
            res = {"error": type(exc).__name__, "message": str(exc), "checks": {"ran": {"pass": False}}}
        csv_text = res.pop("_csv", csv_text)
        res["pass"] = all(c["pass"] for c in res["checks"].values())
        failed = failed or not res["pass"]
        report["suites"][name] = res
    # an assertion failure outranks an inconclusive suite
    status = EXIT_FAIL if failed else (EXIT_INCONCLUSIVE if inconclusive else EXIT_OK)
    report["pass"] = status == EXIT_OK
    report["status"] = status
    return status, report, csv_text


# argument parsing ---------------------------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_params(p: argparse.ArgumentParser) -> None:
    for key in ("m", "a", "n", "radius"):
        p.add_argument(f"--{key}", type=float, default=None)
    p.add_argument("--link", choices=("S2xS1", "S3"), default=None)


def _add_run_options(p: argparse.ArgumentParser, suites: bool) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--family", choices=Z.FAMILY_NAMES)
    _add_params(p)
    if suites:
        p.add_argument("--suite", help="comma-separated suites: " + ",".join(SUITES))
    p.add_argument("--count", type=int, help="sample points")
    p.add_argument("--seed", type=int)
    p.add_argument("--shells", type=_floats, help="shell radii in units of the family scale")
    p.add_argument("--nodes", type=_ints, help="theta,phi,tau nodes per shell")
    p.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE", help="tolerance override")
    p.add_argument("--quantities", help="fall-off quantities (comma-separated)")
    p.add_argument("--k", type=int, help="derivative order of the weighted norm")
    p.add_argument("-o", "--out", help="report path (default: stdout)")
    p.add_argument("--csv", help="CSV path for flux rows")
    p.add_argument("--emit-config", help="write the resolved configuration here and continue")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravinst", description="Verification driver for gravitational instantons.")
    sub = parser.add_subparsers(dest="command", required=True)
    zoo = sub.add_parser("zoo", help="metric catalogue")
    zoo_sub = zoo.add_subparsers(dest="zoo_command", required=True)
    zoo_sub.add_parser("list", help="list families, default parameters and flags")
    _add_run_options(sub.add_parser("verify", help="run verification suites"), suites=True)
    _add_run_options(sub.add_parser("flux", help="boundary integrals over shells"), suites=False)
    _add_run_options(sub.add_parser("falloff", help="fall-off exponents"), suites=False)
    _add_run_options(sub.add_parser("compare", help="weighted distance to a second parameter set (after --against)"),
                     suites=False)
    rep = sub.add_parser("report", help="report utilities")
    rep_sub = rep.add_subparsers(dest="report_command", required=True)
    merge = rep_sub.add_parser("merge", help="merge report files")
    merge.add_argument("reports", nargs="+")
    merge.add_argument("-o", "--out")
    return parser


def _split_against(argv: List[str]) -> tuple:
    """Split ``compare`` arguments at --against; parameter flags after it
    describe the second metric, anything else is returned to the main parser."""
    if "--against" not in argv:
        return argv, None
    i = argv.index("--against")
    head, tail = argv[:i], argv[i + 1:]
    p = argparse.ArgumentParser(add_help=False)
    _add_params(p)
    ns, rest = p.parse_known_args(tail)
    against = {k: getattr(ns, k) for k in PARAM_KEYS if getattr(ns, k) is not None}
    return head + rest, against


def config_from_args(ns: argparse.Namespace, command: str, against: Optional[dict] = None) -> RunConfig:
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    else:
        cfg = RunConfig()
    if ns.family:
        if ns.family != cfg.family:
            cfg.params = {}
        cfg.family = ns.family
    for key in PARAM_KEYS:
        v = getattr(ns, key, None)
        if v is not None:
            cfg.params[key] = v
    if command == "verify":
        if ns.suite:
            cfg.suites = [s.strip() for s in ns.suite.split(",") if s.strip()]
    else:
        cfg.suites = [command]
    if ns.count is not None:
        cfg.sample.count = ns.count
    if ns.seed is not None:
        cfg.sample.seed = ns.seed
    if ns.shells:
        cfg.sample.shells = ns.shells
    if ns.nodes:
        cfg.sample.nodes = ns.nodes
    for item in ns.tol:
        if "=" not in item:
            raise ConfigError(f"--tol expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            cfg.tolerances[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"tolerance {k!r} is not a number") from None
    if ns.quantities:
        cfg.falloff_quantities = [q.strip() for q in ns.quantities.split(",") if q.strip()]
    if ns.k is not None:
        cfg.k = ns.k
    if ns.out:
        cfg.output.report = ns.out
    if ns.csv:
        cfg.output.csv = ns.csv
    if against is not None:
        cfg.against = against
    cfg.validate()
    return cfg


def _write(path: Optional[str], text: str, stdout) -> None:
    if path is None:
        stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def zoo_listing() -> dict:
    out = {}
    for name in Z.FAMILY_NAMES:
        fam = Z.family(name)
        out[name] = {"params": dict(fam.params), "flags": dataclasses.asdict(fam.flags)}
    return {"schema_version": SCHEMA_VERSION, "families": out}


def merge_reports(paths: List[str]) -> dict:
    reports = []
    for p in paths:
        try:
            with open(p, encoding="utf-8") as fh:
                r = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {p}: {exc}") from None
        if r.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"{p}: unsupported schema_version {r.get('schema_version')!r}")
        reports.append(r)
    statuses = [int(r.get("status", EXIT_OK)) for r in reports]
    status = EXIT_FAIL if EXIT_FAIL in statuses else max(statuses, default=EXIT_OK)
    return {"schema_version": SCHEMA_VERSION, "reports": reports, "pass": status == EXIT_OK, "status": status}


def main(argv: Optional[List[str]] = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    against = None
    if argv and argv[0] == "compare":
        argv, against = _split_against(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if ns.command == "zoo":
            stdout.write(dumps(zoo_listing()))
            return EXIT_OK
        if ns.command == "report":
            merged = merge_reports(ns.reports)
            _write(ns.out, dumps(merged), stdout)
            return merged["status"]
        cfg = config_from_args(ns, ns.command, against)
        if ns.emit_config:
            _write(ns.emit_config, cfg.to_json() + "\n", stdout)
        status, report, csv_text = run(cfg)
    except ConfigError as exc:
        stderr.write(f"gravinst: configuration error: {exc}\n")
        return EXIT_CONFIG
    _write(cfg.output.report, dumps(report), stdout)
    if cfg.output.csv and csv_text is not None:
        _write(cfg.output.csv, csv_text, stdout)
    for name, res in report["suites"].items():
        stderr.write(f"{name}: {'pass' if res.get('pass') else 'FAIL'}\n")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
