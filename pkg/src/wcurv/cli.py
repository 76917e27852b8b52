"""Scenario runner: ``wcurv run --config cfg.json`` and ``wcurv scenario list``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import functionals as F
from . import variations as V
from .bases import default_fields
from .geometry import MetricDensity, build_backend, curvature_pack
from .invariants import bach, bach_alt, div_bach_residual, invariant_pack
from .spectrum import obata_check

log = logging.getLogger("wcurv")

SCHEMA = "wcurv-run/1"
CHECKS = ("invariants", "identities", "euler-lagrange", "first-variation", "second-variation", "spectrum")

SCENARIOS = {
    "gaussian": "shrinking Gaussian on R^n, phi = |x|^2/(4 tau), Gauss-Hermite nodes",
    "sphere": "round unit S^n, constant potential; tau = 'soliton' gives tau = 1/(2(n-1))",
    "flat-torus": "flat periodic box, seeded band-limited phi",
    "perturbed-torus": "conformally perturbed periodic box exp(2u) delta, seeded u and phi",
    "product": "S^m x R^k shrinking soliton (n = m + k, gaussian_dim = k)",
}

DEFAULT_TOLERANCES = {
    "bach_divergence": 1e-6,
    "tau_bach": 1e-8,
    "bach_alt": 1e-7,
    "symmetry": 1e-9,
    "sigma": 1e-10,
    "el_exact": 1e-9,
    "el_grid": 1e-6,
    "fv_abs": 1e-7,
    "fv_rel": 1e-6,
    "psd": 1e-6,
    "lambda1": 1e-8,
}


class ConfigError(Exception):
    """Invalid configuration or failed backend construction (exit code 2)."""


@dataclass
class CheckRecord:
    name: str
    status: str
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    runtime: float = 0.0
    reason: str | None = None

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "status": self.status,
            "measured": self.measured,
            "tolerances": self.tolerances,
            "runtime": self.runtime,
        }
        if self.reason:
            out["reason"] = self.reason
        return out


@dataclass
class RunReport:
    environment: dict
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.status in ("pass", "skipped") for c in self.checks)

    def as_dict(self) -> dict:
        return {"schema": SCHEMA, "environment": self.environment, "checks": [c.as_dict() for c in self.checks]}


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    schema = cfg.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA!r})")
    if cfg.get("scenario") not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.get('scenario')!r}; see 'wcurv scenario list'")
    checks = cfg.get("checks", [])
    bad = [c for c in checks if c not in CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; choose from {list(CHECKS)}")
    if len(set(checks)) != len(checks):
        raise ConfigError("checks must not repeat")
    tols = cfg.get("tolerances", {}) or {}
    for k, v in tols.items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {k!r}")
        if not isinstance(v, (int, float)) or not v >= np.finfo(float).eps:
            raise ConfigError(f"tolerance {k} must be >= machine epsilon")
    pert = cfg.get("perturbation") or {}
    if cfg["scenario"] in ("flat-torus", "perturbed-torus"):
        randomized = cfg["scenario"] == "perturbed-torus" or pert.get("amplitude", 0) or "seed" in pert
        if randomized and pert.get("seed", cfg.get("seed")) is None:
            raise ConfigError("randomised torus scenarios need a seed")
    return cfg


def backend_spec(cfg: dict) -> dict:
    spec = {k: v for k, v in cfg.items() if k not in ("checks", "tolerances", "output", "schema", "seed")}
    pert = dict(cfg.get("perturbation") or {})
    if cfg.get("seed") is not None and "seed" not in pert:
        pert["seed"] = cfg["seed"]
    if pert:
        spec["perturbation"] = pert
    if cfg["scenario"] in ("flat-torus", "perturbed-torus") and "seed" in pert and "amplitude" not in pert:
        pert["amplitude"] = 0.3
    return spec


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------


def _closed_form(md: MetricDensity) -> bool:
    return md.kind in ("gaussian", "sphere", "product")


def _soliton(md: MetricDensity) -> bool:
    if md.tau is None:
        return False
    pack = curvature_pack(md)
    return float(np.abs(pack.ric_tilde)[md.chart.active].max()) <= 1e-8 * max(1.0, md.lam)


def check_invariants(md, tol, rng):
    pack = curvature_pack(md)
    inv = invariant_pack(pack)
    act = md.chart.active
    m = {"bach_asymmetry": float(np.abs(inv.bach_tilde - np.swapaxes(inv.bach_tilde, -1, -2))[act].max())}
    t = {"symmetry": tol["symmetry"]}
    ok = m["bach_asymmetry"] <= tol["symmetry"]
    if _soliton(md):
        s1 = inv.sigma1
        m["sigma2_defect"] = float(np.abs(inv.sigma2 - s1**2 / 2)[act].max())
        m["sigma3_defect"] = float(np.abs(inv.sigma3 - s1**3 / 6)[act].max())
        m["v3_defect"] = float(np.abs(inv.v3 - s1**3 / 6)[act].max())
        m["sigma1_max"] = float(s1[act].max())
        t["sigma"] = tol["sigma"]
        ok = ok and max(m["sigma2_defect"], m["sigma3_defect"], m["v3_defect"]) <= tol["sigma"]
        ok = ok and m["sigma1_max"] <= tol["sigma"]
    elif md.kind == "flat-torus" and not np.any(md.phi):
        lam, n = md.lam, md.n
        ref = (-lam * n, lam**2 * n * (n - 1) / 2, -(lam**3) * n * (n - 1) * (n - 2) / 6)
        for name, val, r in zip(("sigma1", "sigma2", "sigma3"), (inv.sigma1, inv.sigma2, inv.sigma3), ref):
            m[f"{name}_defect"] = float(np.abs(val - r)[act].max())
        t["sigma"] = tol["sigma"]
        ok = ok and max(m["sigma1_defect"], m["sigma2_defect"], m["sigma3_defect"]) <= tol["sigma"]
    return ("pass" if ok else "fail"), m, t, None


def check_identities(md, tol, rng):
    act = md.chart.active
    pack = curvature_pack(md)
    Bt, B = bach(pack)
    lam = pack.lam
    scale = md.tau if md.tau is not None else 1.0
    tau_res = float(np.abs(scale * (B - Bt - lam * pack.ricci))[act].max())
    alt = float(np.abs(bach_alt(pack) - Bt)[act].max())
    l21 = div_bach_residual(md)
    m = {"bach_divergence_sup": l21["sup"], "bach_divergence_l2": l21["l2"], "tau_bach_residual": tau_res, "bach_alt_residual": alt}
    t = {"bach_divergence": tol["bach_divergence"], "tau_bach": tol["tau_bach"], "bach_alt": tol["bach_alt"]}
    ok = l21["sup"] <= tol["bach_divergence"] and tau_res <= tol["tau_bach"] and alt <= tol["bach_alt"]
    return ("pass" if ok else "fail"), m, t, None


def _need_tau(md):
    if md.tau is None:
        return "functional checks need tau > 0 (set 'tau' in the config)"
    return None


def check_euler_lagrange(md, tol, rng):
    if (why := _need_tau(md)) is not None:
        return "skipped", {}, {}, why
    rep = F.el_residual(md)
    lim = tol["el_exact"] if _closed_form(md) else tol["el_grid"]
    m = {"c": rep.c, "deviation_sup": rep.sup, "deviation_l2": rep.l2}
    return ("pass" if rep.sup <= lim else "fail"), m, {"deviation": lim}, None


def check_first_variation(md, tol, rng):
    if (why := _need_tau(md)) is not None:
        return "skipped", {}, {}, why
    md = F.normalize_to_C1(md)
    basis = V.default_basis(md)
    worst = 0.0
    rows = []
    for _ in range(3):
        coef = rng.normal(size=len(basis))
        psi = sum(c * b.psi for c, b in zip(coef, basis))
        d = V.project_tangent(md, psi, float(rng.normal()) * 0.2)
        a = V.first_variation_analytic(F.W3, md, d)
        f, _ = V.first_variation_fd(F.W3, md, d)
        lim = max(tol["fv_abs"], tol["fv_rel"] * abs(f))
        worst = max(worst, abs(a - f) / lim)
        rows.append({"analytic": a, "fd": f})
    m = {"samples": rows, "worst_ratio": worst}
    return ("pass" if worst <= 1.0 else "fail"), m, {"abs": tol["fv_abs"], "rel": tol["fv_rel"]}, None


def _expected_null(md):
    if md.kind == "gaussian":
        return md.n + 1
    if md.kind == "sphere":
        return 0
    if md.kind == "product":
        return int(md.chart.factors[1].n)
    return None


def check_second_variation(md, tol, rng, threads=1):
    if (why := _need_tau(md)) is not None:
        return "skipped", {}, {}, why
    md = F.normalize_to_C1(md)
    crit = V.criticality(F.W3, md)
    if crit > V.CRITICAL_TOL:
        return "skipped", {"criticality": crit}, {}, "backend is not a critical point of W3; the quadratic form is path-dependent"
    basis = V.default_basis(md)
    rep = V.gram_quadratic_form(F.W3, md, basis, threads=threads, check=False)
    qn = float(np.abs(rep.Q).max())
    m = {
        "labels": rep.labels,
        "eigenvalues": rep.eigenvalues.tolist(),
        "null_dim": rep.null_dim,
        "min_eig": rep.min_eig,
    }
    ok = rep.min_eig >= -tol["psd"] * max(1.0, qn)
    exp = _expected_null(md)
    if exp is not None:
        m["expected_null_dim"] = exp
        ok = ok and rep.null_dim == exp
    return ("pass" if ok else "fail"), m, {"psd": tol["psd"], "null_rel": V.NULL_REL}, None


def check_spectrum(md, tol, rng):
    if (why := _need_tau(md)) is not None:
        return "skipped", {}, {}, why
    labels, fields = default_fields(md)
    rep = obata_check(md, fields, tol=tol["lambda1"], labels=labels)
    status = rep.pop("status")
    reason = rep.pop("reason", None)
    return status, rep, {"lambda1": tol["lambda1"]}, reason


RUNNERS = {
    "invariants": check_invariants,
    "identities": check_identities,
    "euler-lagrange": check_euler_lagrange,
    "first-variation": check_first_variation,
    "second-variation": check_second_variation,
    "spectrum": check_spectrum,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg: dict, *, threads: int | None = None) -> RunReport:
    """Build the backend and execute the configured checks in order."""
    cfg = validate_config(cfg)
    threads = V.default_threads() if threads is None else max(1, int(threads))
    try:
        md = build_backend(backend_spec(cfg))
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise ConfigError(f"backend build failed: {exc}") from exc
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances") or {})
    seed = cfg.get("seed", (cfg.get("perturbation") or {}).get("seed"))
    env = {
        "version": __version__,
        "seed": seed,
        "scenario": cfg["scenario"],
        "n": md.n,
        "tau": md.tau,
        "resolution": list(md.chart.shape),
        "threads": threads,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    records = []
    for name in cfg.get("checks", []):
        rng = np.random.default_rng(seed if seed is not None else 0)
        t0 = time.perf_counter()
        try:
            if name == "second-variation":
                status, m, t, reason = check_second_variation(md, tol, rng, threads)
            else:
                status, m, t, reason = RUNNERS[name](md, tol, rng)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            status, m, t, reason = "fail", {}, {}, f"{type(exc).__name__}: {exc}"
        rec = CheckRecord(name, status, _jsonable(m), _jsonable(t), round(time.perf_counter() - t0, 6), reason)
        log.info("%s: %s", name, status)
        records.append(rec)
    return RunReport(_jsonable(env), records)


def emit(report: RunReport, fmt: str = "json", path: str | None = None) -> str:
    """Serialise a report; write it to ``path`` when given."""
    if fmt == "json":
        text = json.dumps(report.as_dict(), indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "status", "runtime", "measured", "tolerances", "reason"])
        for c in report.checks:
            w.writerow([c.name, c.status, repr(c.runtime), json.dumps(c.measured), json.dumps(c.tolerances), c.reason or ""])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcurv", description="Weighted curvature invariants and functionals laboratory.")
    p.add_argument("--version", action="version", version=f"wcurv {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the checks of a scenario config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output file (default: stdout)")
    r.add_argument("--format", choices=("json", "csv"), default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--threads", type=int, default=None)
    sc = sub.add_parser("scenario", help="built-in scenarios")
    sc.add_argument("action", choices=("list",))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "scenario":
        for name, desc in SCENARIOS.items():
            print(f"{name:16s} {desc}")
        return 0
    threads = args.threads
    if threads is None:
        threads = V.default_threads()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
            if "perturbation" in cfg and cfg["perturbation"]:
                cfg["perturbation"] = dict(cfg["perturbation"], seed=args.seed)
        report = run(cfg, threads=threads)
    except ConfigError as exc:
        print(f"wcurv: error: {exc}", file=sys.stderr)
        return 2
    out = cfg.get("output") or {}
    fmt = args.format or out.get("format", "json")
    path = args.out or out.get("path")
    try:
        text = emit(report, fmt, path)
    except OSError as exc:
        print(f"wcurv: error: cannot write report: {exc}", file=sys.stderr)
        return 2
    if not path:
        sys.stdout.write(text)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
