"""Command-line driver: newtonres {spectrum,resonances,sweep,localize,oracle} CONFIG.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 a
threshold check failed (only with --check).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .asymptotics import (
    bound_samples,
    check_localization,
    fit_expansion,
    localization_constants,
    mk0_inverse_bound,
    predict_first_order,
)
from .errors import ConfigurationError, HypothesisNotMet, NewtonResError, NumericalError
from .field import ScatterScenario, frequency_sweep
from .geometry import DiscreteDomain, load_voxels, make_ball, make_box
from .io import csv_text, fmt, json_text, write_files
from .operators import LatticeNewton, assemble_newton
from .resonances import ResonanceResult, _contour_radius, contour_solver, resonance_set, resonances_csv
from .spectral import ball_oracle, coupling, eig_newton0

log = logging.getLogger("newtonres")

SCHEMA = "newtonres/1"
DENSE_LIMIT = 4000
OUTPUT_ENV = "NEWTONRES_OUTPUT_DIR"


# ---------------------------------------------------------------- configuration

@dataclass
class SweepConfig:
    epsilon: float = 0.05
    points: int = 200
    grid_factors: tuple = (0.5, 1.5)  # grid spans [a/lambda_1, b/lambda_1]
    source: tuple = (0.0, 0.0, 3.0)
    observation: tuple = (0.0, 3.0, 0.0)


@dataclass
class BoundConfig:
    samples: int = 200
    radius_factor: float = 2.0


@dataclass
class RunConfig:
    domain: dict
    schema: str = SCHEMA
    resolutions: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.01, 0.02, 0.04])
    r: float | None = None
    r_factor: float = 1.2
    cluster_tol: float = 1e-2
    n_modes: int = 20
    method: str = "newton_track"
    n_quad: int = 32
    oracle_l_max: int = 4
    oracle_n_max: int = 3
    seed: int = 0
    output_dir: str = "newtonres-out"
    resonances_file: str | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return data


_DOMAIN_KEYS = {"ball": {"kind", "radius", "resolution"},
                "box": {"kind", "extents", "resolution"},
                "voxel": {"kind", "path"}}


def parse_config(data) -> RunConfig:
    _strict(RunConfig, data, "config")
    if data.get("schema", SCHEMA) != SCHEMA:
        raise ConfigurationError(f"unsupported schema {data.get('schema')!r}; expected {SCHEMA!r}")
    if "domain" not in data:
        raise ConfigurationError("config: missing 'domain'")
    dom = data["domain"]
    if not isinstance(dom, dict) or dom.get("kind") not in _DOMAIN_KEYS:
        raise ConfigurationError(f"domain.kind must be one of {sorted(_DOMAIN_KEYS)}")
    extra = sorted(set(dom) - _DOMAIN_KEYS[dom["kind"]])
    if extra:
        raise ConfigurationError(f"domain: unknown key(s) {', '.join(extra)}")
    kw = dict(data)
    kw["sweep"] = SweepConfig(**_strict(SweepConfig, data.get("sweep", {}), "sweep"))
    kw["bound"] = BoundConfig(**_strict(BoundConfig, data.get("bound", {}), "bound"))
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigurationError(msg)

    need(all(isinstance(e, (int, float)) and 0.0 <= e < 1.0 for e in cfg.epsilons),
         "epsilons must lie in [0, 1)")
    need(all(isinstance(r, int) and r >= 4 for r in cfg.resolutions), "resolutions must be integers >= 4")
    need(cfg.r is None or (isinstance(cfg.r, (int, float)) and cfg.r > 0), "r must be positive")
    need(cfg.r_factor > 1.0, "r_factor must exceed 1")
    need(0.0 < cfg.cluster_tol < 0.1, "cluster_tol must lie in (0, 0.1)")
    need(isinstance(cfg.n_modes, int) and cfg.n_modes >= 2, "n_modes must be an integer >= 2")
    need(cfg.method in ("newton_track", "contour", "both"), "method must be newton_track, contour or both")
    need(isinstance(cfg.n_quad, int) and cfg.n_quad >= 32, "n_quad must be an integer >= 32")
    need(0 <= cfg.oracle_l_max <= 20 and 1 <= cfg.oracle_n_max <= 20, "oracle degree/root limits out of range")
    s = cfg.sweep
    need(0.0 < s.epsilon <= 1.0, "sweep.epsilon must lie in (0, 1]")
    need(isinstance(s.points, int) and s.points >= 1, "sweep.points must be a positive integer")
    need(len(s.grid_factors) == 2 and 0 < s.grid_factors[0] <= s.grid_factors[1],
         "sweep.grid_factors must be two increasing positive numbers")
    need(len(s.source) == 3 and len(s.observation) == 3, "sweep source/observation must be 3-vectors")
    need(cfg.bound.samples >= 1 and cfg.bound.radius_factor > 0, "bound settings out of range")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON: {exc}") from None
    try:
        return parse_config(data)
    except TypeError as exc:
        raise ConfigurationError(f"invalid config: {exc}") from None


def build_domain(params: dict, resolution: int | None = None) -> DiscreteDomain:
    kind = params["kind"]
    if kind == "ball":
        return make_ball(float(params.get("radius", 1.0)), resolution or params.get("resolution", 8))
    if kind == "box":
        return make_box(params.get("extents", (1.0, 1.0, 1.0)), resolution or params.get("resolution", 8))
    return load_voxels(params["path"])


def _spectrum(domain, cfg, n_modes=None):
    if domain.n <= DENSE_LIMIT:
        return eig_newton0(assemble_newton(domain, 0), n_modes=n_modes, rel_tol=cfg.cluster_tol,
                           mesh_id=domain.mesh_id)
    if not domain.is_lattice:
        raise ConfigurationError(f"{domain.n} cells exceed the dense limit {DENSE_LIMIT}")
    return eig_newton0(LatticeNewton(domain, 0), n_modes=n_modes or cfg.n_modes, rel_tol=cfg.cluster_tol,
                       mesh_id=domain.mesh_id)


def _dense_domain(cfg):
    domain = build_domain(cfg.domain)
    if domain.n > DENSE_LIMIT:
        raise ConfigurationError(f"{domain.n} cells exceed the dense limit {DENSE_LIMIT}; lower the resolution")
    return domain


class Summary:
    def __init__(self):
        self.lines = []
        self.failed = False

    def check(self, name, ok, detail=""):
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        self.failed |= not ok

    def note(self, text):
        self.lines.append(f"INFO {text}")

    def text(self):
        return "\n".join(self.lines) + "\n"


# ---------------------------------------------------------------- commands

def cmd_spectrum(cfg: RunConfig, out: Path, workers: int):
    summary = Summary()
    files = {}
    is_ball = cfg.domain["kind"] == "ball"
    resolutions = cfg.resolutions or [None]
    radius = float(cfg.domain.get("radius", 1.0))
    oracle = ball_oracle(cfg.oracle_l_max, cfg.oracle_n_max, radius) if is_ball else None
    conv = []
    for res in resolutions:
        domain = build_domain(cfg.domain, res)
        n_modes = None if domain.n <= DENSE_LIMIT else cfg.n_modes
        sp = _spectrum(domain, cfg, n_modes)
        cl_of = {}
        for ci, c in enumerate(sp.clusters):
            for i in c.indices:
                cl_of[i] = ci
        rows = []
        for i, lam in enumerate(sp.eigenvalues[: max(cfg.n_modes, 1)]):
            ci = cl_of.get(i, -1)
            mult = sp.clusters[ci].multiplicity if ci >= 0 else 0
            rows.append((i, lam, ci, mult, abs(coupling(sp, i)) ** 2))
        tag = domain.params.get("resolution", "file")
        files[out / f"modes_{tag}.csv"] = csv_text(("index", "lambda", "cluster", "multiplicity", "coupling_sq"), rows)
        row = [tag, domain.n, domain.total_volume, sp.lambda1]
        if is_ball:
            rel = abs(sp.lambda1 - oracle[0].lam) / oracle[0].lam
            row.append(rel)
            if len(sp.clusters) > 1:
                c2 = sp.clusters[1]
                spread = (sp.eigenvalues[c2.start] - sp.eigenvalues[c2.stop - 1]) / c2.value
                row += [c2.multiplicity, spread]
            else:
                row += [0, float("nan")]
        conv.append(row)
    header = ["resolution", "n", "volume", "lambda1"]
    if is_ball:
        header += ["lambda1_rel_error", "cluster2_multiplicity", "cluster2_spread"]
        files[out / "oracle.csv"] = csv_text(("l", "n", "k_root", "lambda", "multiplicity"),
                                             [(o.l, o.n, o.k_root, o.lam, o.multiplicity) for o in oracle])
        errs = [r[4] for r in conv]
        summary.check("lambda1 error decreases with resolution",
                      all(b < a for a, b in zip(errs, errs[1:])), ", ".join(fmt(e) for e in errs))
        summary.check("second cluster has multiplicity 3", all(r[5] == 3 for r in conv))
    files[out / "convergence.csv"] = csv_text(header, conv)
    return files, summary


def cmd_resonances(cfg: RunConfig, out: Path, workers: int):
    summary = Summary()
    domain = _dense_domain(cfg)
    sp = _spectrum(domain, cfg)
    r = cfg.r if cfg.r is not None else cfg.r_factor / sp.lambda1
    const = localization_constants(sp, domain, r)
    summary.note(f"r={fmt(r)} r_plus={fmt(const.r_plus)} c_r={fmt(const.c_r)} eps_max={fmt(const.eps_max)}")
    all_found, loc, per_eps = [], [], {}
    for eps in cfg.epsilons:
        method = "newton_track" if cfg.method == "both" else cfg.method
        found = resonance_set(domain, eps, r, sp, method=method, workers=workers, n_quad=cfg.n_quad)
        per_eps[eps] = found
        all_found += found
        if cfg.method == "both":
            worst = 0.0
            for ci, c in enumerate(sp.clusters):
                if 1.0 / c.value > const.r_plus:
                    continue
                k0 = 1.0 / np.sqrt(c.value)
                cont = contour_solver(domain, eps, k0, _contour_radius(sp, ci), n_quad=cfg.n_quad,
                                      max_rank=c.multiplicity + 3, seed=cfg.seed, spectral=sp)
                all_found += cont
                for cr in cont:
                    worst = max(worst, min(abs(cr.kappa - t.kappa) for t in found))
            summary.check(f"eps={eps:g} newton_track and contour agree to 1e-8", worst < 1e-8, fmt(worst))
        try:
            rep = check_localization(found, const, sp, eps)
            loc.append(rep.to_dict())
            summary.check(f"eps={eps:g} localization disc membership", rep.all_pass,
                          f"{sum(e.passed for e in rep.entries)}/{len(rep.entries)}")
        except HypothesisNotMet as exc:
            loc.append({"epsilon": eps, "status": "hypothesis not met", "detail": str(exc)})
            summary.note(f"eps={eps:g} localization hypothesis not met (eps_max={fmt(const.eps_max)})")
    samples = bound_samples(sp, cfg.bound.samples, cfg.seed, cfg.bound.radius_factor)
    pairs = [(k, *mk0_inverse_bound(sp, k)) for k in samples]
    held = sum(lhs <= rhs for _, lhs, rhs in pairs)
    summary.check("M_k(0)^-1 norm bound on quasi-random samples", held == len(pairs), f"holds on {held}/{len(pairs)}")
    report = {
        "constants": const.__dict__,
        "localization": loc,
        "bound_samples": [{"kappa": k, "lhs": a, "rhs": b, "holds": a <= b} for k, a, b in pairs],
    }
    files = {
        out / "resonances.csv": resonances_csv(all_found),
        out / "localization.json": json_text(report),
    }
    pos = sorted(e for e in cfg.epsilons if e > 0)
    if len(pos) >= 3:
        pred = predict_first_order(sp, 0)[0]
        samples = []
        for e in pos:
            ground = [x for x in per_eps[e] if abs(x.seed_lambda - sp.clusters[0].value) <= 1e-12 * sp.lambda1]
            if ground:
                samples.append((e, ground[0].kappa_sq))
        fit = fit_expansion(samples, reference=(pred.zeroth, pred.first_coeff))
        rel = abs(fit.first - pred.first_coeff) / abs(pred.first_coeff)
        fit_report = {"zeroth_fit": fit.zeroth, "first_fit": fit.first, "second_fit": fit.second,
                      "remainder_order": fit.remainder_order, "remainders": list(fit.remainders),
                      "eps": list(fit.eps), "predicted_first": pred.first_coeff, "predicted_zeroth": pred.zeroth,
                      "coupling_sq": pred.coupling_sq, "relative_error": rel}
        if cfg.domain["kind"] == "ball":
            R = float(cfg.domain.get("radius", 1.0))
            analytic = -1j * np.pi / R**2
            fit_report["analytic_first"] = analytic
            fit_report["prediction_vs_analytic"] = abs(pred.first_coeff - analytic) / abs(analytic)
        files[out / "fit.json"] = json_text(fit_report)
        summary.check("first-order coefficient within 5% of prediction", rel <= 0.05, fmt(rel))
        summary.check("remainder order 2 +/- 0.3", abs(fit.remainder_order - 2.0) <= 0.3, fmt(fit.remainder_order))
    return files, summary


def cmd_sweep(cfg: RunConfig, out: Path, workers: int):
    summary = Summary()
    s = cfg.sweep
    domain = _dense_domain(cfg)
    ScatterScenario(domain, s.epsilon, s.source, [s.observation], 1.0)  # geometry check before assembly
    sp = _spectrum(domain, cfg)
    grid = np.linspace(s.grid_factors[0] / sp.lambda1, s.grid_factors[1] / sp.lambda1, s.points)
    template = ScatterScenario(domain, s.epsilon, s.source, [s.observation], np.sqrt(grid[0]))
    result = frequency_sweep(template, grid, workers=workers)
    files = {out / "sweep.csv": result.csv(), out / "peaks.json": result.peaks_json()}
    if s.points > 1:
        step = grid[1] - grid[0]
        window = step
        try:
            const = localization_constants(sp, domain, (cfg.r or cfg.r_factor / sp.lambda1))
            window = max(step, const.c_r * s.epsilon)
        except NewtonResError:
            pass
        for name, peaks in (("M^-1 norm", result.peaks_minv), ("field", result.peaks_field)):
            ok = bool(peaks) and abs(peaks[0][0] - 1.0 / sp.lambda1) <= window
            summary.check(f"{name} peak near 1/lambda_1", ok,
                          fmt(peaks[0][0]) if peaks else "no interior peak")
    return files, summary


def _read_resonances(path):
    out = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                k = complex(float(row["re_kappa"]), float(row["im_kappa"]))
                out.append(ResonanceResult(k, float(row["seed_lambda"]), np.zeros(0), float(row["residual"]),
                                           int(row["multiplicity"]), row["method"], float(row["epsilon"])))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"cannot read cached resonances {path}: {exc}") from None
    return out


def cmd_localize(cfg: RunConfig, out: Path, workers: int):
    summary = Summary()
    path = cfg.resonances_file or str(out / "resonances.csv")
    cached = _read_resonances(path)
    domain = _dense_domain(cfg)
    sp = _spectrum(domain, cfg)
    r = cfg.r if cfg.r is not None else cfg.r_factor / sp.lambda1
    const = localization_constants(sp, domain, r)
    loc = []
    for eps in sorted({x.epsilon for x in cached}):
        group = [x for x in cached if x.epsilon == eps and x.method == "newton_track"] or \
                [x for x in cached if x.epsilon == eps]
        try:
            rep = check_localization(group, const, sp, eps)
            loc.append(rep.to_dict())
            summary.check(f"eps={eps:g} localization disc membership", rep.all_pass)
        except HypothesisNotMet as exc:
            loc.append({"epsilon": eps, "status": "hypothesis not met", "detail": str(exc)})
            summary.note(f"eps={eps:g} localization hypothesis not met")
    return {out / "localization.json": json_text({"constants": const.__dict__, "localization": loc})}, summary


def cmd_oracle(cfg: RunConfig, out: Path, workers: int):
    summary = Summary()
    if cfg.domain["kind"] != "ball":
        raise ConfigurationError("the oracle command needs a ball domain")
    radius = float(cfg.domain.get("radius", 1.0))
    oracle = ball_oracle(cfg.oracle_l_max, cfg.oracle_n_max, radius)
    domain = _dense_domain(cfg)
    sp = _spectrum(domain, cfg)
    rows = []
    for o, lam in zip(oracle, sp.eigenvalues):
        rows.append((o.l, o.n, o.multiplicity, o.lam, lam))
    files = {out / "oracle.csv": csv_text(("l", "n", "multiplicity", "lambda_exact", "lambda_mesh_sorted"), rows)}
    rel = abs(sp.lambda1 - oracle[0].lam) / oracle[0].lam
    summary.note(f"lambda1 relative error {fmt(rel)}")
    return files, summary


COMMANDS = {
    "spectrum": cmd_spectrum,
    "resonances": cmd_resonances,
    "sweep": cmd_sweep,
    "localize": cmd_localize,
    "oracle": cmd_oracle,
}


def build_parser():
    p = argparse.ArgumentParser(prog="newtonres", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--output-dir", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("--threads", type=int, default=None, help="worker and BLAS thread cap (default: all cores)")
    p.add_argument("--cluster-tol", type=float, default=None, help="relative cluster gap tolerance")
    p.add_argument("--check", action="store_true", help="exit 4 when a threshold check fails")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.cluster_tol is not None:
            cfg.cluster_tol = args.cluster_tol
            _validate(cfg)
        out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        if threads < 1:
            raise ConfigurationError("--threads must be positive")
        with threadpool_limits(limits=threads):
            files, summary = COMMANDS[args.command](cfg, out, threads)
        files[out / f"{args.command}_summary.txt"] = summary.text()
        write_files(files)
    except ConfigurationError as exc:
        print(f"newtonres: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"newtonres: numerical failure: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(summary.text())
    if args.check and summary.failed:
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
