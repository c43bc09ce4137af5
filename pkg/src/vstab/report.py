"""Full analysis of one operator and its text / JSON report.

The JSON sidecar is deterministic: keys are sorted, no timestamps or
timings are written, and every tolerance that decided a pass/fail is
echoed next to the input checksum.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import GapTooSmall, InconsistentVerdict, InsufficientSamples, ZeroRange
from .limits import SweepConfig, extract_limits, maximal_solution_residuals, sweep
from .oracle import (
    GAP_FLOOR,
    dichotomy_compare,
    inside_spectral_projector,
    unitary_similarity_verdict,
)
from .qsolver import gauge_check, verify_bracket
from .subspaces import (
    classify_vector,
    contraction_witness,
    r0_identity_check,
    surinvariance_defect,
    telescoping_defect,
    trichotomy,
)
from .substrate import OperatorMatrix, opnorm

EXIT_OK = 0
EXIT_CONVERGENCE = 2
EXIT_INVARIANT = 3
EXIT_USAGE = 4
EXIT_SINGULAR = 5


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="   # value <relation> threshold is the pass condition


def _le(name, value, threshold):
    return Check(name, float(value), float(threshold), bool(value <= threshold), "<=")


def _ge(name, value, threshold):
    return Check(name, float(value), float(threshold), bool(value >= threshold), ">=")


def _matrix(A):
    A = np.asarray(A)
    return {"re": np.real(A).tolist(), "im": np.imag(A).tolist()}


def _clean(x):
    """Make floats JSON-safe (inf / nan become strings)."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if np.isfinite(x):
            return x
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class AnalysisReport:
    """Everything ``vstab analyze`` reports about one operator."""

    input: dict
    config: dict
    sweep_table: list
    limits: dict
    trichotomy: dict
    verdicts: dict
    checks: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def violations(self):
        return [c for c in self.checks if not c.passed]

    @property
    def exit_code(self) -> int:
        if self.violations or self.errors:
            return EXIT_INVARIANT
        if self.flags:
            return EXIT_CONVERGENCE
        return EXIT_OK

    def to_dict(self):
        return _clean({
            "tool": {"name": "vstab", "version": __version__},
            "input": self.input,
            "config": self.config,
            "sweep": self.sweep_table,
            "limits": self.limits,
            "trichotomy": self.trichotomy,
            "verdicts": self.verdicts,
            "checks": [asdict(c) for c in self.checks],
            "convergence_flags": self.flags,
            "probes": self.probes,
            "errors": self.errors,
            "exit_code": self.exit_code,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"vstab {__version__} analysis"]
        inp = self.input
        lines.append(f"input: {inp.get('path', '<array>')}  dim={inp['dim']}  sha256={inp.get('sha256', '-')}")
        sw = self.config["sweep"]
        lines.append(f"sweep: t_start={sw['t_start']:g} ratio={sw['ratio']:g} t_min={sw['t_min']:g} "
                     f"fp_tol={self.config['fp_tol']:g} backend={self.config['backend']}")
        lines.append("")
        lines.append(f"{'t':>12} {'residual':>10} {'iters':>7} {'lmin(Q)':>12} {'lmax(Q)':>12}")
        for row in self.sweep_table:
            lines.append(f"{row['t']:12.4e} {row['residual']:10.2e} {row['iterations']:7d} "
                         f"{row['q_min']:12.4e} {row['q_max']:12.4e}")
        lines.append("")
        lm = self.limits
        lines.append(f"stop reason: {lm['stop_reason']}  converged x/y/r: "
                     f"{lm['x_converged']}/{lm['y_converged']}/{lm['r_converged']}")
        lines.append(f"||X0||={lm['X0_norm']:.6g}  ||Y0||={lm['Y0_norm']:.6g}  "
                     f"eig(R0)={_fmt_list(lm['R0_eigs'])}")
        lines.append(f"trichotomy ranks (lt, eq, gt): {tuple(self.trichotomy.get('ranks', ()))}")
        for k, v in self.verdicts.items():
            if not isinstance(v, dict):
                lines.append(f"{k}: {v}")
        us = self.verdicts.get("unitary_similar", {})
        if us:
            lines.append(f"unitary-similar: {_tri(us['similar'])}  (M_est={us['M_est']:.4g}, "
                         f"trend power={us['trend_power']:.3g})")
        dich = self.verdicts.get("dichotomy")
        if dich:
            lines.append(f"dichotomy: ||R0 - P_in|| = {dich['distance']:.3e}  gap={dich['gap']:.3g}")
        lines.append("")
        lines.append("checks:")
        for c in self.checks:
            mark = "pass" if c.passed else "FAIL"
            lines.append(f"  [{mark}] {c.name}: {c.value:.3e} {c.relation} {c.threshold:.1e}")
        for f in self.flags:
            lines.append(f"  [flag] {f}")
        for e in self.errors:
            lines.append(f"  [error] {e}")
        for p in self.probes:
            lines.append(f"probe {p['label']}: l2={_tri(p['l2_member'])} stab0={_tri(p['stab0'])} "
                         f"stab={_tri(p['stab'])} finq={_tri(p['finq'])} kerq0={_tri(p['kerq0'])} "
                         f"growth={p['growth_exponent']:.4g}")
        lines.append(f"exit code: {self.exit_code}")
        return "\n".join(lines) + "\n"

    def write(self, out_stem) -> tuple:
        """Write ``<stem>.txt`` and ``<stem>.json``; returns both paths."""
        stem = Path(out_stem)
        if stem.suffix in (".txt", ".json"):
            stem = stem.with_suffix("")
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt, js = stem.with_suffix(".txt"), stem.with_suffix(".json")
        txt.write_text(self.to_text(), encoding="utf-8")
        js.write_text(self.to_json(), encoding="utf-8")
        return txt, js


def _tri(v):
    return "unknown" if v is None else str(v).lower()


def _fmt_list(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


def config_echo(cfg: SweepConfig, horizon, seed, probes):
    tol = cfg.solve.tol
    return {
        "sweep": {"t_start": cfg.t_start, "ratio": cfg.ratio, "t_min": cfg.t_min,
                  "stagnation_tol": cfg.stagnation_tol, "r_stagnation_tol": cfg.r_stagnation_tol,
                  "warm_start": cfg.warm_start, "absolute_accuracy": cfg.absolute_accuracy,
                  "precision_stop": cfg.precision_stop, "floor_fraction": cfg.floor_fraction},
        "fp_tol": cfg.solve.fp_tol,
        "max_iter": cfg.solve.max_iter,
        "iter_scale": cfg.solve.iter_scale,
        "acceleration": cfg.solve.acceleration,
        "tolerances": asdict(tol),
        "horizon": horizon,
        "seed": seed,
        "probes": probes,
        "backend": kernels.BACKEND,
    }


def analyze(V: OperatorMatrix, cfg: SweepConfig | None = None, horizon: int = 256,
            seed: int = 0, probes: int = 4, input_info: dict | None = None) -> AnalysisReport:
    """sweep -> limits -> trichotomy -> verdicts -> invariant checks.

    ``probes`` seeded random unit vectors are classified to exercise the
    membership chains; an inconsistent chain counts as an invariant
    violation.
    """
    cfg = cfg or SweepConfig()
    tol = cfg.solve.tol
    n = V.dim
    info = {"dim": n, **(input_info or {})}
    echo = config_echo(cfg, horizon, seed, probes)

    result = sweep(V, cfg)
    table = [{
        "t": s.t, "residual": s.residual, "dual_residual": s.dual_residual,
        "iterations": s.iterations, "dual_iterations": s.dual_iterations,
        "q_min": float(s.q_eigs[0]), "q_max": float(s.q_eigs[-1]),
    } for s in result.samples]

    flags = []
    if result.failure is not None:
        flags.append(f"no_convergence: {result.failure}")
    try:
        bundle = extract_limits(result, cfg)
    except InsufficientSamples as exc:
        flags.append(f"insufficient_samples: {exc}")
        return AnalysisReport(info, echo, table, {"stop_reason": result.stop_reason}, {}, {},
                              flags=flags)

    checks = []
    fp = cfg.solve.fp_tol
    checks.append(_le("fixed_point_residual_worst", max(s.residual for s in bundle.samples), 10 * fp))
    checks.append(_le("dual_residual_worst", max(s.dual_residual for s in bundle.samples), 10 * fp))
    br = [verify_bracket(V, s, tol) for s in bundle.samples]
    scale = V.norm ** 2
    checks.append(_ge("bracket_margin_worst_over_norm2", min(min(b.margins) for b in br) / scale,
                      -tol.psd_tol))
    gc = [gauge_check(V, s, fp, tol) for s in bundle.samples]
    checks.append(_le("gauge_identity_worst", max(g.identity_residual for g in gc), 100 * fp))
    checks.append(_ge("gauge_lower_margin", min(g.lower - g.bound_lower for g in gc), -tol.psd_tol))
    checks.append(_ge("gauge_upper_margin", min(g.bound_upper - g.upper for g in gc), -tol.psd_tol))
    checks.append(_ge("monotone_x_margin", bundle.monotone_x_margin, -1e-9))
    checks.append(_ge("monotone_y_margin", bundle.monotone_y_margin, -1e-9))

    if not bundle.x_converged:
        flags.append("x_converged=false")
    if not bundle.y_converged:
        flags.append("y_converged=false")
    if not bundle.r_converged:
        flags.append("r_converged=false")

    limits_info = {
        "stop_reason": bundle.stop_reason,
        "t_last": float(bundle.ts[-1]),
        "x_converged": bundle.x_converged, "y_converged": bundle.y_converged,
        "r_converged": bundle.r_converged,
        "x_deltas": list(bundle.x_deltas), "y_deltas": list(bundle.y_deltas),
        "r_deltas": list(bundle.r_deltas),
        "X0_norm": opnorm(bundle.X0), "Y0_norm": opnorm(bundle.Y0),
        "R0_eigs": np.linalg.eigvalsh(bundle.R0).tolist(),
        "X0": _matrix(bundle.X0), "Y0": _matrix(bundle.Y0), "R0": _matrix(bundle.R0),
    }

    xy_scale = max(1.0, opnorm(bundle.X0) * opnorm(bundle.Y0))
    checks.append(_le("x0_y0_product_scaled", bundle.xy_product / xy_scale, 1e-6))

    tri_info = {}
    errors = []
    tri = None
    try:
        tri = trichotomy(bundle, tol)
    except Exception as exc:  # RankDeficit and friends are invariant failures here
        errors.append(f"{type(exc).__name__}: {exc}")
    if tri is not None:
        tri_info = {
            "ranks": list(tri.ranks), "ortho_defect": tri.ortho_defect,
            "basis_lt": _matrix(tri.basis_lt), "basis_eq": _matrix(tri.basis_eq),
            "basis_gt": _matrix(tri.basis_gt),
        }
        checks.append(_le("trichotomy_rank_sum_defect", abs(sum(tri.ranks) - n), 0))
        checks.append(_le("surinvariance_lt_V", surinvariance_defect(V, tri.basis_lt, "V", tol) / V.norm, 1e-6))
        checks.append(_le("surinvariance_gt_Vstarinv",
                          surinvariance_defect(V, tri.basis_gt, "V_star_inv", tol) / V.inv_norm, 1e-6))

    converged = bundle.x_converged and bundle.y_converged
    if converged:
        rx, ry = maximal_solution_residuals(V, bundle, tol)
        checks.append(_le("maximal_solution_rx", rx, 1e-6))
        checks.append(_le("maximal_solution_ry", ry, 1e-6))
        y_scale = 1.0 + opnorm(bundle.Y0)
        checks.append(_le("y0_equals_r0_y0", opnorm(bundle.Y0 - bundle.R0 @ bundle.Y0) / y_scale, 1e-6))
        if tri is not None and bundle.r_converged:
            rc = r0_identity_check(bundle, tri)
            checks.append(_le("r0_identity_lt", rc.defect_lt, rc.limit_tol))
            checks.append(_le("r0_kernel_gt", rc.defect_gt, rc.limit_tol))
            checks.append(_le("ran_r0_in_ker_x0", rc.x0_r0, rc.limit_tol))
        if tri is not None and tri.basis_lt.shape[1]:
            try:
                w = contraction_witness(V, bundle.Y0, tri.basis_lt, tol)
            except ZeroRange:
                w = None
            if w is not None:
                checks.append(_le("witness_norm", w.norm_W, 1 + 1e-8))
                checks.append(_ge("witness_lower_margin", w.lower_W - w.lower_bound, -1e-8))
                checks.append(_le("witness_wtw_defect", w.wtw_defect, 1e-8))
                checks.append(_le("telescoping_defect_N64", telescoping_defect(V, w, 64, tol=tol), 1e-6))

    verdicts = {}
    try:
        us = unitary_similarity_verdict(bundle.samples)
        verdicts["unitary_similar"] = {"similar": us.similar, "M_est": us.M_est,
                                       "growth": us.growth, "trend_power": us.trend_power}
    except InsufficientSamples as exc:
        verdicts["unitary_similar"] = {"similar": None, "M_est": float("nan"), "growth": float("nan"),
                                       "trend_power": float("nan"), "note": str(exc)}
    split = inside_spectral_projector(V, tol=tol)
    if split.gap >= GAP_FLOOR and split.dims[1] == 0:
        try:
            d = dichotomy_compare(bundle, split)
            verdicts["dichotomy"] = {"distance": d.distance, "trace_final": d.trace_final,
                                     "trace_decreasing": d.trace_decreasing, "gap": split.gap,
                                     "passed": d.passed}
            if bundle.r_converged:
                checks.append(_le("dichotomy_distance", d.distance, 1e-4))
        except GapTooSmall:
            pass

    probe_out = []
    if tri is not None and probes:
        rng = np.random.default_rng(seed)
        for k in range(probes):
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            try:
                v = classify_vector(V, x, bundle, horizon, tol, tri=tri)
            except InconsistentVerdict as exc:
                errors.append(f"InconsistentVerdict on probe {k}: {exc}")
                continue
            probe_out.append({"label": f"random[{k}]", **_verdict_dict(v)})

    return AnalysisReport(info, echo, table, limits_info, tri_info, verdicts, checks, flags,
                          probe_out, errors)


def _verdict_dict(v):
    return {
        "l2_member": v.l2_member, "c_min": v.c_min, "stab0": v.stab0, "stab": v.stab,
        "finq": v.finq, "kerq0": v.kerq0, "growth_exponent": v.growth_exponent,
        "power_horizon": v.power_horizon, "evidence": v.evidence,
    }


def verdict_report(v, label, input_info, config) -> dict:
    return _clean({"tool": {"name": "vstab", "version": __version__}, "input": input_info,
                   "config": config, "vector": label, "verdict": _verdict_dict(v)})


def verdict_text(v, label) -> str:
    lines = [f"vector {label}",
             f"  l2 member : {_tri(v.l2_member)}  (c_min={v.c_min:.6g})",
             f"  Stab0     : {_tri(v.stab0)}",
             f"  Stab      : {_tri(v.stab)}",
             f"  Fin Q     : {_tri(v.finq)}",
             f"  Ker Q0    : {_tri(v.kerq0)}",
             f"  growth    : {v.growth_exponent:.6g}  (horizon {v.power_horizon})"]
    return "\n".join(lines) + "\n"
