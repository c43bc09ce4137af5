"""Seeded oracle-equivalence suites behind ``vstab verify``.

Each suite draws ``count`` operators from the matching generator family
(seed ``seed + k`` for case k), runs one comparison per case and keeps the
worst value of every metric.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, VstabError
from .limits import SweepConfig, limits, neumann_x0, neumann_y0, sweep
from .oracle import (
    dichotomy_compare,
    generate_test_operator,
    inside_spectral_projector,
    normal_closed_form,
    normal_limits,
    unitary_similarity_verdict,
)
from .qsolver import SolveConfig, inverse_duality_check, solve_qt, verify_bracket
from .substrate import opnorm

T_GRID = (1.0, 0.3, 0.1, 0.03, 0.01)
DUALITY_T = (1.0, 0.5, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class Metric:
    name: str
    threshold: float
    larger_is_worse: bool = True

    def ok(self, v):
        return v <= self.threshold if self.larger_is_worse else v >= self.threshold


@dataclass
class SuiteResult:
    kind: str
    count: int
    dim: int
    seed: int
    metrics: tuple
    worst: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)   # (case, message)

    @property
    def passed(self) -> bool:
        return not self.failures and all(m.ok(self.worst[m.name]) for m in self.metrics
                                         if m.name in self.worst)

    def summary(self) -> str:
        lines = [f"verify {self.kind}: {self.count} cases, dim {self.dim}, seed {self.seed}"]
        for m in self.metrics:
            v = self.worst.get(m.name, float("nan"))
            rel = "<=" if m.larger_is_worse else ">="
            mark = "pass" if m.ok(v) else "FAIL"
            lines.append(f"  [{mark}] worst {m.name} = {v:.3e} ({rel} {m.threshold:.1e})")
        for case, msg in self.failures[:10]:
            lines.append(f"  case {case}: {msg}")
        if len(self.failures) > 10:
            lines.append(f"  ... {len(self.failures) - 10} more failing cases")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def _normal_case(k, dim, seed):
    V = generate_test_operator("normal", dim, seed + k, unit_count=k % 3 if dim >= 3 else 0)
    err = 0.0
    for t in T_GRID:
        Q = solve_qt(V, SolveConfig(t=t)).Q
        ref = normal_closed_form(V, t)
        err = max(err, opnorm(Q - ref) / opnorm(ref))
    b = limits(V)
    X0, Y0, R0 = normal_limits(V)
    lim = max(opnorm(b.X0 - X0), opnorm(b.Y0 - Y0))
    r0 = opnorm(b.R0 - R0)
    return {"closed_form_rel_error": err, "limit_error": lim, "r0_error": r0}


def _neumann_case(k, dim, seed):
    V = generate_test_operator("dichotomous", dim, seed + k, gap=0.1)
    b = limits(V)
    y0, x0 = neumann_y0(V), neumann_x0(V)
    return {"y0_rel_error": opnorm(b.Y0 - y0) / (1 + opnorm(y0)),
            "x0_rel_error": opnorm(b.X0 - x0) / (1 + opnorm(x0))}


def _dichotomy_case(k, dim, seed):
    V = generate_test_operator("dichotomous", dim, seed + k, gap=0.1)
    b = limits(V)
    d = dichotomy_compare(b, inside_spectral_projector(V))
    return {"r0_projector_distance": d.distance, "trace_final": d.trace_final,
            "trace_decreasing": 1.0 if d.trace_decreasing else 0.0}


def _unitary_case(k, dim, seed, cond=30.0):
    V = generate_test_operator("unitary_similar", dim, seed + k, cond=cond)
    v = unitary_similarity_verdict(sweep(V, SweepConfig(t_min=1e-3)))
    W = generate_test_operator("dichotomous", dim, seed + k, gap=0.1)
    w = unitary_similarity_verdict(limits(W).samples)
    return {"similar_correct": 1.0 if v.similar is True else 0.0,
            "m_est_over_cond2": v.M_est / cond ** 2,
            "dichotomous_correct": 1.0 if w.similar is False else 0.0}


def _bracket_case(k, dim, seed):
    V = generate_test_operator("random_invertible", dim, seed + k)
    worst = np.inf
    gap = 0.0
    for t in T_GRID:
        s = solve_qt(V, SolveConfig(t=t, start="both"))
        worst = min(worst, min(verify_bracket(V, s).margins) / V.norm ** 2)
        gap = max(gap, s.bracket_gap)
    return {"bracket_margin_over_norm2": worst, "upper_lower_gap": gap}


def _duality_case(k, dim, seed):
    V = generate_test_operator("random_invertible", dim, seed + k)
    t = DUALITY_T[k % len(DUALITY_T)]
    return {"duality_defect": inverse_duality_check(V, t, SolveConfig(fp_tol=1e-12))}


SUITES = {
    "normal-closed-form": (_normal_case, (Metric("closed_form_rel_error", 1e-8),
                                          Metric("limit_error", 1e-5),
                                          Metric("r0_error", 1e-4))),
    "neumann": (_neumann_case, (Metric("y0_rel_error", 1e-6), Metric("x0_rel_error", 1e-6))),
    "dichotomy": (_dichotomy_case, (Metric("r0_projector_distance", 1e-4),
                                    Metric("trace_final", 1e-4),
                                    Metric("trace_decreasing", 1.0, larger_is_worse=False))),
    "unitary-similar": (_unitary_case, (Metric("similar_correct", 1.0, larger_is_worse=False),
                                        Metric("m_est_over_cond2", 1.0),
                                        Metric("dichotomous_correct", 1.0, larger_is_worse=False))),
    "bracket": (_bracket_case, (Metric("bracket_margin_over_norm2", -1e-9, larger_is_worse=False),
                                Metric("upper_lower_gap", 1e-9))),
    "duality": (_duality_case, (Metric("duality_defect", 1e-8),)),
}


def run_suite(kind: str, count: int = 10, dim: int = 8, seed: int = 0,
              workers: int = 1) -> SuiteResult:
    """Run one verify suite; see :data:`SUITES` for the kinds."""
    if kind not in SUITES:
        raise BadParameter(f"unknown suite {kind!r}; expected one of {sorted(SUITES)}")
    if count < 1 or dim < 1:
        raise BadParameter("count and dim must be positive")
    fn, metrics = SUITES[kind]
    res = SuiteResult(kind, count, dim, seed, metrics)

    def one(k):
        try:
            return k, fn(k, dim, seed), None
        except VstabError as exc:
            return k, None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(count)))
    else:
        outcomes = [one(k) for k in range(count)]

    for k, values, err in outcomes:
        if err is not None:
            res.failures.append((k, err))
            continue
        for m in metrics:
            v = values[m.name]
            prev = res.worst.get(m.name)
            if prev is None or (v > prev if m.larger_is_worse else v < prev):
                res.worst[m.name] = v
            if not m.ok(v):
                res.failures.append((k, f"{m.name} = {v:.3e}"))
    return res
