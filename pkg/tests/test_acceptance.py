"""Acceptance criteria 1-14.

Each test computes the worst value of its metric over a seeded corpus,
prints one ``C<k> PASS|FAIL`` line and asserts the threshold.  The lines
are repeated in the pytest terminal summary.
"""
import numpy as np
import pytest
import scipy.linalg

from vstab.errors import InconsistentVerdict
from vstab.limits import SweepConfig, limits, maximal_solution_residuals, neumann_x0, neumann_y0, sweep
from vstab.oracle import (
    dichotomy_compare,
    eigenbasis_condition,
    generate_test_operator,
    inside_spectral_projector,
    normal_closed_form,
    normal_limits,
    unitary_similarity_verdict,
)
from vstab.qsolver import SolveConfig, gauge_check, inverse_duality_check, solve_qt, verify_bracket
from vstab.subspaces import (
    classify_vector,
    contraction_witness,
    surinvariance_defect,
    telescoping_defect,
    trichotomy,
)
from vstab.substrate import as_operator, opnorm
from vstab.suites import DUALITY_T, T_GRID

pytestmark = pytest.mark.slow

SOUNDNESS_DIMS = (2, 4, 8, 16, 32)
DICHO_DIMS = (4, 8, 16, 32)
UNITARY_COND = 30.0


def _record(log, num, title, value, relation, threshold):
    ok = value <= threshold if relation == "<=" else value >= threshold
    line = f"C{num:02d} {'PASS' if ok else 'FAIL'} {title}: worst {value:.3e} {relation} {threshold:.1e}"
    log.append(line)
    print(line)
    return ok


def _check(log, num, title, items):
    """items: (label, value, relation, threshold); all must hold."""
    oks = []
    for label, value, rel, thr in items:
        oks.append(_record(log, num, f"{title} [{label}]", value, rel, thr))
    assert all(oks)


# -- corpora --------------------------------------------------------------------

@pytest.fixture(scope="module")
def soundness_corpus():
    out = []
    for k in range(100):
        V = generate_test_operator("random_invertible", SOUNDNESS_DIMS[k % 5], 1000 + k)
        out.append((V, [solve_qt(V, SolveConfig(t=t, start="both")) for t in T_GRID]))
    return out


@pytest.fixture(scope="module")
def dichotomous_corpus():
    out = []
    for k in range(50):
        V = generate_test_operator("dichotomous", DICHO_DIMS[k % 4], 2000 + k, gap=0.1)
        out.append((V, limits(V)))
    return out


@pytest.fixture(scope="module")
def normal_corpus():
    out = []
    for k in range(50):
        V = generate_test_operator("normal", 16, 3000 + k, unit_count=k % 3)
        out.append((V, limits(V)))
    return out


@pytest.fixture(scope="module")
def random_sweeps():
    out = []
    for k in range(10):
        V = generate_test_operator("random_invertible", (2, 4, 8)[k % 3], 4000 + k)
        out.append((V, limits(V)))
    return out


@pytest.fixture(scope="module")
def unitary_corpus():
    out = []
    for k in range(20):
        V = generate_test_operator("unitary_similar", (2, 4, 6, 8)[k % 4], 5000 + k, cond=UNITARY_COND)
        out.append((V, sweep(V, SweepConfig(t_min=1e-3))))
    return out


@pytest.fixture(scope="module")
def example_bundles():
    mats = [np.array([[0.5, 1.0], [0.0, 2.0]]), np.diag([0.5, 1.0, 2.0]),
            np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(3)]
    return [(as_operator(M), limits(M)) for M in mats]


@pytest.fixture(scope="module")
def all_bundles(dichotomous_corpus, normal_corpus, random_sweeps, example_bundles):
    return dichotomous_corpus + normal_corpus + random_sweeps + example_bundles


@pytest.fixture(scope="module")
def converged_bundles(all_bundles):
    return [(V, b) for V, b in all_bundles if b.x_converged and b.y_converged]


# -- criteria -------------------------------------------------------------------

def test_c01_solver_soundness(soundness_corpus, acceptance_log):
    res = max(s.residual for _, ss in soundness_corpus for s in ss)
    gap = max(s.bracket_gap for _, ss in soundness_corpus for s in ss)
    _check(acceptance_log, 1, "solver soundness", [
        ("fixed-point residual", res, "<=", 1e-10),
        ("upper/lower gap", gap, "<=", 1e-9)])


def test_c02_t_one_exactness(soundness_corpus, acceptance_log):
    err = max(opnorm(ss[0].Q - V.gram) / opnorm(V.gram) for V, ss in soundness_corpus)
    assert all(ss[0].t == 1.0 for _, ss in soundness_corpus)
    _check(acceptance_log, 2, "t=1 exactness", [("||Q1 - V*V||/||V*V||", err, "<=", 1e-10)])


def test_c03_order_bracket(soundness_corpus, all_bundles, acceptance_log):
    worst = min(min(verify_bracket(V, s).margins) / V.norm ** 2
                for V, ss in soundness_corpus for s in ss)
    worst_sweep = min(min(verify_bracket(V, s).margins) / V.norm ** 2
                      for V, b in all_bundles for s in b.samples)
    _check(acceptance_log, 3, "order bracket", [
        ("Loewner margin / ||V||^2, grid corpus", worst, ">=", -1e-9),
        ("Loewner margin / ||V||^2, sweep samples", worst_sweep, ">=", -1e-9)])


def test_c04_monotone_nets(all_bundles, unitary_corpus, acceptance_log):
    from vstab.limits import extract_limits
    bundles = [b for _, b in all_bundles] + [extract_limits(s) for _, s in unitary_corpus]
    mx = min(b.monotone_x_margin for b in bundles)
    my = min(b.monotone_y_margin for b in bundles)
    _check(acceptance_log, 4, "monotone nets", [
        ("lambda_min(X_prev - X_next)", mx, ">=", -1e-9),
        ("lambda_min(Y_prev - Y_next)", my, ">=", -1e-9)])


def test_c05_normal_oracle(normal_corpus, acceptance_log):
    cf, lim, r_off, r_unit = 0.0, 0.0, 0.0, 0.0
    planted = 0
    for V, b in normal_corpus:
        for t in T_GRID:
            ref = normal_closed_form(V, t)
            cf = max(cf, opnorm(solve_qt(V, SolveConfig(t=t)).Q - ref) / opnorm(ref))
        X0, Y0, R0 = normal_limits(V)
        lim = max(lim, opnorm(b.X0 - X0), opnorm(b.Y0 - Y0))
        # normal V: the complex Schur form is diagonal and Z is an eigenbasis
        T, Z = scipy.linalg.schur(V.entries, output="complex")
        lam = np.abs(np.diag(T))
        unit = np.isclose(lam, 1.0, atol=1e-12)
        planted += int(unit.sum())
        assert np.all(unit | (lam <= 0.95) | (lam >= 1.05))
        E = Z[:, unit] @ Z[:, unit].conj().T
        F = np.eye(V.dim) - E
        D = b.R0 - R0
        r_off = max(r_off, opnorm(F @ D @ F))
        r_unit = max(r_unit, opnorm(E @ D @ E))
    assert planted > 0
    _check(acceptance_log, 5, "normal oracle", [
        ("closed form rel. error", cf, "<=", 1e-8),
        ("X0/Y0 vs normal limits", lim, "<=", 1e-5),
        ("R0 off the unit circle", r_off, "<=", 1e-5),
        ("R0 on unit eigenvectors vs 1/2", r_unit, "<=", 1e-4)])


def test_c06_neumann_oracles(dichotomous_corpus, acceptance_log):
    ey, ex = 0.0, 0.0
    for V, b in dichotomous_corpus:
        y0, x0 = neumann_y0(V), neumann_x0(V)
        ey = max(ey, opnorm(b.Y0 - y0) / (1 + opnorm(y0)))
        ex = max(ex, opnorm(b.X0 - x0) / (1 + opnorm(x0)))
    _check(acceptance_log, 6, "Neumann oracles", [
        ("Y0 / (1+||.||)", ey, "<=", 1e-6), ("X0 / (1+||.||)", ex, "<=", 1e-6)])


def test_c07_maximal_solution_residuals(converged_bundles, acceptance_log):
    assert len(converged_bundles) >= 60
    worst = max(max(maximal_solution_residuals(V, b)) for V, b in converged_bundles)
    _check(acceptance_log, 7, f"maximal-solution residuals on {len(converged_bundles)} bundles", [("max(rx, ry)", worst, "<=", 1e-6)])


def test_c08_trichotomy_surinvariance(converged_bundles, acceptance_log):
    rank_err, s_lt, s_gt, xy = 0, 0.0, 0.0, 0.0
    for V, b in converged_bundles:
        tri = trichotomy(b)
        rank_err = max(rank_err, abs(sum(tri.ranks) - V.dim))
        s_lt = max(s_lt, surinvariance_defect(V, tri.basis_lt, "V") / V.norm)
        s_gt = max(s_gt, surinvariance_defect(V, tri.basis_gt, "V_star_inv") / V.inv_norm)
        xy = max(xy, b.xy_product / max(1.0, opnorm(b.X0) * opnorm(b.Y0)))
    _check(acceptance_log, 8, "trichotomy and surinvariance", [
        ("|rank sum - n|", float(rank_err), "<=", 0.0),
        ("H_< V-surinvariance / ||V||", s_lt, "<=", 1e-6),
        ("H_> V*^-1-surinvariance / ||V*^-1||", s_gt, "<=", 1e-6),
        ("||X0 Y0|| scaled", xy, "<=", 1e-6)])


def test_c09_dichotomy(dichotomous_corpus, acceptance_log):
    dist, final, not_decreasing = 0.0, 0.0, 0
    for V, b in dichotomous_corpus:
        assert V.dim <= 32 and eigenbasis_condition(V.entries) <= 100
        d = dichotomy_compare(b, inside_spectral_projector(V))
        dist, final = max(dist, d.distance), max(final, d.trace_final)
        not_decreasing += not d.trace_decreasing
    _check(acceptance_log, 9, "dichotomy", [
        ("||R0 - P_in||", dist, "<=", 1e-4),
        ("final ||(I - R_t) P_in||", final, "<=", 1e-4),
        ("sweeps where ||(I - R_t) P_in|| increases", float(not_decreasing), "<=", 0.0)])


def test_c10_unitary_similarity(unitary_corpus, dichotomous_corpus, acceptance_log):
    wrong_true, m_ratio = 0, 0.0
    for V, s in unitary_corpus:
        v = unitary_similarity_verdict(s)
        wrong_true += v.similar is not True
        m_ratio = max(m_ratio, v.M_est / UNITARY_COND ** 2)
    wrong_false = sum(unitary_similarity_verdict(b).similar is not False
                      for _, b in dichotomous_corpus[:20])
    _check(acceptance_log, 10, "unitary-similarity criterion", [
        ("unitary-similar cases not judged similar", float(wrong_true), "<=", 0.0),
        ("M_est / cond(S)^2", m_ratio, "<=", 1.0),
        ("dichotomous cases not judged non-similar", float(wrong_false), "<=", 0.0)])


def _vectors_for(V, rng, per_operator=10):
    """Right eigenvectors for |lambda| < 1, left ones for |lambda| > 1, random fill."""
    M = V.entries
    w, R = np.linalg.eig(M)
    wl, L = np.linalg.eig(M.conj().T)
    inside = [("inside", R[:, i]) for i in np.argsort(np.abs(w)) if abs(w[i]) < 1][:4]
    outside = [("outside", L[:, i]) for i in np.argsort(-np.abs(wl)) if abs(wl[i]) > 1][:4]
    vecs = inside + outside
    while len(vecs) < per_operator:
        vecs.append(("random", rng.standard_normal(V.dim) + 1j * rng.standard_normal(V.dim)))
    return vecs


def test_c11_vector_chains(dichotomous_corpus, example_bundles, acceptance_log):
    rng = np.random.default_rng(11)
    cases = [(V, b, vecs) for V, b in dichotomous_corpus for vecs in [_vectors_for(V, rng)]]
    extra = [(V, b, [("random", rng.standard_normal(V.dim))] * 0 +
              [("basis", np.eye(V.dim)[:, j]) for j in range(V.dim)])
             for V, b in example_bundles]
    violations, inside_miss, outside_miss, count = 0, 0, 0.0, 0
    for V, b, vecs in cases + extra:
        tri = trichotomy(b)
        B = tri.basis_gt
        for kind, x in vecs:
            count += 1
            try:
                v = classify_vector(V, x, b, tri=tri)
            except InconsistentVerdict:
                violations += 1
                continue
            if kind == "inside":
                inside_miss += v.l2_member is not True
            elif kind == "outside":
                xn = x / np.linalg.norm(x)
                outside_miss = max(outside_miss, np.linalg.norm(xn - B @ (B.conj().T @ xn)))
                inside_miss += v.l2_member is not False
    assert count >= 500
    _check(acceptance_log, 11, f"vector chains over {count} vectors", [
        ("chain violations", float(violations), "<=", 0.0),
        ("eigenvectors with wrong l2 verdict", float(inside_miss), "<=", 0.0),
        ("distance of |lambda|>1 left eigenvectors from H_>", outside_miss, "<=", 1e-6)])


def test_c12_contraction_witness(dichotomous_corpus, acceptance_log):
    norm_w, wtw, lower, tele = 0.0, 0.0, np.inf, 0.0
    evaluated = 0
    for V, b in dichotomous_corpus:
        tri = trichotomy(b)
        if tri.basis_lt.shape[1] == 0:
            continue   # Ran Y0 = {0}: no witness to build
        evaluated += 1
        wit = contraction_witness(V, b.Y0, tri.basis_lt)
        norm_w = max(norm_w, wit.norm_W)
        wtw = max(wtw, wit.wtw_defect)
        lower = min(lower, wit.lower_W - wit.lower_bound)
        tele = max(tele, telescoping_defect(V, wit, N=64))
    assert evaluated >= 40
    _check(acceptance_log, 12, f"contraction witness on {evaluated} cases", [
        ("||W||", norm_w, "<=", 1 + 1e-8),
        ("||W*W - (I + Y0)^-1|| on Ran Y0", wtw, "<=", 1e-8),
        ("s_min(W) - 1/(1+||Y0||)", lower, ">=", -1e-8),
        ("telescoping, N = 64", tele, "<=", 1e-6)])


def test_c13_gauge(soundness_corpus, all_bundles, unitary_corpus, acceptance_log):
    ident, outside = 0.0, 0
    samples = ([(V, s) for V, ss in soundness_corpus for s in ss]
               + [(V, s) for V, b in all_bundles for s in b.samples]
               + [(V, s) for V, sw in unitary_corpus for s in sw])
    for V, s in samples:
        g = gauge_check(V, s)
        ident = max(ident, g.identity_residual)
        outside += not (g.bound_lower - 1e-12 <= g.lower and g.upper <= g.bound_upper + 1e-12)
    _check(acceptance_log, 13, f"gauge identity over {len(samples)} samples", [
        ("||(JV)*Q(JV) - Q|| / ||Q||", ident, "<=", 1e-9),
        ("samples with J spectrum outside bounds", float(outside), "<=", 0.0)])


def test_c14_inverse_duality(acceptance_log):
    worst = 0.0
    for k in range(50):
        V = generate_test_operator("random_invertible", (2, 4, 8, 16)[k % 4], 6000 + k)
        t = DUALITY_T[k % len(DUALITY_T)]
        worst = max(worst, inverse_duality_check(V, t, SolveConfig(fp_tol=1e-12)))
    _check(acceptance_log, 14, "inverse duality", [
        ("||Q_t(V*^-1) Q_t(V) - I||", worst, "<=", 1e-8)])
