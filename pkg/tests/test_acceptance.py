"""Acceptance checks; each test prints one PASS/FAIL line and asserts it.

The lines are also repeated in the pytest terminal summary.
"""

import time
import warnings

import numpy as np
import pytest
import scipy.linalg as spla

from conftest import CENSUS_SECONDS, random_connected_graph, random_partition
from test_mas import galerkin_mismatch, random_agent
from test_mor import derivative, random_siso
from test_nonlinear import random_nonlinear
from test_numerics import lyap_residual, random_stable
from test_search import TABLE_H2, TABLE_HINF, matches_modulo_ties
from netred.clustering import clustering_basis, kmeans_cost_equals_projection_bound
from netred.graph import is_connected
from netred.mas import AgentDynamics, LinearMas, cluster_reduce
from netred.mor import ConvergenceWarning, irka
from netred.nonlinear import cluster_reduce_nonlinear, simulate
from netred.numerics import integrate_ode, qr_column_pivot, solve_gen_lyapunov, svd
from netred.partition import characteristic_matrix, count_partitions, iter_rgs
from netred.search import default_workers, h2_error_stable, heuristic_pipeline, nonlinear_pipeline
from netred.stabsep import check_unstable_parts, decompose_mas, principal_angle_sin

SEEDS = range(5)
IRKA_REFERENCE = 3.30412e-2
RANK6_H2 = TABLE_H2[5][1]
RANK14_H2 = TABLE_H2[13][1]
SOURCES = ("v", "w", "vw")
ALGOS = ("qr", "kmeans")
SWEEP = (2, 5, 10, 20, 30, 40, 50)


def census_note(metric):
    seconds = CENSUS_SECONDS.get(metric, float("nan"))
    return f"(census {seconds:.1f} s on {default_workers()} worker(s))"


@pytest.fixture(scope="module")
def tables(h2_census, hinf_census):
    return {"h2": h2_census, "hinf": hinf_census}


@pytest.fixture(scope="module")
def pipelines(small_sys, tables):
    """All linear pipeline runs, keyed by (mor, source, algo, seed)."""
    runs = {}
    for mor in ("irka", "bt"):
        for source in SOURCES:
            for algo in ALGOS:
                for seed in SEEDS:
                    runs[mor, source, algo, seed] = heuristic_pipeline(
                        small_sys, 5, mor, source, algo, seed=seed, tables=tables)
    return runs


@pytest.mark.slow
def test_criterion_1_h2_table(h2_census, acceptance):
    ranked = h2_census.ranked(15)
    got = [str(rp.partition) for rp in ranked]
    want = [p for _, p in TABLE_H2]
    order_ok = got == want
    values_ok = all(abs(rp.relative_error - v) <= 1e-5 for rp, (v, _) in zip(ranked, TABLE_H2))
    mismatch = [k + 1 for k, (a, b) in enumerate(zip(got, want)) if a != b]
    detail = (f"top-15 set and order {'match' if order_ok else f'differ at ranks {mismatch}'}, "
              f"values within 1e-5: {values_ok}, rank 1 = {ranked[0].relative_error:.6f} "
              + census_note("h2"))
    tie_ok = matches_modulo_ties(ranked, TABLE_H2, 1e-5)
    acceptance("1 (ties)", tie_ok,
               "diagnostic: top 15 match when partitions with equal printed errors may swap")
    assert acceptance("1", order_ok and values_ok, detail)


@pytest.mark.slow
def test_criterion_2_hinf_table(hinf_census, acceptance):
    ranked = hinf_census.ranked(15)
    got = [str(rp.partition) for rp in ranked]
    order_ok = got == [p for _, p in TABLE_HINF]
    dev = max(abs(rp.relative_error - v) for rp, (v, _) in zip(ranked, TABLE_HINF))
    detail = (f"top-15 set and order match: {order_ok}, max deviation {dev:.1e} (tol 1e-3), "
              f"rank 1 = {ranked[0].relative_error:.6f} "
              + census_note("hinf"))
    assert acceptance("2", order_ok and dev <= 1e-3, detail)


def test_criterion_3_partition_count(acceptance):
    counted = sum(1 for _ in iter_rgs(10, 5))
    formula = count_partitions(10, 5)
    ok = counted == formula == 42525
    assert acceptance("3", ok, f"enumerated {counted}, closed form {formula}, expected 42525")


@pytest.mark.slow
def test_criterion_4_irka_error(small_decomp, h2_census, acceptance):
    st = small_decomp.stable
    best = h2_census.ranked(1)[0].relative_error
    errors = []
    for seed in SEEDS:
        basis = irka(st, 5, seed=seed)
        errors.append(h2_error_stable(st, basis.reduce(st)))
    in_band = [abs(e - IRKA_REFERENCE) <= 0.02 * IRKA_REFERENCE for e in errors]
    bound_ok = all(e <= best / 3 for e in errors)
    ok = in_band[0] and bound_ok
    detail = (f"errors {', '.join(f'{e:.6e}' for e in errors)}; seeds within 2% of "
              f"{IRKA_REFERENCE}: {sum(in_band)}/5; all <= best/3 = {best / 3:.6e}: {bound_ok} "
              f"(best/IRKA ratio {best / errors[0]:.2f})")
    assert acceptance("4", ok, detail)


@pytest.mark.slow
def test_criterion_5_heuristic_pipelines(pipelines, acceptance):
    def hits(pred, mor, source, algo):
        return sum(bool(pred(pipelines[mor, source, algo, s])) for s in SEEDS)

    checks = {
        "IRKA V qr -> rank 14": hits(lambda r: str(r.partition) == RANK14_H2
                                     and abs(r.h2 - 0.150654) <= 1e-5, "irka", "v", "qr"),
        "IRKA V kmeans -> rank 6": hits(lambda r: str(r.partition) == RANK6_H2
                                        and abs(r.h2 - 0.1459) <= 1e-4, "irka", "v", "kmeans"),
        "IRKA W kmeans -> 0.156788": hits(lambda r: abs(r.h2 - 0.156788) <= 1e-4,
                                          "irka", "w", "kmeans"),
        "IRKA VW kmeans -> H2 rank 2, Hinf rank 6": hits(
            lambda r: r.h2_rank == 2 and r.hinf_rank == 6, "irka", "vw", "kmeans"),
    }
    for source in SOURCES:
        for algo in ALGOS:
            checks[f"BT {source.upper()} {algo} = IRKA"] = sum(
                pipelines["bt", source, algo, s].partition == pipelines["irka", source, algo, s]
                .partition for s in SEEDS)
    ok = all(v >= 4 for v in checks.values())
    detail = "; ".join(f"{k}: {v}/5" for k, v in checks.items())
    first = {f"{src}-{algo}": str(pipelines["irka", src, algo, 0].partition)
             for src in SOURCES for algo in ALGOS}
    print("IRKA seed-0 partitions:", first)
    assert acceptance("5", ok, detail)


@pytest.mark.slow
def test_criterion_6_kmeans_identity(small_decomp, pipelines, acceptance):
    rng = np.random.default_rng(2024)
    worst_gap, worst_angle = 0.0, -np.inf
    for _ in range(200):
        n = int(rng.integers(2, 15))
        k = int(rng.integers(1, n + 1))
        V, _ = np.linalg.qr(rng.standard_normal((n, k)))
        p = random_partition(rng, n)
        cost, bound = kmeans_cost_equals_projection_bound(V, p)
        worst_gap = max(worst_gap, abs(cost - bound))
        worst_angle = max(worst_angle, principal_angle_sin(V, characteristic_matrix(p)) ** 2 - cost)
    st = small_decomp.stable
    n_pipe = 0
    for (mor, source, algo, seed), res in pipelines.items():
        if mor != "irka" or seed != 0:
            continue
        basis = irka(st, 5, seed=seed)
        F = clustering_basis(small_decomp.T_minus @ basis.V, small_decomp.S_minus @ basis.W,
                             source, r=5)
        cost, bound = kmeans_cost_equals_projection_bound(F, res.partition)
        worst_gap = max(worst_gap, abs(cost - bound))
        worst_angle = max(worst_angle,
                          principal_angle_sin(F, characteristic_matrix(res.partition)) ** 2 - cost)
        n_pipe += 1
    ok = worst_gap <= 1e-10 and worst_angle <= 1e-12
    detail = (f"200 random pairs + {n_pipe} pipeline instances: max |cost - misfit| "
              f"{worst_gap:.1e} (tol 1e-10), max sin^2 - cost {worst_angle:.1e} (tol 1e-12)")
    assert acceptance("6", ok, detail)


@pytest.mark.slow
def test_criterion_7_structure_preservation(small_sys, small_decomp, pipelines, acceptance):
    rng = np.random.default_rng(7)
    lin_worst = nonlin_worst = 0.0
    laplacian_ok = True
    for _ in range(100):
        n_agents = int(rng.integers(2, 9))
        g = random_connected_graph(rng, n_agents)
        n = int(rng.integers(1, 3))
        ag = AgentDynamics.single_integrator() if n == 1 else random_agent(rng, n)
        sys = LinearMas(g, rng.uniform(0.5, 2.0, n_agents), rng.standard_normal((n_agents, 2)),
                        rng.standard_normal((3, n_agents)), ag)
        p = random_partition(rng, n_agents)
        lin_worst = max(lin_worst, galerkin_mismatch(sys, p))
        L = cluster_reduce(sys, p).laplacian
        laplacian_ok &= bool(np.allclose(L, L.T) and np.abs(L.sum(axis=1)).max() <= 1e-12
                             and np.all(L - np.diag(np.diag(L)) <= 1e-12)
                             and np.linalg.eigvalsh(L)[0] >= -1e-10
                             and (L.shape[0] == 1 or np.linalg.eigvalsh(L)[1] > 1e-10)
                             and is_connected(cluster_reduce(sys, p).graph))

        nsys = random_nonlinear(rng)
        q = random_partition(rng, nsys.n_agents)
        red = cluster_reduce_nonlinear(nsys, q)
        Pn = np.kron(characteristic_matrix(q), np.eye(nsys.n))
        xr = rng.standard_normal(red.order)
        u = rng.standard_normal(2 * nsys.m)
        lhs = red.vector_field(xr, u)
        rhs = Pn.T @ nsys.vector_field(Pn @ xr, u)
        nonlin_worst = max(nonlin_worst, np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1.0))

    residue_worst = 0.0
    models = [res.partition for res in pipelines.values()]
    models += [random_partition(rng, 10) for _ in range(20)]
    for p in models:
        red = decompose_mas(cluster_reduce(small_sys, p))
        check_unstable_parts(small_decomp, red)
        residue_worst = max(residue_worst, np.abs(small_decomp.residue - red.residue).max())
    ok = lin_worst <= 1e-12 and nonlin_worst <= 1e-12 and laplacian_ok and residue_worst <= 1e-8
    detail = (f"Galerkin linear {lin_worst:.1e}, nonlinear {nonlin_worst:.1e} (tol 1e-12); "
              f"reduced Laplacian invariants hold: {laplacian_ok}; "
              f"residue mismatch over {len(models)} clusterings {residue_worst:.1e} (tol 1e-8)")
    assert acceptance("7", ok, detail)


@pytest.mark.slow
def test_criterion_8_vanderpol(vdp, vdp_train, acceptance):
    t0 = time.perf_counter()
    X = vdp_train.states.reshape(len(vdp_train.times), vdp.n_agents, vdp.n)
    x1, x2 = np.abs(X[..., 0]).max(), np.abs(X[..., 1]).max()
    bounds_ok = x1 <= 2.1 and x2 <= 2.3
    times = np.linspace(0.0, 20.0, 1000)
    ref = simulate(vdp, u="test", t_span=(0.0, 20.0), sample_times=times)
    errors, max10 = [], None
    for r in SWEEP:
        res = nonlinear_pipeline(vdp, r, order=2, seed=0, train_solution=vdp_train, reference=ref)
        errors.append(res.relative_l2)
        if r == 10:
            max10 = res.max_pointwise
    inversions = sum(b > a for a, b in zip(errors, errors[1:]))
    decades = np.log10(max(errors) / min(errors))
    ok = bounds_ok and max10 <= 0.11 and inversions <= 1 and decades >= 2
    detail = (f"training run max |x1| {x1:.3f} (<= 2.1), max |x2| {x2:.3f} (<= 2.3); "
              f"10 clusters max error {max10:.4f} (<= 0.11); sweep "
              f"{', '.join(f'{r}:{e:.2e}' for r, e in zip(SWEEP, errors))}, "
              f"{inversions} inversions, {decades:.2f} decades; "
              f"{time.perf_counter() - t0:.1f} s")
    assert acceptance("8", ok, detail)


def test_criterion_9_numerics_oracles(acceptance):
    rng = np.random.default_rng(9)
    lyap = qrerr = svderr = odeerr = 0.0
    for _ in range(30):
        n = int(rng.integers(1, 13))
        A = random_stable(rng, n)
        E = np.eye(n) + 0.05 * rng.standard_normal((n, n))
        B = rng.standard_normal((n, 2))
        try:
            X = solve_gen_lyapunov(A, E, B)
        except ValueError:
            continue
        lyap = max(lyap, lyap_residual(A, E, B, X))
        M = rng.standard_normal((int(rng.integers(1, 9)), int(rng.integers(1, 9))))
        Q, R, piv = qr_column_pivot(M)
        qrerr = max(qrerr, np.linalg.norm(M[:, piv] - Q @ R) / np.linalg.norm(M))
        U, s, V = svd(M)
        svderr = max(svderr, np.linalg.norm(M - (U * s) @ V.T) / np.linalg.norm(M))
    for _ in range(5):
        A = random_stable(rng, 6)
        m = rng.uniform(0.5, 2, 6)
        x0 = rng.standard_normal(6)
        times = np.linspace(0, 3, 7)
        sol = integrate_ode(lambda t, x: A @ x, x0, (0, 3), mass=m, jac=lambda t, x: A,
                            rtol=1e-10, atol=1e-12, sample_times=times)
        F = A / m[:, None]
        exact = np.array([spla.expm(F * t) @ x0 for t in times])
        odeerr = max(odeerr, np.abs(sol.states - exact).max())
    herm, converged = 0.0, 0
    for seed in range(10):
        sys = random_siso(seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            basis = irka(sys, 2, seed=seed, tol=1e-10, max_iter=500)
        if not basis.converged:
            continue
        converged += 1
        red = basis.reduce(sys)
        for lam in red.poles():
            s = -lam
            herm = max(herm, np.abs(sys(s) - red(s)).max() / np.abs(sys(s)).max(),
                       np.abs(derivative(sys, s) - derivative(red, s)).max()
                       / np.abs(derivative(sys, s)).max())
    ok = lyap <= 1e-8 and qrerr <= 1e-10 and svderr <= 1e-10 and odeerr <= 1e-6 and herm <= 1e-6
    detail = (f"Lyapunov residual {lyap:.1e}, QR {qrerr:.1e}, SVD {svderr:.1e}, "
              f"ODE vs expm {odeerr:.1e}, IRKA Hermite {herm:.1e} on {converged}/10 converged")
    assert acceptance("9", ok, detail)
