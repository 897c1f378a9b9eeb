"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Everything is seeded, so reruns are deterministic.  Run with

    pytest tests/test_acceptance.py -v -s

to see the per-criterion lines; the statistical criteria use the stated
replica counts and tolerances and take tens of minutes in total.
"""

import numpy as np
import pytest
import scipy.linalg

from bcpp import hydro, kernels, moments, pde, shell
from bcpp.lattice import TorusGeometry
from bcpp.process import ProcessState
from bcpp.profiles import DensityProfile, TestFunction


def _report(num, ok, detail):
    print(f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="session")
def gamma_est():
    return kernels.gamma_reference(3, radii=(30, 40))


def _walk_q_matrix(geom, lam):
    n = geom.n_sites
    Q = np.zeros((n, n))
    nbr = geom.neighbor_table()
    for i in range(n):
        Q[i, i] = -2.0 * geom.d * lam
        for j in range(2 * geom.d):
            Q[i, nbr[i, j]] += lam
    return Q


def test_criterion_01_kernel_exactness():
    geom = TorusGeometry(2, 5)
    lam = 0.7
    dense = scipy.linalg.expm(0.3 * _walk_q_matrix(geom, lam))
    table = kernels.KernelTable(0.3, lam, geom)
    err_expm = max(
        np.abs(table.row(x) - dense[x]).max() for x in range(geom.n_sites)
    )
    a = kernels.KernelTable(0.4, lam, geom)
    b = kernels.KernelTable(0.9, lam, geom)
    c = kernels.KernelTable(1.3, lam, geom)
    rows_b = np.stack([b.row(z) for z in range(geom.n_sites)])
    err_ck = max(
        np.abs(a.row(x) @ rows_b - c.row(x)).max() for x in range(geom.n_sites)
    )
    ok = err_expm < 1e-10 and err_ck < 1e-8
    _report(1, ok, f"expm gap {err_expm:.2e} (<1e-10), Chapman-Kolmogorov {err_ck:.2e} (<1e-8)")


def test_criterion_02_first_moment_duality():
    geom = TorusGeometry(3, 16)
    lam, t, reps = 0.6, 1.0, 2000
    coords = geom.all_coords_centered()
    eta0 = 1.0 + 2.0 * np.exp(-np.sum(coords**2, axis=1) / 18.0)
    pred = kernels.first_moment(eta0, t, lam, geom)
    acc = np.zeros(geom.n_sites)
    acc2 = np.zeros(geom.n_sites)
    for r in range(reps):
        st = ProcessState(geom, lam, eta0, [20240802, r])
        st.advance(t)
        v = st.field_values()
        acc += v
        acc2 += v * v
    mean = acc / reps
    se = np.sqrt(np.maximum(acc2 / reps - mean**2, 1e-300) / reps)
    z = (mean - pred) / se
    frac = float(np.mean(np.abs(z) <= 3.0))
    ok = frac >= 0.99
    _report(2, ok, f"{100 * frac:.2f}% of {geom.n_sites} sites with |z| <= 3 (need >= 99%), max |z| {np.abs(z).max():.2f}")


def test_criterion_03_pair_moments():
    geom = TorusGeometry(1, 5)
    lam, reps = 0.5, 20000
    eta0 = np.array([0.5, 1.2, 2.0, 0.3, 0.8])
    gen = moments.build_pair_generator(lam, geom, "M_lambda")
    dense_M = gen.matrix.toarray()
    gamma0 = np.outer(eta0, eta0)
    worst_expm = 0.0
    worst_z = 0.0
    for t in (0.5, 1.0):
        gamma_t = moments.evolve_pair_moments(gamma0, t, gen)
        dense = (scipy.linalg.expm(t * dense_M) @ gamma0.reshape(-1)).reshape(5, 5)
        worst_expm = max(worst_expm, np.abs(gamma_t - dense).max())
        acc = np.zeros((5, 5))
        acc2 = np.zeros((5, 5))
        for r in range(reps):
            st = ProcessState(geom, lam, eta0, [20240803, int(t * 2), r])
            st.advance(t)
            v = st.field_values()
            prod = np.outer(v, v)
            acc += prod
            acc2 += prod * prod
        mean = acc / reps
        var = np.maximum(acc2 / reps - mean**2, 1e-300) * reps / (reps - 1)
        z = (mean - gamma_t) / np.sqrt(var / reps)
        worst_z = max(worst_z, float(np.abs(z).max()))
    ok = worst_expm < 1e-8 and worst_z <= 4.0
    _report(3, ok, f"expm gap {worst_expm:.2e} (<1e-8), max pair |z| {worst_z:.2f} (<=4) at {reps} replicas")


def test_criterion_04_positivity():
    worst = np.inf
    for d, L in ((1, 4), (2, 3)):
        geom = TorusGeometry(d, L)
        for lam in (0.1, 0.5, 2.0):
            for t in (0.25, 1.0, 4.0):
                worst = min(worst, moments.check_eq23_positivity(t, lam, geom))
    ok = worst >= -1e-9
    _report(4, ok, f"min entry of exp(tM)-exp(tC) over the grid = {worst:.3e} (>= -1e-9)")


def test_criterion_05_gamma_and_constants(gamma_est):
    delta_ok = gamma_est.delta < 0.005
    gamma_ok = 0.64 <= gamma_est.gamma <= 0.68
    k40 = gamma_est.k_by_radius[40]
    p, se = kernels.mc_hit_probability(3, [1, 0, 0], 40, 1_000_000, seed=20240805)
    mc_ok = abs(p - k40) <= 3 * se
    lam_c = kernels.lambda_critical_bound(3, gamma_est.gamma)
    h = kernels.h_lambda(0.6, 3, gamma_est.gamma)
    consts_ok = abs(lam_c - 0.523) < 0.005 and abs(h.value - 0.0322) < 0.001 and h.positive
    ok = delta_ok and gamma_ok and mc_ok and consts_ok
    _report(5, ok,
            f"|k30-k40|={gamma_est.delta:.4f} (<0.005), gamma3={gamma_est.gamma:.4f} in [0.64,0.68], "
            f"MC-solve gap {abs(p - k40) / se:.2f} se (<=3), lambda_c={lam_c:.4f}, h(0.6)={h.value:.4f}")


def test_criterion_06_second_moment_bound(gamma_est):
    lam, R, d = 0.6, 8, 3
    h = kernels.h_lambda(lam, d, gamma_est.gamma).value
    inner = R // 2
    table = kernels.return_table(d, inner + 1, R_solve=40)
    worst_ratio = 0.0
    deltas = {}
    for t in (0.5, 1.0, 2.0):
        J = moments.evolve_J(t, lam, R, d)
        J2 = moments.evolve_J(t, lam, 2 * R, d)
        sl = tuple(slice(R - inner, R + inner + 1) for _ in range(d))
        sl2 = tuple(slice(2 * R - inner, 2 * R + inner + 1) for _ in range(d))
        deltas[t] = float(np.abs(J2[sl2] - J[sl]).max())
        for coord in np.ndindex(*([2 * inner + 1] * d)):
            x = np.array(coord) - inner
            bound = (table.k(x) + h) / h
            worst_ratio = max(worst_ratio, float(J[tuple(c + R for c in x)]) / bound)
    bound_ok = worst_ratio <= 1.0 + 1e-6
    doubling_ok = max(deltas.values()) < 1e-4
    ok = bound_ok and doubling_ok
    _report(6, ok,
            f"max J/bound = {worst_ratio:.6f} (<=1+1e-6), "
            f"R-doubling delta {max(deltas.values()):.2e} (<1e-4) over t in {sorted(deltas)}")


def test_criterion_07_psi_null_vector(gamma_est):
    # lam = 1/(4d) normalizes the interior rows to the unit harmonic operator;
    # k values come from solves at R_solve = 2R, h from the extrapolated gamma
    d = 3
    lam = 1.0 / (4 * d)
    h = kernels.h_lambda(lam, d, gamma_est.gamma).value
    resid = {}
    for R in (20, 30):
        table = kernels.return_table(d, R, R_solve=2 * R)
        resid[R] = moments.psi_null_residual(lam, R, d, table.values, h)
    ok = resid[20] <= 5e-3 and resid[30] < resid[20]
    _report(7, ok, f"max interior |Psi Lambda|: R=20 {resid[20]:.2e} (<=5e-3), R=30 {resid[30]:.2e} (strictly smaller)")


def test_criterion_08_heat_oracles():
    lam = 0.7
    prof1 = DensityProfile("gaussian_bump", 1, width=0.5)
    h1 = 0.02
    sol1 = pde.fd_heat_solver(prof1, 0.5, lam, h1, 6.0)
    gap1 = np.abs(
        pde.heat_solution(prof1, 0.5, sol1.points(), lam, order=48) - sol1.values.reshape(-1)
    ).max()
    prof2 = DensityProfile("gaussian_bump", 2, width=0.5)
    h2 = 0.05
    sol2 = pde.fd_heat_solver(prof2, 0.3, lam, h2, 5.0)
    gap2 = np.abs(
        pde.heat_solution(prof2, 0.3, sol2.points(), lam, order=32) - sol2.values.reshape(-1)
    ).max()
    fd_ok = gap1 < max(1e-3, 3 * h1**2) and gap2 < max(1e-3, 3 * h2**2)
    G = TestFunction("cosine_bump", 1)
    resid = abs(pde.weak_residual(prof1, G, 0.5, lam))
    weak_ok = resid <= 1e-4
    sig, t = 0.5, 0.5
    pts = np.array([[0.0, 0.0], [0.3, -0.4], [1.0, 0.7], [-1.5, 0.2]])
    s2 = sig**2 + 2 * lam * t
    closed = (sig**2 / s2) * np.exp(-0.5 * np.sum(pts**2, axis=1) / s2)
    gauss_gap = np.abs(pde.heat_solution(prof2, t, pts, lam, order=48) - closed).max()
    gauss_ok = gauss_gap < 1e-8
    ok = fd_ok and weak_ok and gauss_ok
    _report(8, ok,
            f"fd gaps {gap1:.2e}/{gap2:.2e} (tols {max(1e-3, 3 * h1**2):.1e}/{max(1e-3, 3 * h2**2):.1e}), "
            f"weak residual {resid:.2e} (<=1e-4), gaussian closed form {gauss_gap:.2e} (<1e-8)")


def test_criterion_09_mass_conservation():
    cfg = hydro.ExperimentConfig(
        d=3, lam=0.6, N_list=(8,), t_list=(0.1,), replicas=500, c_L=8,
        master_seed=20240809, workers=0,
    )
    (_, _, _, mean, init, z) = hydro.mass_conservation_check(cfg)[0]
    ok = abs(z) <= 3.0
    _report(9, ok, f"total-mass z = {z:+.2f} (|z|<=3) with 500 replicas (mean {mean:.2f} vs {init:.2f})")


def test_criterion_10_martingale():
    cfg = hydro.ExperimentConfig(
        d=3, lam=0.6, N_list=(4, 8, 16), t_list=(0.05,), replicas=200, c_L=8,
        master_seed=20240810, workers=0,
    )
    rows = {r.N: r for r in hydro.martingale_diagnostics(cfg)}
    mean_ok = abs(rows[4].z_mean) <= 3.0 and abs(rows[8].z_mean) <= 3.0
    logs = np.log([rows[N].mart_var for N in (4, 8, 16)])
    slope = float(np.polyfit(np.log([4.0, 8.0, 16.0]), logs, 1)[0])
    slope_ok = -1.5 <= slope <= -0.5  # (2 - d) +/- 0.5 at d = 3
    ok = mean_ok and slope_ok
    _report(10, ok,
            f"mean z at N=4/8: {rows[4].z_mean:+.2f}/{rows[8].z_mean:+.2f} (|z|<=3), "
            f"Var(M) log-log slope {slope:.2f} in [-1.5,-0.5]")


def test_criterion_11_hydrodynamic_trend():
    cfg = hydro.ExperimentConfig(
        d=3, lam=0.6, N_list=(4, 8, 16), t_list=(0.05,), replicas=200, c_L=8,
        master_seed=20240811, workers=0,
    )
    rows = {r.N: r for r in hydro.run_convergence_experiment(cfg)}
    errs = [rows[N].abs_error for N in (4, 8, 16)]
    vars_ = [rows[N].variance for N in (4, 8, 16)]
    err_ok = errs[0] > errs[1] > errs[2]
    var_ok = vars_[0] > vars_[1] > vars_[2]
    base = hydro.ExperimentConfig(
        d=3, lam=0.6, N_list=(8,), t_list=(0.05,), replicas=200, c_L=8,
        master_seed=20240812, workers=0,
    )
    doubled = hydro.ExperimentConfig(
        d=3, lam=0.6, N_list=(8,), t_list=(0.05,), replicas=200, c_L=16,
        master_seed=20240812, workers=0,
    )
    rb = hydro.run_convergence_experiment(base)[0]
    rd = hydro.run_convergence_experiment(doubled)[0]
    control_ok = abs(rb.mean_pairing - rd.mean_pairing) < rb.se
    ok = err_ok and var_ok and control_ok
    _report(11, ok,
            f"|mean-target| N=4/8/16: {errs[0]:.4f}/{errs[1]:.4f}/{errs[2]:.4f} (strictly down), "
            f"variance: {vars_[0]:.2e}/{vars_[1]:.2e}/{vars_[2]:.2e} (strictly down), "
            f"L-doubling shift {abs(rb.mean_pairing - rd.mean_pairing):.5f} < se {rb.se:.5f}")


def test_criterion_12_reproducibility(tmp_path):
    args = ["hydro", "--d", "3", "--N-list", "4", "--t-list", "0.02",
            "--replicas", "12", "--master-seed", "31"]
    outs = []
    for tag, workers in (("a", "1"), ("b", "2"), ("c", "1")):
        out = tmp_path / f"{tag}.csv"
        code = shell.dispatch(args + ["--out", str(out), "--workers", workers])
        assert code == 0
        outs.append(out.read_bytes())
    hydro_ok = outs[0] == outs[1] == outs[2]
    margs = ["martingale", "--d", "3", "--N-list", "4", "--t-list", "0.02",
             "--replicas", "12", "--master-seed", "31"]
    mouts = []
    for tag, workers in (("ma", "1"), ("mb", "2")):
        out = tmp_path / f"{tag}.csv"
        assert shell.dispatch(margs + ["--out", str(out), "--workers", workers]) == 0
        mouts.append(out.read_bytes())
    mart_ok = mouts[0] == mouts[1]
    ok = hydro_ok and mart_ok
    _report(12, ok, "byte-identical CSVs across reruns and worker counts (hydro + martingale)")
