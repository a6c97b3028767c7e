"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Criterion 7 integrates four 256-trajectory ensembles of a 64-cell chain and
takes several minutes; criterion 9 reuses its beta = 64 run.
"""
import math
import time

import numpy as np
import pytest

from diatomic_freeze import ChainParams, IntegratorConfig, SamplerConfig, build_basis, evolve
from diatomic_freeze.chain import PhasePoint, diff_coords, potential_energy, s_order
from diatomic_freeze.dynamics import omega_max, step
from diatomic_freeze.gibbs import block_rng, estimate, metropolis_sweep, sample_ensemble
from diatomic_freeze.modes import (ACOUSTIC, OPTICAL, modes_to_x, modes_to_xieta, state_to_xieta,
                                   x_to_modes, xieta_to_modes)
from diatomic_freeze.normalform import (build_H1, build_H2, evaluate, lie_construct,
                                        mc_variance_of_poly, optical_charge, plus_norm,
                                        resonant_shift_ratios)
from diatomic_freeze.observables import (acoustic_identity, branch_energies, first_crossing,
                                         freezing_report)

from conftest import random_state, record_criterion
from test_dynamics import exact_harmonic
from test_modes import _fd_jacobian

SEED = 20261016


def rel_max(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


# -- 1 -------------------------------------------------------------------------

def _reference_eigenvalues(p, k):
    # 2x2 dynamical matrix of the two-site cell, assembled from scratch
    theta = 2 * np.pi * k / p.N
    off = -p.K * (1 + np.exp(-1j * theta)) / np.sqrt(p.m1 * p.m2)
    D = np.array([[2 * p.K / p.m1, off], [np.conj(off), 2 * p.K / p.m2]])
    return np.linalg.eigvalsh(D)


def test_criterion_1_dispersion():
    t0 = time.perf_counter()
    err, gap_ok = 0.0, True
    for N in (4, 5, 8, 16):
        for m1, m2 in ((2.0, 1.0), (16.0, 1.0)):
            p = ChainParams(N, m1, m2)
            b = build_basis(p)
            for k in range(b.kmin, b.kmin + N):
                # compare omega^2 so the acoustic zero is not amplified by a square root
                lo, hi = _reference_eigenvalues(p, k)
                i = b.index(k)
                err = max(err, abs(b.omega[ACOUSTIC, i] ** 2 - lo), abs(b.omega[OPTICAL, i] ** 2 - hi))
            gap_ok &= bool(b.omega[ACOUSTIC].max() <= math.sqrt(2 * p.K / p.m1) + 1e-15
                           < math.sqrt(2 * p.K / p.m2) <= b.omega[OPTICAL].min() + 1e-15)
    dt = time.perf_counter() - t0
    ok = err <= 1e-12 and gap_ok and dt < 1.0
    record_criterion(1, ok, f"max |omega^2 - 2x2 eig| = {err:.2e}, gap ordering {gap_ok}, {dt:.2f} s")
    assert ok


# -- 2 -------------------------------------------------------------------------

def test_criterion_2_canonicity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    round_trip = 0.0
    for N in (4, 5, 8):
        p = ChainParams(N, 16.0, 1.0)
        b = build_basis(p)
        s = random_state(p, rng, (100,))
        m = x_to_modes(s, b)
        back = modes_to_x(m, b)
        xi, eta = modes_to_xieta(m, b)
        z0 = b.index(0)
        m2 = xieta_to_modes(xi, eta, b, zero_mode=(m.qhat[..., ACOUSTIC, z0], m.phat[..., ACOUSTIC, z0]))
        round_trip = max(round_trip, rel_max(back.x, s.x), rel_max(back.p, s.p),
                         rel_max(m2.qhat, m.qhat), rel_max(m2.phat, m.phat))

    bracket = 0.0
    for N in (4, 5):
        p = ChainParams(N, 16.0, 1.0)
        b = build_basis(p)
        slots = b.slots()

        def coords(st):
            xi, eta = state_to_xieta(st, b)
            return np.array([xi[l, b.index(k)] for l, k in slots] + [eta[l, b.index(k)] for l, k in slots])

        Jx, Jp = _fd_jacobian(coords, random_state(p, rng))
        B = Jx @ Jp.T - Jp @ Jx.T
        n = len(slots)
        om = np.array([b.omega[l, b.index(k)] for l, k in slots])
        expect = np.zeros((2 * n, 2 * n), complex)
        expect[:n, n:] = np.diag(1j * om)
        expect[n:, :n] = np.diag(-1j * om)
        bracket = max(bracket, float(np.max(np.abs(B - expect))))
    dt = time.perf_counter() - t0
    ok = round_trip <= 1e-10 and bracket <= 1e-6 and dt < 10.0
    record_criterion(2, ok, f"round trip {round_trip:.2e}, bracket matrix error {bracket:.2e}, {dt:.2f} s")
    assert ok


# -- 3 -------------------------------------------------------------------------

def test_criterion_3_gibbs_sampler():
    p = ChainParams(32, 16.0, 1.0)
    cfg = SamplerConfig(beta=64.0, n_samples=10_000, seed=SEED)
    ens, diag = sample_ensemble(p, cfg)
    b = build_basis(p)
    e = branch_energies(ens, b)
    M = p.masses.sum()
    checks = {}
    for name, cols, m in (("p^2 heavy", slice(0, None, 2), p.m1), ("p^2 light", slice(1, None, 2), p.m2)):
        # zero total momentum takes a factor (1 - m_i/M) off m_i / beta
        est = estimate((ens.p[:, cols] ** 2).mean(axis=-1))
        checks[name] = (est, m * (1 - m / M) / cfg.beta)
    checks["E+"] = (estimate(e.e_plus), p.N / cfg.beta)
    # the acoustic k = 0 mode is removed, so N - 1 quadratic pairs remain
    checks["E-"] = (estimate(e.e_minus), (p.N - 1) / cfg.beta)

    # stationarity: one more Metropolis sweep must not move the potential energy
    y = ens.x.copy()
    before = potential_energy(PhasePoint(np.zeros_like(y), y), p)
    metropolis_sweep(y, p, cfg.beta, diag.step, block_rng(SEED + 1, 0))
    after = potential_energy(PhasePoint(np.zeros_like(y), y), p)
    checks["stationarity dV"] = (estimate(after - before), 0.0)

    z = {k: abs(est.mean - ref) / est.stderr_mean for k, (est, ref) in checks.items()}
    ok = all(v <= 3 for v in z.values()) and not diag.warnings
    detail = ", ".join(f"{k} z={v:.2f}" for k, v in z.items())
    record_criterion(3, ok, f"{detail}, acceptance {diag.acceptance:.2f}")
    assert ok


# -- 4 -------------------------------------------------------------------------

def test_criterion_4_integrator():
    p = ChainParams(64, 16.0, 1.0, 1.0, 0.25, 0.25)
    ens, _ = sample_ensemble(p, SamplerConfig(beta=64.0, n_samples=64, seed=SEED))
    Om = omega_max(p)
    cfg = IntegratorConfig(0.05 / Om, 1e3 / Om, 200, "yoshida4")
    drift = evolve(ens, p, cfg).max_rel_drift

    rng = np.random.default_rng(SEED)
    h = ChainParams(4, 3.0, 1.0)
    s = random_state(h, rng)
    T = 20 / omega_max(h)

    def error(scheme, dt):
        n = int(round(T / dt))
        cur = s
        for _ in range(n):
            cur = step(cur, h, dt, scheme)
        return np.max(np.abs(cur.x - exact_harmonic(s, h, n * dt).x))

    dt = 0.2 / omega_max(h)
    ratios = {sch: error(sch, dt) / error(sch, dt / 2) for sch in ("verlet2", "yoshida4")}
    conv_ok = abs(ratios["verlet2"] / 4 - 1) <= 0.2 and abs(ratios["yoshida4"] / 16 - 1) <= 0.2
    ok = drift < 1e-6 and conv_ok
    record_criterion(4, ok, f"energy drift {drift:.2e} over 1e3/Omega, halving ratios "
                            f"verlet2 {ratios['verlet2']:.2f} (4), yoshida4 {ratios['yoshida4']:.2f} (16)")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_criterion_5_symbolic_engine():
    rng = np.random.default_rng(SEED)
    worst = {"residual": 0.0, "neumann": 0.0, "h_xspace": 0.0, "trajectory": 0.0}
    kernel_ok = True
    for ratio in (16.0, 25.0):
        p = ChainParams(4, ratio, 1.0, 1.0, 0.25, 0.25)
        b = build_basis(p)
        res = lie_construct(b, 2)
        d = res.diagnostics
        worst["residual"] = max(worst["residual"], max(d["residual"]))
        worst["neumann"] = max(worst["neumann"], max(g / max(c, 1e-300) for g, c in
                                                     zip(d["neumann_gap"], d["chi_norm"])))
        kernel_ok &= all(optical_charge(k) == 0 for z in res.z for k in z.terms)

        s = random_state(p, rng, (50,))
        r = diff_coords(s).r
        v3 = 0.5 * p.K * p.A * np.sum(r ** 3, axis=(-1, -2))
        v4 = 0.5 * p.K * p.B * np.sum(r ** 4, axis=(-1, -2))
        worst["h_xspace"] = max(worst["h_xspace"], rel_max(evaluate(res.H[1], s, b), v3),
                                rel_max(evaluate(res.H[2], s, b), v4))

        s0 = random_state(p, rng, (20,), scale=0.25, p_scale=np.sqrt(p.masses / 16))
        h = 0.01 / omega_max(p)

        def central(dt):
            fwd = res.evaluate_phi(step(s0, p, dt, "yoshida4"), b)
            bwd = res.evaluate_phi(step(s0, p, -dt, "yoshida4", check=False), b)
            return (fwd - bwd) / (2 * dt)

        deriv = (4 * central(h / 2) - central(h)) / 3
        ups = res.evaluate_remainder(s0, b)
        worst["trajectory"] = max(worst["trajectory"],
                                  float(np.max(np.abs(deriv - ups)) / np.sqrt(np.mean(ups ** 2))))
    ok = (worst["residual"] <= 1e-12 and kernel_ok and worst["neumann"] <= 1e-10
          and worst["h_xspace"] <= 1e-9 and worst["trajectory"] <= 1e-5)
    record_criterion(5, ok, f"residual {worst['residual']:.1e}, kernel {kernel_ok}, "
                            f"direct vs Neumann {worst['neumann']:.1e}, H1/H2 vs x-space "
                            f"{worst['h_xspace']:.1e}, d/dt Phi vs remainder {worst['trajectory']:.1e}")
    assert ok


# -- 6 -------------------------------------------------------------------------

def test_criterion_6_resonant_shift():
    worst, info = 0.0, []
    ok = True
    for N in (4, 8):
        for ratio in (16.0, 25.0, 36.0):
            b = build_basis(ChainParams(N, ratio, 1.0))
            S = s_order(b.params)
            bound = math.sqrt(1 / ratio)
            for s in range(1, S + 1):
                r = resonant_shift_ratios(b, s).max()
                worst = max(worst, r / (s * bound))
                ok &= bool(r <= s * bound <= 0.5)
            if N == 4:
                info.append(f"ratio {ratio:g}: order-indexed max "
                            + "/".join(f"{resonant_shift_ratios(b, s + 2).max():.2f}" for s in (1, 2)))
    record_criterion(6, ok, f"max measured/(s sqrt(m2/m1)) = {worst:.3f} over degrees s <= S; "
                            f"info N=4 {'; '.join(info)}")
    assert ok


# -- 7 and 9 -----------------------------------------------------------------

FREEZE_T = 4000.0
FREEZE_RECORD = 40.0
FREEZE_RUNS = [(16.0, 16.0), (16.0, 64.0), (16.0, 256.0), (36.0, 64.0)]   # (mass ratio, beta)


@pytest.fixture(scope="module")
def freezing_runs():
    out = {}
    for ratio, beta in FREEZE_RUNS:
        p = ChainParams(64, ratio, 1.0, 1.0, 0.25, 0.25)
        b = build_basis(p)
        ens, _ = sample_ensemble(p, SamplerConfig(beta, 256, seed=SEED))
        dt = 0.1 / omega_max(p)
        stride = int(round(FREEZE_RECORD / dt))
        cfg = IntegratorConfig(dt, FREEZE_T, stride, "yoshida4")

        def energies(st):
            e = branch_energies(st, b)
            return np.stack([e.e_plus, e.e_minus, e.h_nl])

        ts = evolve(ens, p, cfg, {"E": energies})
        E = ts.values["E"]
        out[ratio, beta] = {"t": ts.t, "e_plus": E[:, 0], "e_minus": E[:, 1], "h_nl": E[:, 2],
                            "report": freezing_report(E[:, 0], ts.t, 0.2), "drift": ts.max_rel_drift}
    return out


def _combined(a, b, i):
    return math.hypot(a.stderr[i], b.stderr[i])


@pytest.mark.slow
def test_criterion_7a_drift_non_increasing_in_beta(freezing_runs):
    reps = [freezing_runs[16.0, beta]["report"] for beta in (16.0, 64.0, 256.0)]
    t = reps[0].t
    probe = [int(np.argmin(np.abs(t - v))) for v in (FREEZE_T / 4, FREEZE_T / 2, FREEZE_T)]
    ok, parts = True, []
    for i in probe:
        vals = [r.normalized_drift[i] for r in reps]
        for a, b in zip(reps, reps[1:]):
            ok &= bool(b.normalized_drift[i] <= a.normalized_drift[i] + 3 * _combined(a, b, i))
        parts.append(f"t={t[i]:.0f}: " + "/".join(f"{v:.4f}" for v in vals))
    record_criterion("7a", ok, "|dC|/sigma^2 at beta 16/64/256, " + "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_7b_crossing_time_increases_with_beta(freezing_runs):
    times = [first_crossing(freezing_runs[16.0, beta]["report"], 0.2) for beta in (16.0, 64.0, 256.0)]
    # a censored time (no crossing by the end of the run) orders nothing
    ok = all(a < b for a, b in zip(times, times[1:]))
    fmt = ", ".join(f"beta {b:g}: {'> %g' % FREEZE_T if math.isinf(v) else '%.0f' % v}"
                    for b, v in zip((16, 64, 256), times))
    record_criterion("7b", ok, f"first time |dC|/sigma^2 > 0.2: {fmt}")
    assert ok


@pytest.mark.slow
def test_criterion_7c_heavier_mass_does_not_shorten(freezing_runs):
    t16 = first_crossing(freezing_runs[16.0, 64.0]["report"], 0.2)
    t36 = first_crossing(freezing_runs[36.0, 64.0]["report"], 0.2)
    ok = t36 >= t16
    fmt = lambda v: f"> {FREEZE_T:g}" if math.isinf(v) else f"{v:.0f}"
    record_criterion("7c", ok, f"beta 64 crossing time: ratio 16 {fmt(t16)}, ratio 36 {fmt(t36)}")
    assert ok


@pytest.mark.slow
def test_criterion_9_correlation_identity(freezing_runs):
    run = freezing_runs[16.0, 64.0]
    chk = acoustic_identity(run["e_plus"], run["e_minus"], run["h_nl"], run["t"])
    z = chk.z_scores()
    ok = bool(np.all(z <= 3))
    record_criterion(9, ok, f"max |lhs - rhs| / combined stderr = {z.max():.2f} over {len(z)} lags")
    assert ok


# -- 8 -------------------------------------------------------------------------

def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def test_criterion_8_variance_scalings():
    def sigma_phi0(N, beta, n=4096):
        p = ChainParams(N, 16.0, 1.0, 1.0, 0.25, 0.25)
        ens, _ = sample_ensemble(p, SamplerConfig(beta, n, seed=SEED + N))
        return float(np.std(branch_energies(ens, build_basis(p)).phi0, ddof=1))

    Ns, betas = (8, 16, 32, 64), (16.0, 64.0, 256.0)
    slope_N = _slope(Ns, [sigma_phi0(N, 64.0) for N in Ns])
    slope_b = _slope(betas, [sigma_phi0(32, b) for b in betas])

    ratios = {}
    for N in (8, 16, 32):
        p = ChainParams(N, 16.0, 1.0, 1.0, 0.25, 0.25)
        b = build_basis(p)
        H1 = build_H1(b)
        for beta in (16.0, 64.0):
            ens, _ = sample_ensemble(p, SamplerConfig(beta, 4096, seed=SEED + 7 * N))
            var = mc_variance_of_poly(H1, ens, b).variance
            ratios[N, beta] = var / (N * beta ** -H1.degree * plus_norm(H1) ** 2)
    spread = max(ratios.values()) / min(ratios.values())
    ok = abs(slope_N - 0.5) <= 0.1 and abs(slope_b + 1.0) <= 0.1 and spread <= 3.0
    record_criterion(8, ok, f"slope in N {slope_N:.3f}, slope in beta {slope_b:.3f}, "
                            f"variance ratio range {min(ratios.values()):.3g}..{max(ratios.values()):.3g} "
                            f"(max/min {spread:.2f})")
    assert ok
