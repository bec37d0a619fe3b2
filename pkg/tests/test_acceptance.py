"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (visible without ``-s``) and then
asserts the same condition.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from hybridq.analysis import BinSpec, a_priori_state, batch_stderr, clopper_pearson, joint_sigma
from hybridq.config import default_observables, observable_matrix
from hybridq.engine import Mode, simulate_ensemble
from hybridq.models import build_builtin, list_models
from hybridq.semigroup import (Liouvillian, chapman_kolmogorov_check, cosine, derived_seed, gaussian,
                               generator_consistency_check, lindblad_solve, normalization_check, plane_wave)
from hybridq.states import (BELL, basis_ket, chi, concurrence_pure, expect, maximally_mixed, projector,
                            pure_vector, purity_gap, random_pure_state, trace_distance)

SEED = 20240611


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
    assert ok, detail


def normalized(sigma):
    tr = np.trace(sigma, axis1=-2, axis2=-1).real
    return sigma / tr[..., None, None], tr


# -- 1, 2: martingale and mean state ----------------------------------------


@pytest.fixture(scope="module")
def local_q_run():
    model = build_builtin("unitary_local")
    rho = projector(BELL["phi_plus"])
    start = time.perf_counter()
    ens = simulate_ensemble(model, [0.0, 0.0], rho, 1.0, 1e-3, Mode.Q, 10_000, SEED, grid=[1000],
                            psd_check_every=10)
    return model, rho, ens, time.perf_counter() - start


def test_01_martingale(local_q_run, capsys):
    _, _, ens, wall = local_q_run
    p = ens.weight[:, -1]
    mean, se = p.mean(), batch_stderr(p, ens.traj_indices)
    ok = abs(mean - 1) <= 3 * se and se <= 0.02 and wall < 60
    report(capsys, 1, "martingale E_Q[p_T] = 1",
           ok, f"mean={mean:.4f} stderr={se:.4f} |dev|/se={abs(mean - 1) / se:.2f} runtime={wall:.1f}s")


def test_02_mean_state_oracle(local_q_run, capsys):
    model, rho, ens, _ = local_q_run
    est = a_priori_state(ens, 1.0)
    ref = lindblad_solve(Liouvillian.from_model(model), rho, 1.0)
    td = trace_distance(est.state, ref)
    tol = max(0.02, 3 * est.stderr)
    report(capsys, 2, "mean state vs master equation", td <= tol,
           f"trace distance={td:.4f} tol={tol:.4f} (stderr {est.stderr:.4f})")


# -- 3: equilibrium -----------------------------------------------------------


def test_03_equilibrium(capsys):
    lam, beta = 1.0, 1.2
    model = build_builtin("unitary_local", lam=lam, beta=beta)
    T = 10 / (lam * beta**2)
    rho_T = lindblad_solve(Liouvillian.from_model(model), projector(BELL["phi_plus"]), T)
    td = trace_distance(rho_T, maximally_mixed(4))
    report(capsys, 3, "equilibrium I/4 at T = 10/(lambda beta^2)", td < 1e-6, f"trace distance={td:.2e} at T={T:.3f}")


# -- 4, 5: entanglement --------------------------------------------------------


def test_04_entanglement_preserved(capsys):
    model = build_builtin("unitary_local")
    rho = projector(BELL["phi_plus"])
    worst = {}
    for mode in (Mode.Q, Mode.P):
        dev = [0.0]

        def monitor(r, t, x, sigma, jumps, traj):
            hats, _ = normalized(sigma)
            dev[0] = max(dev[0], float(np.max(np.abs(concurrence_pure(pure_vector(hats)) - 1))))

        simulate_ensemble(model, [0.0, 0.0], rho, 1.0, 1e-3, mode, 1000, SEED, grid=[1000], monitor=monitor)
        worst[mode.value] = dev[0]
    ok = all(v < 1e-8 for v in worst.values())
    report(capsys, 4, "concurrence stays 1 (every step, every trajectory)", ok,
           ", ".join(f"{m}: max |C-1|={v:.1e}" for m, v in worst.items()) + " over 1000 x 1000 steps")


def test_05_entanglement_created(capsys):
    model = build_builtin("unitary_nonlocal")
    rho = projector(basis_ket("11"))
    N = 1000
    lines, ok = [], True
    for mode in (Mode.Q, Mode.P):
        seen = np.zeros(N, dtype=bool)
        conc, simultaneous = [], [0]

        def monitor(r, t, x, sigma, jumps, traj):
            if jumps is None:
                return
            first = jumps.any(axis=1) & ~seen[traj]
            if not first.any():
                return
            seen[traj[first]] = True
            single = first & (jumps.sum(axis=1) == 1)
            simultaneous[0] += int((first & ~single).sum())
            if single.any():
                hats, _ = normalized(sigma[single])
                conc.extend(concurrence_pure(pure_vector(hats)))

        simulate_ensemble(model, [0.0, 0.0], rho, 1.0, 1e-3, mode, N, SEED, grid=[1000], monitor=monitor)
        conc = np.asarray(conc)
        dev = float(np.max(np.abs(conc - 1))) if len(conc) else np.inf
        ok &= dev < 1e-8 and len(conc) > 0
        lines.append(f"{mode.value}: {len(conc)} first jumps, max |C-1|={dev:.1e}, "
                     f"{simultaneous[0]} excluded double-jump steps")
    report(capsys, 5, "concurrence 1 right after the first jump from |11>", ok, "; ".join(lines))


# -- 6, 7: classical jump statistics -----------------------------------------


def test_06_point_mass(capsys):
    lam = 1.0
    model = build_builtin("point_mass", x0=1.0, lam=lam)
    bins = BinSpec.around_points([0.0, 1.0])
    N, parts, ok = 10_000, [], True
    for t in (math.log(2), 1.0, 2.0):
        ens = simulate_ensemble(model, [0.0], np.eye(1), t, t / 1000, Mode.P, N, SEED, grid=[1000])
        k = int(np.sum(bins.index(ens.x[:, -1]) == 1))
        lo, hi = clopper_pearson(k, N, 0.99)
        target = 1 - math.exp(-lam * t)
        ok &= bool(lo <= target <= hi)
        parts.append(f"t={t:.3f}: {k / N:.4f} in [{float(lo):.4f}, {float(hi):.4f}] vs {target:.4f}")
    report(capsys, 6, "P[X_t = x0] within 99% binomial CI", ok, "; ".join(parts))


def test_07_hidden_entanglement(capsys):
    lam, beta, T, dt, N = 1.0, 1.2, 7.0, 1e-3, 2000
    model = build_builtin("hidden_entanglement", lam=lam, beta=beta)
    rho = projector(basis_ket("00"))
    ens = simulate_ensemble(model, [0.0], rho, T, dt, Mode.P, N, SEED, grid=[7000], psd_check_every=0)
    counts = ens.counts[:, -1, 0]
    first = {}
    for pos, gi, _ in ens.events:
        first.setdefault(int(pos), int(gi))
    # a jump in step [t_s, t_s + dt) is stamped t_s + dt; take the step midpoint
    times = np.array(sorted(first.values())) * dt - dt / 2
    mu = lam * beta**2
    cdf = lambda s: (1 - np.exp(-mu * s)) / (1 - np.exp(-mu * T))  # noqa: E731
    ks = stats.kstest(times, cdf)
    ok = ks.pvalue > 0.01 and counts.max() <= 1
    report(capsys, 7, "first jump ~ Exp(lambda beta^2), never a second", ok,
           f"{len(times)} jumps, KS D={ks.statistic:.4f} p={ks.pvalue:.3f}, max count={int(counts.max())}")


# -- 8: mode equivalence ------------------------------------------------------


SCENARIOS = {
    "pure_classical": dict(x=[0.0], state=None, bins=BinSpec.uniform(-2.0, 4.0, 6)),
    "unitary_local": dict(x=[0.0, 0.0], state=BELL["phi_plus"], bins=BinSpec.integer([0, 0], [2, 2])),
    "unitary_nonlocal": dict(x=[0.0, 0.0], state=basis_ket("11"), bins=BinSpec.integer([0, 0], [2, 2])),
    "hidden_entanglement": dict(x=[0.0], state=BELL["phi_plus"], bins=BinSpec.integer(0, 1)),
    "pauli_walk": dict(x=[0.0], state=None, bins=BinSpec.around_points([0.0, 1.0, 2.0])),
    "point_mass": dict(x=[0.0], state=None, bins=BinSpec.around_points([0.0, 1.0]), params={"beta": 1.2}),
    "monitored_qubit": dict(x=[0.0], state=np.array([1, 1]) / np.sqrt(2), bins=BinSpec.uniform(-2.0, 2.0, 4)),
}


def scenario(name):
    sc = SCENARIOS[name]
    model = build_builtin(name, **sc.get("params", {}))
    rho = np.eye(1, dtype=complex) if sc["state"] is None else projector(sc["state"])
    return model, np.asarray(sc["x"], dtype=float), rho, sc["bins"]


def test_scenarios_cover_builtins():
    assert set(SCENARIOS) == set(list_models())


def _mode_estimates(ens, obs, bins):
    sig = ens.sigma[:, -1]
    vals = np.stack([expect(sig, a).real for a in obs], axis=1)
    w = np.trace(sig, axis1=-2, axis2=-1).real
    masses = np.zeros((ens.n_traj, bins.n_bins + 1))
    masses[np.arange(ens.n_traj), bins.index(ens.x[:, -1])] = w
    both = np.concatenate([vals, masses], axis=1)
    return both.mean(axis=0), batch_stderr(both, ens.traj_indices)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_08_mode_equivalence(name, capsys):
    model, x0, rho, bins = scenario(name)
    obs = [observable_matrix(o, model.n) for o in default_observables(model.n)]
    est = {}
    for mode, seed in ((Mode.Q, SEED), (Mode.P, derived_seed(SEED, 1))):
        ens = simulate_ensemble(model, x0, rho, 1.0, 1e-3, mode, 10_000, seed, grid=[1000], psd_check_every=0)
        est[mode] = _mode_estimates(ens, obs, bins)
    (mq, sq), (mp, sp) = est[Mode.Q], est[Mode.P]
    z = joint_sigma(mq, sq, mp, sp)
    report(capsys, 8, f"Q vs P estimates [{name}]", bool(np.all(z <= 3)),
           f"{len(z)} quantities ({len(obs)} observables, {bins.n_bins + 1} bins), max z={z.max():.2f}")


# -- 9: generator consistency -----------------------------------------------


def _test_functions(model, x):
    obs = [observable_matrix(o, model.n) for o in default_observables(model.n)]
    k = np.linspace(0.6, 1.1, model.s)
    return [
        cosine(k, obs[0]),
        gaussian(x + 0.3, 0.8, obs[-1]),
        plane_wave(-k, None),
    ]


GEN_POINTS = {"pure_classical": [0.2], "unitary_local": [0.0, 1.0], "unitary_nonlocal": [1.0, 0.0],
              "hidden_entanglement": [0.0], "pauli_walk": [1.0], "point_mass": [0.3], "monitored_qubit": [0.4]}


@pytest.mark.parametrize("name", sorted(GEN_POINTS))
def test_09_generator_consistency(name, capsys):
    model, _, _, _ = scenario(name)
    x = np.asarray(GEN_POINTS[name], dtype=float)
    rho = projector(random_pure_state(model.n, np.random.default_rng(1))) if model.n > 1 else np.eye(1)
    lines, ok = [], True
    for j, F in enumerate(_test_functions(model, x)):
        rep = generator_consistency_check(model, F, rho, x, (1e-2, 1e-3), N=200_000, seed=derived_seed(SEED, j))
        ok &= rep.passed
        worst = np.max(np.abs(rep.details["residual"].real) / np.maximum(rep.stderr.real, 1e-12))
        worst = max(worst, np.max(np.abs(rep.details["residual"].imag) / np.maximum(rep.stderr.imag, 1e-12)))
        lines.append(f"{F.name}: max residual/se={worst:.2f}")
    report(capsys, 9, f"generator consistency [{name}]", ok, "; ".join(lines))


# -- 10: instrument laws -----------------------------------------------------


def test_10_instrument_laws(capsys):
    lines, ok = [], True
    local = build_builtin("unitary_local")
    bell = projector(BELL["phi_plus"])
    for name, model, x, rho, bins in (
        ("unitary_local", local, [0.0, 0.0], bell, BinSpec.integer([0, 0], [5, 5])),
        ("point_mass", build_builtin("point_mass"), [0.0], np.eye(1), BinSpec.around_points([0.0, 1.0])),
    ):
        rep = normalization_check(model, x, 1.0, rho, bins, N=10_000, seed=SEED, dt=1e-3)
        ok &= rep.passed
        lines.append(f"normalization[{name}]={rep.estimate:.4f}+-{rep.stderr:.4f}")

    lam, t = 1.0, 0.5
    pm = build_builtin("point_mass", x0=1.0, lam=lam)
    pm_bins = BinSpec.around_points([0.0, 1.0])

    def oracle(bins):
        return np.array([math.exp(-lam * 2 * t), 1 - math.exp(-lam * 2 * t), 0.0])

    rep = chapman_kolmogorov_check(pm, [0.0], t, t, np.eye(1), None, pm_bins, pm_bins, N=10_000, seed=SEED,
                                   dt=1e-3, oracle=oracle)
    ok &= rep.passed
    lines.append(f"CK[point_mass] pass={rep.passed} oracle_pass={rep.details['oracle_pass']}")

    ib = BinSpec.integer([0, 0], [5, 5])
    rep = chapman_kolmogorov_check(local, [0.0, 0.0], t, t, bell, observable_matrix("XX", 4), ib, ib,
                                   N=10_000, seed=SEED, dt=1e-3)
    ok &= rep.passed
    lines.append(f"CK[unitary_local] pass={rep.passed} max dev={rep.details['max_deviation_sigma']:.2f} sigma")
    report(capsys, 10, "instrument normalization and Chapman-Kolmogorov", ok, "; ".join(lines))


# -- 11, 12: exact structure ---------------------------------------------------


def test_11_chi_multiplicative(capsys):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        A, B = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(2))
        phi = rng.normal(size=4) + 1j * rng.normal(size=4)
        phi /= np.linalg.norm(phi)
        lhs = chi(np.kron(A, B) @ phi)
        rhs = np.linalg.det(A) * np.linalg.det(B) * chi(phi)
        worst = max(worst, abs(lhs - rhs))
    report(capsys, 11, "chi((A x B) phi) = det A det B chi(phi)", worst < 1e-10, f"max error={worst:.1e} over 1000 draws")


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_12_purity_preserved(name, capsys):
    model, x0, _, _ = scenario(name)
    rho = projector(random_pure_state(model.n, np.random.default_rng(7)))
    gap = {}
    for mode in (Mode.Q, Mode.P):
        worst = [0.0]

        def monitor(r, t, x, sigma, jumps, traj):
            live = np.trace(sigma, axis1=-2, axis2=-1).real > 1e-12
            if live.any():
                worst[0] = max(worst[0], float(np.max(purity_gap(sigma[live]))))

        simulate_ensemble(model, x0, rho, 1.0, 1e-3, mode, 100, SEED, grid=[1000], monitor=monitor)
        gap[mode.value] = worst[0]
    ok = all(g < 1e-6 for g in gap.values())
    report(capsys, 12, f"rank-1 states stay rank-1 [{name}]", ok,
           ", ".join(f"{m}: max lambda_2/tr={g:.1e}" for m, g in gap.items()) + " over 100 trajectories x 1000 steps")
