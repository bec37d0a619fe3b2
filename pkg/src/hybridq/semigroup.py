"""Deterministic reference dynamics and Monte Carlo checks of the hybrid semigroup.

* ``Liouvillian`` and an RK4 solver for the mean-state master equation.
* Classical and hybrid generators acting on test functions ``a (x) f``.
* Monte Carlo instruments ``E_Q[tr(sigma_t a) 1_E(X_t)]``, the Chapman-Kolmogorov
  composition check, characteristic operators and a finite-dt generator check.

Superoperators act on row-major ``vec(rho)``, where
``vec(A rho B) = (A kron B^T) vec(rho)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import BinSpec, batch_stderr, joint_sigma
from .engine import Mode, NumericalError, simulate_ensemble
from .models import HybridModel, ModelError, eval_coefficients
from .states import TOL_PSD, dagger, expect, hermitize

TRACE_DRIFT_TOL = 1e-9
SEED_STRIDE = 0x9E3779B97F4A7C15  # decorrelates derived seeds


def derived_seed(seed: int, k: int) -> int:
    return (int(seed) + k * SEED_STRIDE) % 2**64


# -- Liouvillian and master equation ----------------------------------------


def _comm(a, b):
    return a @ b - b @ a


def _anti(a, b):
    return a @ b + b @ a


@dataclass(frozen=True)
class Liouvillian:
    """Coefficients frozen at one classical point."""

    H: np.ndarray
    L: np.ndarray  # (d, n, n)
    J: np.ndarray  # (l, n, n)
    rates: np.ndarray  # (l,)

    @classmethod
    def from_model(cls, model: HybridModel, x=None) -> "Liouvillian":
        """Freeze ``model`` at ``x``; without ``x`` the quantum part must not depend on x."""
        if x is None:
            if model.quantum_depends_on_x:
                raise ModelError(
                    f"model {model.name!r} has x-dependent quantum coefficients; the mean-state equation is not closed"
                )
            x = np.zeros(model.s)
        co = eval_coefficients(model, np.asarray(x, dtype=float).reshape(model.s))
        return cls(co.H, co.L, co.J, np.asarray(model.rates, dtype=float))

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def apply(self, rho):
        """Pre-adjoint (Schroedinger picture) action, batched over leading axes."""
        out = -1j * _comm(self.H, rho)
        for Lk in self.L:
            LdL = dagger(Lk) @ Lk
            out = out + Lk @ rho @ dagger(Lk) - 0.5 * _anti(LdL, rho)
        for lam, Jk in zip(self.rates, self.J):
            JdJ = dagger(Jk) @ Jk
            out = out + lam * (Jk @ rho @ dagger(Jk) - 0.5 * _anti(JdJ, rho))
        return out

    def adjoint(self, a, include_jump_sandwich: bool = True):
        """Heisenberg-picture action on an observable.

        Without the jump sandwich this is the operator part that stays at the
        same classical point when the jump also moves x.
        """
        out = 1j * _comm(self.H, a)
        for Lk in self.L:
            LdL = dagger(Lk) @ Lk
            out = out + dagger(Lk) @ a @ Lk - 0.5 * _anti(LdL, a)
        for lam, Jk in zip(self.rates, self.J):
            JdJ = dagger(Jk) @ Jk
            out = out - 0.5 * lam * _anti(JdJ, a)
            if include_jump_sandwich:
                out = out + lam * dagger(Jk) @ a @ Jk
        return out

    def superoperator(self) -> np.ndarray:
        n = self.n
        eye = np.eye(n)
        S = -1j * (np.kron(self.H, eye) - np.kron(eye, self.H.T))
        for Lk in self.L:
            LdL = dagger(Lk) @ Lk
            S = S + np.kron(Lk, Lk.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
        for lam, Jk in zip(self.rates, self.J):
            JdJ = dagger(Jk) @ Jk
            S = S + lam * (np.kron(Jk, Jk.conj()) - 0.5 * (np.kron(JdJ, eye) + np.kron(eye, JdJ.T)))
        return S

    def trace_defect(self, rho) -> float:
        return float(abs(np.trace(self.apply(rho))))

    def norm_estimate(self, iters: int = 100, seed: int = 0) -> float:
        """Operator 2-norm of the superoperator by power iteration on S^dag S."""
        S = self.superoperator()
        rng = np.random.default_rng(seed)
        v = rng.normal(size=S.shape[0]) + 1j * rng.normal(size=S.shape[0])
        est = 0.0
        for _ in range(iters):
            w = S.conj().T @ (S @ v)
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            est = np.sqrt(nw / np.linalg.norm(v))
            v = w / nw
        return float(est)


def _rk4_propagator(S, h):
    hS = h * S
    P = np.eye(len(S), dtype=complex)
    term = np.eye(len(S), dtype=complex)
    for k in range(1, 5):
        term = term @ hS / k
        P = P + term
    return P


def lindblad_trajectory(liou: Liouvillian, rho0, times, h_max: float = 1e-2):
    """RK4 solution of d rho/dt = L_*[rho] at each of the increasing ``times`` (starting at 0)."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    rho0 = np.asarray(rho0, dtype=complex)
    n = liou.n
    S = liou.superoperator()
    norm = liou.norm_estimate()
    h_target = h_max if norm == 0 else min(h_max, 0.01 / norm)
    out = np.empty((len(times), n, n), dtype=complex)
    v = rho0.reshape(-1).copy()
    t_prev = 0.0
    tr0 = np.trace(rho0).real
    for i, t in enumerate(times):
        span = t - t_prev
        if span > 0:
            steps = int(np.ceil(span / h_target - 1e-12))
            P = _rk4_propagator(S, span / steps)
            for _ in range(steps):
                v = P @ v
        rho = hermitize(v.reshape(n, n))
        drift = abs(np.trace(rho).real - tr0)
        if not np.isfinite(drift) or drift > TRACE_DRIFT_TOL * max(1.0, abs(tr0)):
            raise NumericalError(f"trace drift {drift:.3e} at t={t}: step size unstable")
        lam_min = np.linalg.eigvalsh(rho)[0]
        if lam_min < -TOL_PSD * max(1.0, tr0):
            raise NumericalError(f"mean state lost positivity at t={t} (eigenvalue {lam_min:.3e})")
        out[i] = rho
        v = rho.reshape(-1).copy()
        t_prev = t
    return out


def lindblad_solve(liou: Liouvillian, rho0, T: float, h_max: float = 1e-2) -> np.ndarray:
    if T < 0:
        raise ValueError("T must be non-negative")
    return lindblad_trajectory(liou, rho0, [T], h_max)[0]


# -- test functions and generators ------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """``a (x) f`` with f, its gradient and Hessian vectorised over leading axes of x."""

    __test__ = False  # not a pytest class

    name: str
    f: Callable
    grad: Callable
    hess: Callable
    a: np.ndarray | None = None
    bounded: bool = True

    def with_operator(self, a) -> "TestFunction":
        return TestFunction(self.name, self.f, self.grad, self.hess, np.asarray(a, dtype=complex), self.bounded)

    def operator(self, n: int) -> np.ndarray:
        return np.eye(n, dtype=complex) if self.a is None else self.a


def _zeros_like_x(x, tail=()):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1] + tail, dtype=complex)


def constant(value: complex = 1.0, a=None) -> TestFunction:
    return TestFunction(
        "constant",
        lambda x: _zeros_like_x(x) + value,
        lambda x: _zeros_like_x(x, (np.shape(x)[-1],)),
        lambda x: _zeros_like_x(x, (np.shape(x)[-1],) * 2),
        a,
    )


def plane_wave(k, a=None) -> TestFunction:
    """f(x) = exp(i k.x)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))

    def f(x):
        return np.exp(1j * np.asarray(x) @ k)

    return TestFunction(
        "plane_wave", f,
        lambda x: 1j * f(x)[..., None] * k,
        lambda x: -f(x)[..., None, None] * np.outer(k, k),
        a,
    )


def cosine(k, a=None) -> TestFunction:
    """f(x) = cos(k.x)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return TestFunction(
        "cosine",
        lambda x: np.cos(np.asarray(x) @ k) + 0j,
        lambda x: -np.sin(np.asarray(x) @ k)[..., None] * k + 0j,
        lambda x: -np.cos(np.asarray(x) @ k)[..., None, None] * np.outer(k, k) + 0j,
        a,
    )


def gaussian(centre, width: float = 1.0, a=None) -> TestFunction:
    """f(x) = exp(-|x - centre|^2 / (2 width^2))."""
    c = np.atleast_1d(np.asarray(centre, dtype=float))
    w2 = float(width) ** 2

    def f(x):
        r = np.asarray(x) - c
        return np.exp(-0.5 * np.sum(r**2, axis=-1) / w2) + 0j

    def grad(x):
        return -(np.asarray(x) - c) / w2 * f(x)[..., None]

    def hess(x):
        r = np.asarray(x) - c
        outer = r[..., :, None] * r[..., None, :] / w2**2
        return (outer - np.eye(len(c)) / w2) * f(x)[..., None, None]

    return TestFunction("gaussian", f, grad, hess, a)


def quadratic(Q, a=None) -> TestFunction:
    """f(x) = x^T Q x (unbounded, accepted by the generators only)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    S = Q + Q.T
    return TestFunction(
        "quadratic",
        lambda x: np.einsum("...i,ij,...j->...", x, Q, x) + 0j,
        lambda x: np.asarray(x) @ S.T + 0j,
        lambda x: np.broadcast_to(S, np.shape(x)[:-1] + S.shape) + 0j,
        a,
        bounded=False,
    )


def classical_generator(model: HybridModel, F: TestFunction, x) -> np.ndarray:
    """grad f . c + (1/2) Hess f : a a^T + sum_k lambda_k (f(x + g_k) - f(x) - [comp] grad f . g_k)."""
    x = np.asarray(x, dtype=float)
    co = eval_coefficients(model, x)
    grad, hess = F.grad(x), F.hess(x)
    out = np.einsum("...i,...i->...", grad, co.c)
    out = out + 0.5 * np.einsum("...ij,...ik,...jk->...", hess, co.a, co.a)
    fx = F.f(x)
    for k in range(model.l):
        g = co.g[..., k, :]
        jump = F.f(x + g) - fx
        if model.compensated[k]:
            jump = jump - np.einsum("...i,...i->...", grad, g)
        out = out + model.rates[k] * jump
    return out


def hybrid_generator(model: HybridModel, F: TestFunction, rho, x) -> complex:
    """<rho, K[a (x) f](x)> for the finite jump set."""
    rho = np.asarray(rho, dtype=complex)
    x = np.asarray(x, dtype=float).reshape(model.s)
    if rho.shape != (model.n, model.n):
        raise ValueError(f"rho has shape {rho.shape}, model needs {(model.n, model.n)}")
    a = F.operator(model.n)
    if a.shape != rho.shape:
        raise ValueError(f"operator has shape {a.shape}, model needs {rho.shape}")
    co = eval_coefficients(model, x)
    liou = Liouvillian(co.H, co.L, co.J, model.rates)
    fx, grad, hess = F.f(x), F.grad(x), F.hess(x)
    ra = expect(rho, a)

    val = fx * expect(rho, liou.adjoint(a, include_jump_sandwich=False))
    val += ra * (grad @ co.c + 0.5 * np.einsum("ij,ik,jk->", hess, co.a, co.a))
    for k in range(model.d):
        Lk = co.L[k]
        val += (grad @ co.a[:, k]) * expect(rho, a @ Lk + dagger(Lk) @ a)
    for k in range(model.l):
        Jk, g = co.J[k], co.g[k]
        val += model.rates[k] * F.f(x + g) * expect(rho, dagger(Jk) @ a @ Jk)
        if model.compensated[k]:
            val -= model.rates[k] * ra * (grad @ g)
    return complex(val)


# -- reports -----------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


@dataclass
class CheckReport:
    """Outcome of a statistical check; ``tolerance`` is the bound the deviation is held to."""

    name: str
    estimate: object
    stderr: object
    tolerance: object
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable({"name": self.name, "estimate": self.estimate, "stderr": self.stderr,
                          "pass": bool(self.passed), "tolerance": self.tolerance, **self.details})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# -- Monte Carlo instruments -------------------------------------------------


def _default_dt(model, t, dt):
    if dt is not None:
        return dt
    cap = 1e-3 if model.max_rate == 0 else min(1e-3, 0.1 / model.max_rate)
    return cap


def _endpoint(model, x, sigma, t, dt, N, seed, **kw):
    """Q-mode run recording only the final grid point."""
    n_steps = int(round(t / dt))
    return simulate_ensemble(model, x, sigma, t, dt, Mode.Q, N, seed, grid=[n_steps], psd_check_every=0, **kw)


def _bin_values(ens, bins, a):
    """(N, n_bins + 1) values tr(sigma a) 1_E(X) at the final record."""
    vals = expect(ens.sigma[:, -1], a).real
    idx = bins.index(ens.x[:, -1])
    out = np.zeros((ens.n_traj, bins.n_bins + 1))
    out[np.arange(ens.n_traj), idx] = vals
    return out, idx


@dataclass
class InstrumentEstimate:
    """Per-bin estimates of tr(rho I_t(E|x)[a]); the last entry is the overflow bin."""

    bins: BinSpec
    values: np.ndarray
    stderr: np.ndarray
    overflow_mass: float
    total: float
    total_stderr: float
    n: int


class InstrumentError(ValueError):
    pass


def pilot_bins(model, x, t, rho, dt=None, n_bins=32, N=2000, seed=0) -> BinSpec:
    """Uniform bins over the range of a pilot run widened by 10%."""
    dt = _default_dt(model, t, dt)
    ens = _endpoint(model, np.asarray(x, dtype=float), rho, t, dt, N, derived_seed(seed, 7))
    return BinSpec.from_sample(ens.x[:, -1], n_bins=n_bins, pad=0.1)


def estimate_instrument(model: HybridModel, x, t: float, rho, a=None, bins: BinSpec | None = None,
                        N: int = 10_000, seed: int = 0, dt: float | None = None,
                        max_overflow: float = 0.01, workers: int = 1) -> InstrumentEstimate:
    """E_Q[tr(sigma_t a) 1_E(X_t)] for every bin E, starting from (x, rho)."""
    dt = _default_dt(model, t, dt)
    x = np.asarray(x, dtype=float).reshape(model.s)
    a = np.eye(model.n, dtype=complex) if a is None else np.asarray(a, dtype=complex)
    if bins is None:
        bins = pilot_bins(model, x, t, rho, dt, seed=seed)
    ens = _endpoint(model, x, rho, t, dt, N, seed, workers=workers)
    vals, idx = _bin_values(ens, bins, a)
    p = np.trace(ens.sigma[:, -1], axis1=-2, axis2=-1).real
    overflow = float(np.mean(p * (idx == bins.n_bins)))
    if overflow > max_overflow:
        raise InstrumentError(f"overflow bin holds {overflow:.3%} of the mass; widen the bin box")
    total = vals.sum(axis=1)
    return InstrumentEstimate(
        bins=bins, values=vals.mean(axis=0), stderr=batch_stderr(vals, ens.traj_indices),
        overflow_mass=overflow, total=float(total.mean()),
        total_stderr=float(batch_stderr(total, ens.traj_indices)), n=N,
    )


def normalization_check(model, x, t, rho, bins=None, N=10_000, seed=0, dt=None) -> CheckReport:
    """With a = 1 the instrument over all bins plus overflow sums to 1."""
    est = estimate_instrument(model, x, t, rho, None, bins, N, seed, dt)
    dev = abs(est.total - 1.0)
    return CheckReport("instrument_normalization", est.total, est.total_stderr, 3 * est.total_stderr,
                       bool(dev <= 3 * est.total_stderr + 1e-12), {"overflow_mass": est.overflow_mass})


def _representatives(x, w, bins):
    """Weighted mean of x within each bin; points outside the bins represent themselves."""
    idx = bins.index(x)
    reps = x.copy()
    inside = idx < bins.n_bins
    for b in np.unique(idx[inside]):
        sel = idx == b
        ws = w[sel]
        reps[sel] = (ws @ x[sel]) / ws.sum() if ws.sum() > 0 else x[sel].mean(axis=0)
    return reps


def _composition_values(model, stage1, t, dt, mid_bins, bins, a, seed):
    x1 = stage1.x[:, -1]
    s1 = stage1.sigma[:, -1]
    w1 = np.trace(s1, axis1=-2, axis2=-1).real
    reps = _representatives(x1, w1, mid_bins)
    ens = _endpoint(model, reps, s1, t, dt, stage1.n_traj, seed, first_index=int(stage1.traj_indices[0]))
    vals, _ = _bin_values(ens, bins, a)
    return vals, ens.traj_indices


def chapman_kolmogorov_check(model: HybridModel, x, t: float, t2: float, rho, a=None,
                             bins: BinSpec | None = None, mid_bins: BinSpec | None = None,
                             N: int = 10_000, seed: int = 0, dt: float | None = None,
                             oracle: Callable | None = None) -> CheckReport:
    """Direct I_{t+t2}(E|x) against sum_z I_{t2}(B_z|x) o I_t(E|z) for every bin E.

    The composition continues each stage-one sample from the representative
    point of its intermediate bin B_z; the discretisation bound is the change
    of the composition when every intermediate bin is halved (common random
    numbers). ``oracle(bins)`` may supply exact per-bin values for comparison.
    """
    dt = _default_dt(model, t + t2, dt)
    x = np.asarray(x, dtype=float).reshape(model.s)
    a = np.eye(model.n, dtype=complex) if a is None else np.asarray(a, dtype=complex)
    if bins is None:
        bins = pilot_bins(model, x, t + t2, rho, dt, seed=seed)
    direct = _endpoint(model, x, rho, t + t2, dt, N, derived_seed(seed, 1))
    d_vals, _ = _bin_values(direct, bins, a)
    d_est, d_se = d_vals.mean(axis=0), batch_stderr(d_vals, direct.traj_indices)

    stage1 = _endpoint(model, x, rho, t2, dt, N, derived_seed(seed, 2))
    if mid_bins is None:
        mid_bins = BinSpec.from_sample(stage1.x[:, -1], n_bins=32, pad=0.1)
    s2 = derived_seed(seed, 3)
    c_vals, c_idx = _composition_values(model, stage1, t, dt, mid_bins, bins, a, s2)
    c_fine, _ = _composition_values(model, stage1, t, dt, mid_bins.split(), bins, a, s2)
    c_est, c_se = c_vals.mean(axis=0), batch_stderr(c_vals, c_idx)
    bound = np.abs(c_est - c_fine.mean(axis=0))
    se = np.sqrt(d_se**2 + c_se**2)
    dev = np.abs(d_est - c_est)
    tol = 3 * se + bound
    ok = dev <= tol + 1e-12
    details = {"direct": d_est, "composition": c_est, "discretization_bound": bound,
               "max_deviation_sigma": float(np.max(joint_sigma(d_est, d_se, c_est, c_se)))}
    passed = bool(ok.all())
    if oracle is not None:
        exact = np.asarray(oracle(bins), dtype=float)
        o_ok = (np.abs(d_est - exact) <= 3 * d_se + 1e-12) & (np.abs(c_est - exact) <= 3 * c_se + bound + 1e-12)
        details["oracle"] = exact
        details["oracle_pass"] = bool(o_ok.all())
        passed = passed and bool(o_ok.all())
    return CheckReport("chapman_kolmogorov", c_est, se, tol, passed, details)


# -- characteristic operators ------------------------------------------------


def characteristic_operator(model: HybridModel, x, t: float, rho, a=None, k=0.0, N: int = 10_000,
                            seed: int = 0, dt: float | None = None):
    """E_Q[tr(sigma_t a) exp(i k.X_t)] and its complex standard error (Re + i Im)."""
    dt = _default_dt(model, t, dt)
    x = np.asarray(x, dtype=float).reshape(model.s)
    k = np.broadcast_to(np.asarray(k, dtype=float), (model.s,))
    a = np.eye(model.n, dtype=complex) if a is None else np.asarray(a, dtype=complex)
    ens = _endpoint(model, x, rho, t, dt, N, seed)
    vals = expect(ens.sigma[:, -1], a) * np.exp(1j * ens.x[:, -1] @ k)
    return complex(vals.mean()), complex(batch_stderr(vals, ens.traj_indices))


def _translation_invariant(model, n=16, seed=0):
    lo, hi = (np.asarray(b, dtype=float) for b in model.x_box)
    xs = lo + (hi - lo) * np.random.default_rng(seed).random((n, model.s))
    co = eval_coefficients(model, xs)
    return all(np.allclose(arr, arr[:1]) for arr in (co.c, co.a, co.g, co.H, co.L, co.J))


def characteristic_composition_check(model: HybridModel, t: float, t2: float, rho, a=None, k=1.0,
                                     N: int = 10_000, seed: int = 0, dt: float | None = None) -> CheckReport:
    """G_{t+t2}(k|0) against G_{t2}(k|0) o G_t(k|0) for a translation-invariant model."""
    if not _translation_invariant(model):
        raise ModelError(f"model {model.name!r} is not translation invariant in x")
    dt = _default_dt(model, t + t2, dt)
    a = np.eye(model.n, dtype=complex) if a is None else np.asarray(a, dtype=complex)
    kk = np.broadcast_to(np.asarray(k, dtype=float), (model.s,))
    origin = np.zeros(model.s)
    direct, d_se = characteristic_operator(model, origin, t + t2, rho, a, kk, N, derived_seed(seed, 1), dt)
    stage1 = _endpoint(model, origin, rho, t2, dt, N, derived_seed(seed, 2))
    stage2 = _endpoint(model, origin, stage1.sigma[:, -1], t, dt, N, derived_seed(seed, 3))
    vals = expect(stage2.sigma[:, -1], a) * np.exp(1j * (stage1.x[:, -1] + stage2.x[:, -1]) @ kk)
    comp, c_se = complex(vals.mean()), complex(batch_stderr(vals, stage2.traj_indices))
    se_re = np.hypot(d_se.real, c_se.real)
    se_im = np.hypot(d_se.imag, c_se.imag)
    ok = abs(direct.real - comp.real) <= 3 * se_re + 1e-12 and abs(direct.imag - comp.imag) <= 3 * se_im + 1e-12
    return CheckReport("characteristic_composition", comp, complex(se_re, se_im),
                       complex(3 * se_re, 3 * se_im), bool(ok), {"direct": direct})


# -- generator consistency ---------------------------------------------------


def generator_consistency_check(model: HybridModel, F: TestFunction, rho, x, dt_list=(1e-2, 1e-3),
                                N: int = 200_000, seed: int = 0) -> CheckReport:
    """Finite-dt derivative of E_Q[tr(sigma_dt a) f(X_dt)] against the hybrid generator.

    With dev(dt) = estimate - generator, a slope C is fitted to dev = C dt by
    weighted least squares (no intercept) on real and imaginary parts; the
    check passes when every residual is within 3 standard errors.
    """
    if not F.bounded:
        raise ValueError(f"test function {F.name!r} is not bounded; generator check needs C2_b functions")
    dts = np.asarray(sorted(dt_list, reverse=True), dtype=float)
    if len(dts) < 2 or len(set(dts)) != len(dts):
        raise ValueError("need at least two distinct step sizes")
    x = np.asarray(x, dtype=float).reshape(model.s)
    rho = np.asarray(rho, dtype=complex)
    a = F.operator(model.n)
    expected = hybrid_generator(model, F, rho, x)
    start = expect(rho, a) * F.f(x)
    est, se = [], []
    for j, h in enumerate(dts):
        ens = _endpoint(model, x, rho, h, h, N, derived_seed(seed, 10 + j))
        vals = (expect(ens.sigma[:, -1], a) * F.f(ens.x[:, -1]) - start) / h
        est.append(complex(vals.mean()))
        se.append(complex(batch_stderr(vals, ens.traj_indices)))
    est, se = np.array(est), np.array(se)
    dev = est - expected
    residuals, slopes, ok = [], [], True
    for part in (np.real, np.imag):
        y, s = part(dev), np.maximum(part(se), 1e-12)
        C = np.sum(y * dts / s**2) / np.sum(dts**2 / s**2)
        r = y - C * dts
        slopes.append(C)
        residuals.append(r)
        ok &= bool(np.all(np.abs(r) <= 3 * part(se) + 1e-12))
    return CheckReport(
        "generator_consistency", est, se, 3 * se, ok,
        {"generator": expected, "dt": dts, "slope": complex(*slopes),
         "residual": np.array(residuals[0]) + 1j * np.array(residuals[1]), "test_function": F.name},
    )


__all__ = [
    "CheckReport", "InstrumentError", "InstrumentEstimate", "Liouvillian", "TestFunction",
    "chapman_kolmogorov_check", "characteristic_composition_check", "characteristic_operator",
    "classical_generator", "constant", "cosine", "derived_seed", "estimate_instrument", "gaussian",
    "generator_consistency_check", "hybrid_generator", "lindblad_solve", "lindblad_trajectory",
    "normalization_check", "pilot_bins", "plane_wave", "quadratic",
]
