"""Time stepping of the coupled classical/quantum system.

Two equivalent modes:

* ``Q`` (reference probability): W and N_k are standard Wiener/Poisson noises,
  sigma is unnormalised and its trace p_t is the density of the physical law.
* ``P`` (physical probability): sigma is normalised; jump type k fires with
  intensity ``lambda_k <sigma, J_k^dag J_k>`` and the Wiener increments entering
  the dynamics are ``dW = dW_hat + m_k dt`` with ``m_k = 2 Re <sigma, L_k>``.

Both modes share one update (Euler-Maruyama in factorised form)::

    M     = expm(-G(x) dt) + sum_k L_k(x) dW_k
    sigma <- M sigma M^dag                     (then J_k sigma J_k^dag on a jump)
    x     <- x + c dt + a dW + sum_k g_k (dN_k - [k compensated] lambda_k dt)

with ``G = K - (1/2) sum_k lambda_k`` and all coefficients frozen at x(t-).
The factorised form keeps sigma positive and rank-1 states rank-1.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import expm

from .models import HybridModel, eval_coefficients
from .rng import JUMPS, WIENER, CounterRNG
from .states import EPS_P, TOL_PSD, StateError, check_state, dagger, expect, hermitize

EPS_I = 1e-12
MAX_RATE_DT = 0.1


class Mode(str, Enum):
    Q = "Q"
    P = "P"


class NumericalError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


def expm_batch(A):
    """Matrix exponential over leading axes by scaling and squaring a Taylor series.

    Matrices are scaled to 1-norm theta <= 1/4 and the series is cut at the
    first order m with theta**(m+1) / (m+1)! below 2**-56 (m <= 12).
    """
    A = np.asarray(A, dtype=complex)
    norm = float(np.abs(A).sum(axis=-2).max(initial=0.0))
    s = int(max(0, np.ceil(np.log2(max(norm, 1e-300) / 0.25))))
    X = A / 2.0**s
    theta = norm / 2.0**s
    order, bound = 1, theta * theta / 2
    while order < 12 and bound > 2.0**-56:
        order += 1
        bound *= theta / (order + 1)
    out = np.broadcast_to(np.eye(A.shape[-1], dtype=complex), A.shape).copy()
    term = out.copy()
    for k in range(1, order + 1):
        term = term @ X / k
        out += term
    for _ in range(s):
        out = out @ out
    return out


class _QuantumCache:
    """Quantum coefficients per trajectory, reusing expm across equal x.

    For x-independent quantum coefficients the update sigma -> M sigma M^dag is
    precomputed as superoperators acting on row-major vec(sigma).
    """

    def __init__(self, model: HybridModel, dt: float):
        self.model = model
        self.dt = dt
        self.const = not model.quantum_depends_on_x
        if self.const:
            E, L, J, JdJ = self._evaluate(np.zeros((1, model.s)))
            self.J = J
            self._build_superop(E[0], L[0], JdJ[0])

    def _evaluate(self, x):
        model = self.model
        co = eval_coefficients(model, x)
        G = co.K - 0.5 * model.rates.sum() * np.eye(model.n)
        E = expm_batch(-G * self.dt)
        JdJ = dagger(co.J) @ co.J
        return E, co.L, co.J, JdJ

    def _build_superop(self, E, L, JdJ):
        n, d = self.model.n, self.model.d
        Ec = E.conj()
        # vec(A s B) = (A kron B^T) vec(s); right-multiplied, hence the transposes
        self.S0 = np.kron(E, Ec).T
        self.S1 = np.concatenate([(np.kron(Lk, Ec) + np.kron(E, Lk.conj())).T for Lk in L], axis=1) \
            if d else None
        self.S2 = np.concatenate([np.kron(L[k], L[j].conj()).T for k in range(d) for j in range(d)], axis=1) \
            if d else None
        # tr(s A) = vec(s) . vec(A^T)
        self.obs_L = np.stack([Lk.T.reshape(-1) for Lk in L], axis=1) if d else np.zeros((n * n, 0))
        self.obs_JdJ = np.stack([A.T.reshape(-1) for A in JdJ], axis=1) if len(JdJ) else np.zeros((n * n, 0))
        self.diag = np.arange(n) * (n + 1)

    def __call__(self, x):
        if x.shape[1] == 1:
            uniq, inv = np.unique(x[:, 0], return_inverse=True)
            uniq = uniq[:, None]
        else:
            uniq, inv = np.unique(x, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        if len(uniq) <= max(8, len(x) // 4):
            return tuple(arr[inv] for arr in self._evaluate(uniq))
        return self._evaluate(x)


def _classical(model, x):
    B = len(x)
    c = np.asarray(model.drift(x), dtype=float).reshape(B, model.s)
    a = np.asarray(model.diffusion(x), dtype=float).reshape(B, model.s, model.d)
    g = np.asarray(model.jump_displacement(x), dtype=float).reshape(B, model.l, model.s)
    return c, a, g


@dataclass
class _StepStats:
    disabled_channel_steps: int = 0


def _draw(model, mode, rng, traj, step, dt, m, intensity, stats):
    dW_hat = math.sqrt(dt) * rng.normals(traj, step, WIENER, model.d)
    u = rng.uniforms(traj, step, JUMPS, model.l)
    if mode is Mode.Q:
        return dW_hat, dW_hat, u < model.rates * dt
    dW = dW_hat + m * dt if model.d else dW_hat
    disabled = intensity <= EPS_I
    stats.disabled_channel_steps += int(disabled.sum())
    jumps = (u < model.rates * intensity * dt) & ~disabled
    return dW_hat, dW, jumps


def _evolve_const(model, cache, mode, sigma, dt, rng, traj, step, stats):
    B, n = len(sigma), model.n
    v = sigma.reshape(B, n * n)
    m = intensity = None
    if mode is Mode.P:
        m = 2.0 * (v @ cache.obs_L).real
        intensity = (v @ cache.obs_JdJ).real
    dW_hat, dW, jumps = _draw(model, mode, rng, traj, step, dt, m, intensity, stats)
    out = v @ cache.S0
    if model.d:
        n2 = n * n
        out += np.einsum("bk,bki->bi", dW, (v @ cache.S1).reshape(B, model.d, n2))
        ww = (dW[:, :, None] * dW[:, None, :]).reshape(B, -1)
        out += np.einsum("bk,bki->bi", ww, (v @ cache.S2).reshape(B, model.d ** 2, n2))
    if mode is Mode.P:
        tr = out[:, cache.diag].sum(axis=1).real
        if np.any(tr <= EPS_P):
            raise NumericalError("physical-mode state lost its trace", step)
        out /= tr[:, None]
    return out.reshape(B, n, n), dW_hat, dW, jumps


def _evolve_general(model, cache, mode, sigma, x, dt, rng, traj, step, stats):
    B = len(sigma)
    E, L, J, JdJ = cache(x)
    m = intensity = None
    if mode is Mode.P:
        m = 2.0 * expect(sigma[:, None], L).real if model.d else None
        intensity = expect(sigma[:, None], JdJ).real
    dW_hat, dW, jumps = _draw(model, mode, rng, traj, step, dt, m, intensity, stats)
    M = E + np.sum(dW[:, :, None, None] * L, axis=1) if model.d else E
    sigma = M @ sigma @ dagger(M)
    if mode is Mode.P:
        tr = np.trace(sigma, axis1=-2, axis2=-1).real
        if np.any(tr <= EPS_P):
            raise NumericalError("physical-mode state lost its trace", step)
        sigma = sigma / tr[:, None, None]
    return sigma, dW_hat, dW, jumps, J


def _step_batch(model, cache, mode, x, sigma, dt, rng, traj, step, stats, check=True):
    """Advance a batch by one grid step; returns (x, sigma, jumps, dW_hat).

    With ``check`` the state is re-Hermitised and tested for positivity.
    """
    c, a, g = _classical(model, x)
    if cache.const:
        sigma, dW_hat, dW, jumps = _evolve_const(model, cache, mode, sigma, dt, rng, traj, step, stats)
        J = cache.J
    else:
        sigma, dW_hat, dW, jumps, J = _evolve_general(model, cache, mode, sigma, x, dt, rng, traj, step, stats)

    for k in np.flatnonzero(jumps.any(axis=0)):
        mask = jumps[:, k]
        Jk = J[:, k] if J.shape[0] == 1 else J[mask, k]
        new = Jk @ sigma[mask] @ dagger(Jk)
        if mode is Mode.P:
            tr = np.trace(new, axis1=-2, axis2=-1).real
            if np.any(tr <= EPS_I):
                raise NumericalError(f"jump of type {k} with vanishing intensity", step)
            new = new / tr[:, None, None]
        sigma[mask] = hermitize(new)

    if check:
        sigma = hermitize(sigma)
        if not np.all(np.isfinite(sigma)):
            raise NumericalError("non-finite quantum state", step)
        evals = np.linalg.eigvalsh(sigma)
        tr = evals.sum(axis=-1)
        if np.any(evals[:, 0] < -TOL_PSD * np.maximum(tr, 1.0)):
            raise NumericalError(f"positivity violated (min eigenvalue {evals[:, 0].min():.3e})", step)

    dx = c * dt
    if model.d:
        dx = dx + np.einsum("bij,bj->bi", a, dW)
    if model.l:
        dN = jumps.astype(float)
        comp = np.asarray(model.compensated, dtype=float) * model.rates * dt
        dx = dx + np.einsum("bk,bki->bi", dN - comp, g)
    x = x + dx
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite classical point", step)
    return x, sigma, jumps, dW_hat


# -- single-state API --------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryState:
    """State of one trajectory at grid index ``step``.

    In Q-mode ``sigma`` is unnormalised and carries the weight ``p = tr sigma``;
    in P-mode it has unit trace. ``seed``/``traj_index`` identify the noise stream.
    """

    model: HybridModel
    mode: Mode
    t: float
    x: np.ndarray
    sigma: np.ndarray
    seed: int
    traj_index: int
    step: int = 0

    @property
    def p(self) -> float:
        return float(np.trace(self.sigma).real)

    @property
    def sigma_hat(self) -> np.ndarray:
        p = self.p
        if p <= EPS_P:
            return np.eye(self.model.n, dtype=complex) / self.model.n
        return self.sigma / p

    @property
    def m(self) -> np.ndarray:
        """m_k = 2 Re <sigma_hat, L_k> for each Wiener channel."""
        co = eval_coefficients(self.model, self.x)
        return 2.0 * expect(self.sigma_hat[None], co.L).real

    @property
    def intensities(self) -> np.ndarray:
        """I_k = <sigma_hat, J_k^dag J_k> for each jump type."""
        co = eval_coefficients(self.model, self.x)
        return expect(self.sigma_hat[None], dagger(co.J) @ co.J).real


def initial_state(model, x, sigma, mode=Mode.Q, seed=0, traj_index=0) -> TrajectoryState:
    mode = Mode(mode)
    x = np.asarray(x, dtype=float).reshape(model.s)
    sigma = np.asarray(sigma, dtype=complex)
    check_state(sigma, normalized=False)
    if mode is Mode.P:
        sigma = sigma / np.trace(sigma).real
    return TrajectoryState(model, mode, 0.0, x, sigma, int(seed), int(traj_index))


def _check_dt(model, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if model.max_rate * dt > MAX_RATE_DT * (1 + 1e-12):
        raise ValueError(f"dt * max(lambda) = {model.max_rate * dt:.3g} exceeds {MAX_RATE_DT}")


def _advance(state: TrajectoryState, dt: float, mode: Mode) -> TrajectoryState:
    if state.mode is not mode:
        raise ValueError(f"state is in {state.mode.value}-mode")
    _check_dt(state.model, dt)
    cache = _QuantumCache(state.model, dt)
    x, sigma, _, _ = _step_batch(
        state.model, cache, mode, state.x[None], state.sigma[None].copy(), dt,
        CounterRNG(state.seed), np.array([state.traj_index]), state.step, _StepStats(),
    )
    return replace(state, t=state.t + dt, x=x[0], sigma=sigma[0], step=state.step + 1)


def step_q(state: TrajectoryState, dt: float) -> TrajectoryState:
    """One step of the linear SME + classical SDE under the reference probability."""
    return _advance(state, dt, Mode.Q)


def step_p(state: TrajectoryState, dt: float) -> TrajectoryState:
    """One step of the nonlinear SME + classical SDE under the physical probability."""
    return _advance(state, dt, Mode.P)


# -- ensembles ---------------------------------------------------------------


@dataclass
class Ensemble:
    """Records of many trajectories on a shared time grid.

    ``events`` rows are ``(trajectory position, grid index, jump type)``; the
    grid index is the first grid point after the jump.
    """

    model: str
    mode: Mode
    dt: float
    n_steps: int
    grid: np.ndarray  # (R,) recorded grid indices
    traj_indices: np.ndarray  # (N,)
    x: np.ndarray  # (N, R, s)
    weight: np.ndarray  # (N, R)
    counts: np.ndarray  # (N, R, l)
    sigma: np.ndarray | None  # (N, R, n, n)
    events: np.ndarray  # (E, 3)
    disabled_channel_steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid * self.dt

    @property
    def n_traj(self) -> int:
        return len(self.traj_indices)

    def index_of(self, t: float) -> int:
        r = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[r] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a recorded grid point")
        return r

    def sigma_hat(self, r: int) -> np.ndarray:
        """Normalised states at record ``r`` (maximally mixed where p = 0)."""
        sig = self.sigma[:, r]
        if self.mode is Mode.P:
            return sig
        p = np.trace(sig, axis1=-2, axis2=-1).real
        n = sig.shape[-1]
        out = np.broadcast_to(np.eye(n, dtype=complex) / n, sig.shape).copy()
        ok = p > EPS_P
        out[ok] = sig[ok] / p[ok, None, None]
        return out

    def events_of(self, pos: int) -> np.ndarray:
        return self.events[self.events[:, 0] == pos, 1:]

    def head(self, k: int) -> "Ensemble":
        """The first ``k`` trajectories."""
        keep = self.events[:, 0] < k
        return replace(
            self, traj_indices=self.traj_indices[:k], x=self.x[:k], weight=self.weight[:k],
            counts=self.counts[:k], sigma=None if self.sigma is None else self.sigma[:k],
            events=self.events[keep],
        )

    @staticmethod
    def concat(parts: list["Ensemble"]) -> "Ensemble":
        first = parts[0]
        offsets = np.cumsum([0] + [p.n_traj for p in parts[:-1]])
        events = [p.events + np.array([off, 0, 0]) for p, off in zip(parts, offsets)]
        return replace(
            first,
            traj_indices=np.concatenate([p.traj_indices for p in parts]),
            x=np.concatenate([p.x for p in parts]),
            weight=np.concatenate([p.weight for p in parts]),
            counts=np.concatenate([p.counts for p in parts]),
            sigma=None if first.sigma is None else np.concatenate([p.sigma for p in parts]),
            events=np.concatenate(events) if events else first.events,
            disabled_channel_steps=sum(p.disabled_channel_steps for p in parts),
        )


def _grid_steps(T, dt):
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return n


def record_grid(n_steps: int, every: int | None = None, n_records: int | None = None) -> np.ndarray:
    """Grid indices 0, every, 2*every, ..., always including the final index."""
    if n_records is not None:
        return np.unique(np.round(np.linspace(0, n_steps, n_records)).astype(int))
    every = 1 if every is None else int(every)
    return np.unique(np.append(np.arange(0, n_steps + 1, every), n_steps))


def _simulate_chunk(model, x0, sigma0, n_steps, dt, mode, seed, traj, grid, record_states,
                    monitor=None, psd_check_every=1):
    mode = Mode(mode)
    B = len(traj)
    R = len(grid)
    rng = CounterRNG(seed)
    cache = _QuantumCache(model, dt)
    stats = _StepStats()
    x = np.array(np.broadcast_to(x0, (B, model.s)), dtype=float)
    sigma = np.array(np.broadcast_to(sigma0, (B, model.n, model.n)), dtype=complex)
    if mode is Mode.P:
        tr = np.trace(sigma, axis1=-2, axis2=-1).real
        if np.any(tr <= EPS_P):
            raise StateError("physical-mode initial state needs positive trace")
        sigma = sigma / tr[:, None, None]
    counts = np.zeros((B, model.l), dtype=np.int64)
    xs = np.empty((B, R, model.s))
    ws = np.empty((B, R))
    cs = np.empty((B, R, model.l), dtype=np.int64)
    ss = np.empty((B, R, model.n, model.n), dtype=complex) if record_states else None
    events = []
    slot = {int(gi): r for r, gi in enumerate(grid)}

    def record(gi):
        r = slot.get(gi)
        if r is None:
            return
        xs[:, r] = x
        ws[:, r] = np.trace(sigma, axis1=-2, axis2=-1).real if mode is Mode.Q else 1.0
        cs[:, r] = counts
        if record_states:
            ss[:, r] = sigma

    record(0)
    if monitor is not None:
        monitor(0, 0.0, x, sigma, None, traj)
    for step in range(n_steps):
        check = psd_check_every > 0 and ((step + 1) % psd_check_every == 0 or step + 1 == n_steps)
        x, sigma, jumps, _ = _step_batch(model, cache, mode, x, sigma, dt, rng, traj, step, stats, check)
        if model.l and jumps.any():
            counts += jumps
            pos, k = np.nonzero(jumps)
            events.append(np.column_stack([pos, np.full_like(pos, step + 1), k]))
        record(step + 1)
        if monitor is not None:
            monitor(step + 1, (step + 1) * dt, x, sigma, jumps, traj)
    ev = np.concatenate(events) if events else np.zeros((0, 3), dtype=np.int64)
    ev = ev[np.lexsort((ev[:, 2], ev[:, 1], ev[:, 0]))]  # canonical order: trajectory, step, type
    return Ensemble(model.name, mode, dt, n_steps, np.asarray(grid), np.asarray(traj), xs, ws, cs, ss,
                    ev.astype(np.int64), stats.disabled_channel_steps)


def _chunk_task(args):
    return _simulate_chunk(*args)


def simulate_ensemble(model: HybridModel, x0, sigma0, T: float, dt: float, mode, n_traj: int,
                      seed: int, first_index: int = 0, record_every: int | None = None,
                      grid=None, record_states: bool = True, workers: int = 1,
                      chunk_size: int = 2048, monitor=None, psd_check_every: int = 1) -> Ensemble:
    """Simulate trajectories ``first_index ... first_index + n_traj - 1``.

    ``x0``/``sigma0`` are either shared initial conditions or per-trajectory
    arrays with a leading axis of length ``n_traj``. Chunks are a fixed
    partition of the trajectory indices and every draw is keyed by
    ``(seed, trajectory index, step)``, so results do not depend on ``workers``.
    ``monitor(grid_index, t, x, sigma, jumps, traj)`` is called after every
    step (single worker only).
    """
    mode = Mode(mode)
    _check_dt(model, dt)
    n_steps = _grid_steps(T, dt)
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    x0 = np.asarray(x0, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=complex)
    per_traj_x = x0.ndim == 2
    per_traj_sigma = sigma0.ndim == 3
    if not per_traj_sigma:
        check_state(sigma0, normalized=False)
    grid = record_grid(n_steps, record_every) if grid is None else np.asarray(grid, dtype=int)
    traj = np.arange(first_index, first_index + n_traj, dtype=np.int64)
    tasks = []
    for lo in range(0, n_traj, chunk_size):
        hi = min(lo + chunk_size, n_traj)
        tasks.append((model, x0[lo:hi] if per_traj_x else x0, sigma0[lo:hi] if per_traj_sigma else sigma0,
                      n_steps, dt, mode.value, seed, traj[lo:hi], grid, record_states))
    if workers > 1 and len(tasks) > 1:
        if monitor is not None:
            raise ValueError("monitor callbacks need workers=1")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_task, [t + (None, psd_check_every) for t in tasks]))
    else:
        parts = [_simulate_chunk(*t, monitor=monitor, psd_check_every=psd_check_every) for t in tasks]
    return parts[0] if len(parts) == 1 else Ensemble.concat(parts)


@dataclass
class TrajectoryPath:
    """One realisation sampled at every grid point."""

    mode: Mode
    times: np.ndarray
    x: np.ndarray  # (K+1, s)
    sigma: np.ndarray  # (K+1, n, n)
    weight: np.ndarray  # (K+1,)
    events: list = field(default_factory=list)  # [(time, type)]
    noise: np.ndarray | None = None  # (K, d) increments of W (Q) or W_hat (P)
    traj_index: int = 0


def simulate_trajectory(model: HybridModel, init_x, init_sigma, T: float, dt: float, mode,
                        seed: int, traj_index: int = 0, record_noise: bool = False) -> TrajectoryPath:
    """Deterministic function of ``(seed, traj_index, mode)`` and the inputs."""
    mode = Mode(mode)
    ens = simulate_ensemble(model, init_x, init_sigma, T, dt, mode, 1, seed, first_index=traj_index)
    events = [(int(gi) * dt, int(k)) for _, gi, k in ens.events]
    noise = None
    if record_noise:
        rng = CounterRNG(seed)
        noise = np.array([math.sqrt(dt) * rng.normals([traj_index], j, WIENER, model.d)[0]
                          for j in range(ens.n_steps)]).reshape(ens.n_steps, model.d)
    return TrajectoryPath(mode, ens.times, ens.x[0], ens.sigma[0], ens.weight[0], events, noise, traj_index)
