"""Ensemble statistics: mean states, conditional states, marginals, concurrence.

Q-mode estimators are plain means of weighted quantities divided by N, e.g. the
a priori state is ``sum_i sigma_i / N`` because the unnormalised sigma already
carries the weight p. P-mode estimators are plain means of normalised states.
Error bars use batch means; trajectory ``i`` belongs to batch ``i mod 32``, so
they too are independent of how the ensemble was chunked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .engine import Ensemble, Mode, TrajectoryPath
from .states import EPS_P, concurrence_pure, expect, hermitize, pure_vector, purity_gap, trace_distance

N_BATCHES = 32


class EstimationError(ValueError):
    pass


def _batch_ids(traj_indices, n_batches=N_BATCHES):
    return np.asarray(traj_indices, dtype=np.int64) % n_batches


def batch_sums(values, traj_indices, n_batches: int = N_BATCHES):
    """Per-batch sums of ``values`` (shape ``(N, ...)``) and per-batch counts."""
    values = np.asarray(values)
    ids = _batch_ids(traj_indices, n_batches)
    out = np.zeros((n_batches,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, ids, values)
    return out, np.bincount(ids, minlength=n_batches)


def _spread(batch_means, counts):
    """Standard error of the mean from batch means (count-weighted)."""
    ok = counts > 0
    nb = int(ok.sum())
    if nb < 2:
        return np.full(batch_means.shape[1:], np.nan)
    m = batch_means[ok]
    w = counts[ok] / counts[ok].sum()
    w = w.reshape((-1,) + (1,) * (m.ndim - 1))
    centre = np.sum(w * m, axis=0)
    var = np.sum(w * np.abs(m - centre) ** 2, axis=0) * nb / (nb - 1)
    return np.sqrt(var / nb)


def batch_stderr(values, traj_indices, n_batches: int = N_BATCHES):
    """Batch-means standard error of ``mean(values, axis=0)``.

    Complex inputs return ``stderr(Re) + 1j * stderr(Im)``.
    """
    values = np.asarray(values)
    sums, counts = batch_sums(values, traj_indices, n_batches)
    means = sums / np.maximum(counts, 1).reshape((-1,) + (1,) * (values.ndim - 1))
    if np.iscomplexobj(values):
        return _spread(means.real, counts) + 1j * _spread(means.imag, counts)
    return _spread(means, counts)


def ratio_stderr(num, den, traj_indices, n_batches: int = N_BATCHES):
    """Batch-means standard error of ``sum(num) / sum(den)``."""
    num = np.asarray(num)
    den = np.asarray(den, dtype=float)
    ns, counts = batch_sums(num, traj_indices, n_batches)
    ds, _ = batch_sums(den, traj_indices, n_batches)
    ok = (counts > 0) & (ds > 0)
    if ok.sum() < 2:
        return np.full(num.shape[1:], np.nan)
    shape = (-1,) + (1,) * (num.ndim - 1)
    ratios = ns[ok] / ds[ok].reshape(shape)
    return _spread(ratios.real, ds[ok]) + (1j * _spread(ratios.imag, ds[ok]) if np.iscomplexobj(num) else 0)


@dataclass
class ScalarEstimate:
    value: float
    stderr: float
    n: int

    def to_dict(self):
        return {"estimate": float(np.real(self.value)), "stderr": float(self.stderr), "n": self.n}


@dataclass
class StateEstimate:
    """Mean state with elementwise and trace-norm error bars."""

    state: np.ndarray
    stderr_entries: np.ndarray  # stderr(Re) + 1j stderr(Im), per entry
    stderr: float  # trace-norm scale of the fluctuation of the estimate
    trace: float
    trace_stderr: float
    n: int


def _state_stderr(samples, traj_indices):
    """RMS trace distance between batch means, scaled to a standard error."""
    sums, counts = batch_sums(samples, traj_indices)
    ok = counts > 0
    nb = int(ok.sum())
    if nb < 2:
        return np.nan
    means = sums[ok] / counts[ok, None, None]
    centre = np.tensordot(counts[ok] / counts[ok].sum(), means, axes=1)
    td2 = np.array([trace_distance(hermitize(m), hermitize(centre)) ** 2 for m in means])
    return float(np.sqrt(np.sum(td2 * counts[ok]) / counts[ok].sum() / (nb - 1)))


def as_ensemble(data) -> Ensemble:
    """Accept an ``Ensemble`` or a list of ``TrajectoryPath`` on a shared grid."""
    if isinstance(data, Ensemble):
        return data
    paths = list(data)
    if not paths:
        raise EstimationError("empty ensemble")
    if not all(isinstance(p, TrajectoryPath) for p in paths):
        raise TypeError("expected an Ensemble or TrajectoryPath objects")
    times = paths[0].times
    for p in paths:
        if p.times.shape != times.shape or np.any(np.abs(p.times - times) > 1e-12):
            raise EstimationError("paths do not share a time grid")
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    n_types = 1 + max((k for p in paths for _, k in p.events), default=-1)
    grid = np.arange(len(times))
    counts = np.zeros((len(paths), len(times), n_types), dtype=np.int64)
    events = []
    for i, p in enumerate(paths):
        for t, k in p.events:
            gi = int(round(t / dt))
            counts[i, gi:, k] += 1
            events.append((i, gi, k))
    return Ensemble(
        model="paths", mode=paths[0].mode, dt=dt, n_steps=len(times) - 1, grid=grid,
        traj_indices=np.array([p.traj_index for p in paths]),
        x=np.stack([p.x for p in paths]), weight=np.stack([p.weight for p in paths]), counts=counts,
        sigma=np.stack([p.sigma for p in paths]),
        events=np.array(events, dtype=np.int64).reshape(-1, 3),
    )


def _weights(ens: Ensemble, r: int):
    if ens.mode is Mode.Q:
        return np.trace(ens.sigma[:, r], axis1=-2, axis2=-1).real
    return np.ones(ens.n_traj)


def a_priori_state(ensemble, t: float) -> StateEstimate:
    """Mean state at time ``t``: E_Q[sigma_t] in Q-mode, E_P[sigma_hat_t] in P-mode."""
    ens = as_ensemble(ensemble)
    if ens.n_traj == 0:
        raise EstimationError("empty ensemble")
    if ens.sigma is None:
        raise EstimationError("ensemble was run without state records")
    r = ens.index_of(t)
    samples = ens.sigma[:, r]
    state = hermitize(samples.mean(axis=0))
    tr = np.trace(samples, axis1=-2, axis2=-1).real
    return StateEstimate(
        state=state,
        stderr_entries=batch_stderr(samples, ens.traj_indices),
        stderr=_state_stderr(samples, ens.traj_indices),
        trace=float(tr.mean()),
        trace_stderr=float(batch_stderr(tr, ens.traj_indices)),
        n=ens.n_traj,
    )


def observable_mean(ensemble, t: float, a, f: Callable | None = None) -> ScalarEstimate:
    """Physical expectation of ``f(X_t) <sigma_hat_t, a>`` (Q-weighted or P-plain)."""
    ens = as_ensemble(ensemble)
    r = ens.index_of(t)
    vals = expect(ens.sigma[:, r], np.asarray(a))  # carries p in Q-mode
    if f is not None:
        vals = vals * np.asarray(f(ens.x[:, r]))
    vals = vals.real
    return ScalarEstimate(float(vals.mean()), float(batch_stderr(vals, ens.traj_indices)), ens.n_traj)


# -- a posteriori states -----------------------------------------------------


@dataclass(frozen=True)
class Predicate:
    """Event on recorded path data: ``mask(ensemble, r)`` returns a boolean (N,) array."""

    description: str
    mask: Callable[[Ensemble, int], np.ndarray]

    def __call__(self, ens, r):
        return np.asarray(self.mask(ens, r), dtype=bool)

    def __and__(self, other: "Predicate") -> "Predicate":
        return Predicate(f"({self.description}) and ({other.description})",
                         lambda ens, r: self(ens, r) & other(ens, r))


ALWAYS = Predicate("always", lambda ens, r: np.ones(ens.n_traj, dtype=bool))


def no_jumps() -> Predicate:
    return Predicate("no jumps so far", lambda ens, r: ens.counts[:, r].sum(axis=1) == 0)


def counts_equal(counts) -> Predicate:
    counts = np.asarray(counts)
    return Predicate(f"jump counts = {counts.tolist()}", lambda ens, r: np.all(ens.counts[:, r] == counts, axis=1))


def _records_upto(ens, r):
    ev = ens.events[ens.events[:, 1] <= ens.grid[r]]
    rec = [[] for _ in range(ens.n_traj)]
    for pos, gi, k in ev[np.lexsort((ev[:, 2], ev[:, 1], ev[:, 0]))]:
        rec[pos].append((int(gi), int(k)))
    return [tuple(x) for x in rec]


def jump_record(record) -> Predicate:
    """Matches trajectories whose full list of (grid index, jump type) up to t equals ``record``."""
    record = tuple((int(g), int(k)) for g, k in record)

    def mask(ens, r):
        return np.array([rec == record for rec in _records_upto(ens, r)], dtype=bool)

    return Predicate(f"jump record {list(record)}", mask)


def same_record_as(pos: int) -> Predicate:
    """Matches trajectories with the same jump record as trajectory position ``pos``."""

    def mask(ens, r):
        recs = _records_upto(ens, r)
        return np.array([rec == recs[pos] for rec in recs], dtype=bool)

    return Predicate(f"same jump record as trajectory {pos}", mask)


def in_bin(bins: "BinSpec", index: int) -> Predicate:
    return Predicate(f"X_t in bin {index}", lambda ens, r: bins.index(ens.x[:, r]) == index)


@dataclass
class ConditionalEstimate:
    description: str
    state: np.ndarray
    ess: float
    n_match: int
    spread: float  # max entrywise deviation of matching sigma_hat from the mean
    stderr_entries: np.ndarray


def a_posteriori_state(ensemble, predicate: Predicate, t: float) -> ConditionalEstimate:
    """E_P[sigma_hat_t | event] estimated from the matching trajectories."""
    ens = as_ensemble(ensemble)
    r = ens.index_of(t)
    mask = predicate(ens, r)
    w = _weights(ens, r)[mask]
    if not mask.any() or w.sum() <= 0:
        raise EstimationError(f"no trajectories satisfy {predicate.description!r}")
    sig = ens.sigma[mask, r]
    state = hermitize(sig.sum(axis=0) / w.sum())
    hats = ens.sigma_hat(r)[mask]
    live = w > EPS_P
    spread = float(np.max(np.abs(hats[live] - state))) if live.any() else 0.0
    return ConditionalEstimate(
        description=predicate.description,
        state=state,
        ess=float(w.sum() ** 2 / np.sum(w**2)),
        n_match=int(mask.sum()),
        spread=spread,
        stderr_entries=ratio_stderr(sig, w, ens.traj_indices[mask]),
    )


# -- concurrence -------------------------------------------------------------


def concurrences(ensemble, t: float) -> np.ndarray:
    """|chi| of the principal vector of each sigma_hat_t (0 where p = 0)."""
    ens = as_ensemble(ensemble)
    if ens.sigma is None or ens.sigma.shape[-1] != 4:
        raise EstimationError("concurrence needs two-qubit state records")
    r = ens.index_of(t)
    w = _weights(ens, r)
    out = np.zeros(ens.n_traj)
    live = w > EPS_P
    if live.any():
        out[live] = concurrence_pure(pure_vector(ens.sigma_hat(r)[live]))
    return out


def mean_concurrence(ensemble, t: float) -> ScalarEstimate:
    """E_P[C(psi_hat_t)] with batch-means standard error."""
    ens = as_ensemble(ensemble)
    r = ens.index_of(t)
    vals = concurrences(ens, t) * _weights(ens, r)
    return ScalarEstimate(float(vals.mean()), float(batch_stderr(vals, ens.traj_indices)), ens.n_traj)


# -- classical marginals -----------------------------------------------------


@dataclass(frozen=True)
class BinSpec:
    """Rectangular bins: one strictly increasing edge array per coordinate.

    Flat index ``k`` runs over the product of coordinate bins in C order;
    points outside the box get the overflow index ``n_bins``.
    """

    edges: tuple

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        if not edges:
            raise ValueError("need edges for at least one coordinate")
        for e in edges:
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("each edge array needs >= 2 strictly increasing entries")
        object.__setattr__(self, "edges", edges)

    @property
    def shape(self):
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def n_bins(self) -> int:
        return int(np.prod(self.shape))

    @classmethod
    def uniform(cls, lo, hi, n_bins=32):
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        nb = np.broadcast_to(n_bins, lo.shape)
        return cls(tuple(np.linspace(a, b, int(k) + 1) for a, b, k in zip(lo, hi, nb)))

    @classmethod
    def from_sample(cls, x, n_bins=32, pad=0.1):
        """Uniform bins over the sample range widened by ``pad`` of its span."""
        x = np.asarray(x, dtype=float).reshape(-1, np.shape(x)[-1])
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return cls.uniform(lo - pad * span, hi + pad * span, n_bins)

    @classmethod
    def integer(cls, lo, hi):
        """Unit bins centred on the integers lo..hi of each coordinate."""
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        return cls(tuple(np.arange(a, b + 2) - 0.5 for a, b in zip(lo, hi)))

    @classmethod
    def around_points(cls, points):
        """1-D bins with one cell per point, cut at the midpoints."""
        p = np.sort(np.asarray(points, dtype=float).reshape(-1))
        mids = 0.5 * (p[1:] + p[:-1])
        half = 0.5 * (np.diff(p).min() if len(p) > 1 else 1.0)
        return cls((np.concatenate([[p[0] - half], mids, [p[-1] + half]]),))

    def index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x = x.reshape(-1, len(self.edges))
        idx = np.zeros(len(x), dtype=np.int64)
        outside = np.zeros(len(x), dtype=bool)
        for j, e in enumerate(self.edges):
            k = np.searchsorted(e, x[:, j], side="right") - 1
            outside |= (k < 0) | (k >= len(e) - 1) | ~np.isfinite(x[:, j])
            idx = idx * (len(e) - 1) + np.clip(k, 0, len(e) - 2)
        idx[outside] = self.n_bins
        return idx

    def centres(self) -> np.ndarray:
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def split(self) -> "BinSpec":
        """Every bin halved along each coordinate."""
        out = []
        for e in self.edges:
            mid = 0.5 * (e[1:] + e[:-1])
            out.append(np.sort(np.concatenate([e, mid])))
        return BinSpec(tuple(out))


@dataclass
class Histogram:
    """Bin masses (last entry is the overflow bin) with confidence intervals."""

    bins: BinSpec
    mass: np.ndarray
    stderr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float
    n: int


def clopper_pearson(k, n, level=0.99):
    k = np.asarray(k)
    a = 1.0 - level
    lo = np.where(k > 0, stats.beta.ppf(a / 2, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - a / 2, k + 1, n - k), 1.0)
    return lo, hi


def bin_masses(ens: Ensemble, r: int, bins: BinSpec):
    """Per-trajectory contributions (N, n_bins + 1): weight times indicator."""
    idx = bins.index(ens.x[:, r])
    contrib = np.zeros((ens.n_traj, bins.n_bins + 1))
    contrib[np.arange(ens.n_traj), idx] = _weights(ens, r) if ens.sigma is not None else ens.weight[:, r]
    return contrib


def classical_marginal(ensemble, t: float, bins: BinSpec, level: float = 0.99) -> Histogram:
    """Law of X_t on ``bins``: plain frequencies (P) or p-weighted frequencies (Q)."""
    if bins is None or bins.n_bins == 0:
        raise EstimationError("empty bin configuration")
    ens = as_ensemble(ensemble)
    r = ens.index_of(t)
    contrib = bin_masses(ens, r, bins)
    mass = contrib.mean(axis=0)
    se = batch_stderr(contrib, ens.traj_indices)
    if ens.mode is Mode.P:
        counts = contrib.sum(axis=0).round().astype(int)
        lo, hi = clopper_pearson(counts, ens.n_traj, level)
    else:
        z = stats.norm.ppf(0.5 + level / 2)
        lo, hi = np.maximum(mass - z * se, 0.0), mass + z * se
    return Histogram(bins, mass, se, lo, hi, level, ens.n_traj)


def joint_sigma(est_a, se_a, est_b, se_b, atol: float = 1e-12):
    """|a - b| in units of the combined standard error.

    Differences within ``atol`` count as agreement: quantities that vanish
    identically otherwise turn round-off into huge z-scores.
    """
    se = np.sqrt(np.asarray(se_a) ** 2 + np.asarray(se_b) ** 2)
    diff = np.abs(np.asarray(est_a) - np.asarray(est_b))
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.inf)
    return np.where(diff <= atol, 0.0, z)


# -- mergeable accumulator ---------------------------------------------------


@dataclass
class EnsembleAccumulator:
    """Time-resolved sufficient statistics, kept per batch so merging is plain addition.

    Every trajectory contributes to batch ``traj_index mod n_batches``. State
    sums hold sigma (Q) or sigma_hat (P); histogram and observable sums are
    weighted by p (Q) or 1 (P). With ``track_pure`` the accumulator also keeps
    the largest purity gap and, for two qubits, concurrence sums and extrema
    (trajectories with p = 0 are skipped).
    """

    times: np.ndarray
    n: int
    bins: BinSpec | None = None
    observables: tuple = ()
    n_batches: int = N_BATCHES
    track_pure: bool = False
    count: np.ndarray = field(default=None)
    weight_sum: np.ndarray = field(default=None)
    weight_sq_sum: np.ndarray = field(default=None)
    state_sum: np.ndarray = field(default=None)
    hist: np.ndarray = field(default=None)
    obs_sum: np.ndarray = field(default=None)
    conc_sum: np.ndarray = field(default=None)
    conc_min: np.ndarray = field(default=None)
    conc_max: np.ndarray = field(default=None)
    gap_max: np.ndarray = field(default=None)
    inst: np.ndarray = field(default=None)

    def __post_init__(self):
        R, B = len(self.times), self.n_batches
        nb = 0 if self.bins is None else self.bins.n_bins + 1
        if self.count is None:
            self.count = np.zeros(B, dtype=np.int64)
            self.weight_sum = np.zeros((B, R))
            self.weight_sq_sum = np.zeros((B, R))
            self.state_sum = np.zeros((B, R, self.n, self.n), dtype=complex)
            self.hist = np.zeros((B, R, nb))
            self.obs_sum = np.zeros((B, R, len(self.observables)))
            self.conc_sum = np.zeros((B, R))
            self.conc_min = np.full(R, np.inf)
            self.conc_max = np.full(R, -np.inf)
            self.gap_max = np.full(R, -np.inf)
            self.inst = np.zeros((B, R, nb, len(self.observables)))

    def add(self, ens: Ensemble) -> "EnsembleAccumulator":
        if len(ens.times) != len(self.times) or np.any(np.abs(ens.times - self.times) > 1e-12):
            raise EstimationError("ensemble grid differs from accumulator grid")
        ids = _batch_ids(ens.traj_indices, self.n_batches)
        self.count += np.bincount(ids, minlength=self.n_batches)
        w = np.trace(ens.sigma, axis1=-2, axis2=-1).real if ens.mode is Mode.Q else np.ones(ens.weight.shape)
        np.add.at(self.weight_sum, ids, w)
        np.add.at(self.weight_sq_sum, ids, w**2)
        np.add.at(self.state_sum, ids, ens.sigma)
        if self.bins is not None:
            for r in range(len(self.times)):
                np.add.at(self.hist[:, r], (ids, self.bins.index(ens.x[:, r])), w[:, r])
        if self.observables:
            vals = np.stack([expect(ens.sigma, np.asarray(a)).real for a in self.observables], axis=-1)
            np.add.at(self.obs_sum, ids, vals)
            if self.bins is not None:
                for r in range(len(self.times)):
                    np.add.at(self.inst[:, r], (ids, self.bins.index(ens.x[:, r])), vals[:, r])
        if self.track_pure:
            for r in range(len(self.times)):
                live = w[:, r] > EPS_P
                if not live.any():
                    continue
                hats = ens.sigma_hat(r)[live]
                self.gap_max[r] = max(self.gap_max[r], float(np.max(purity_gap(hats))))
                if self.n == 4:
                    c = concurrences(ens, float(ens.times[r]))
                    np.add.at(self.conc_sum[:, r], ids, c * w[:, r])
                    self.conc_min[r] = min(self.conc_min[r], float(c[live].min()))
                    self.conc_max[r] = max(self.conc_max[r], float(c[live].max()))
        return self

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        if other.state_sum.shape != self.state_sum.shape or other.hist.shape != self.hist.shape:
            raise EstimationError("incompatible accumulators")
        return EnsembleAccumulator(
            self.times, self.n, self.bins, self.observables, self.n_batches, self.track_pure,
            self.count + other.count, self.weight_sum + other.weight_sum,
            self.weight_sq_sum + other.weight_sq_sum, self.state_sum + other.state_sum,
            self.hist + other.hist, self.obs_sum + other.obs_sum, self.conc_sum + other.conc_sum,
            np.minimum(self.conc_min, other.conc_min), np.maximum(self.conc_max, other.conc_max),
            np.maximum(self.gap_max, other.gap_max), self.inst + other.inst,
        )

    @property
    def total(self) -> int:
        return int(self.count.sum())

    def _mean_and_se(self, sums):
        N = max(self.total, 1)
        mean = sums.sum(axis=0) / N
        bm = sums / np.maximum(self.count, 1).reshape((-1,) + (1,) * (sums.ndim - 1))
        if np.iscomplexobj(bm):
            se = _spread(bm.real, self.count) + 1j * _spread(bm.imag, self.count)
        else:
            se = _spread(bm, self.count)
        return mean, se

    def mean_state(self):
        """(R, n, n) a priori states and entrywise standard errors."""
        mean, se = self._mean_and_se(self.state_sum)
        return hermitize(mean), se

    def state_stderr(self, r: int) -> float:
        """Trace-norm standard error of the a priori state at record ``r``."""
        ok = self.count > 0
        nb = int(ok.sum())
        if nb < 2:
            return np.nan
        means = self.state_sum[ok, r] / self.count[ok, None, None]
        w = self.count[ok] / self.count[ok].sum()
        centre = np.tensordot(w, means, axes=1)
        td2 = np.array([trace_distance(hermitize(m), hermitize(centre)) ** 2 for m in means])
        return float(np.sqrt(np.sum(w * td2) / (nb - 1)))

    def mean_weight(self):
        return self._mean_and_se(self.weight_sum)

    def marginal(self):
        """(R, n_bins + 1) bin masses and standard errors."""
        return self._mean_and_se(self.hist)

    def observable_means(self):
        """(R, n_obs) physical means of <sigma_hat, a_j> and standard errors."""
        return self._mean_and_se(self.obs_sum)

    def instrument(self):
        """(R, n_bins + 1, n_obs) Q-mode estimates of tr(rho I_t(E)[a_j]) and standard errors."""
        return self._mean_and_se(self.inst)

    def concurrence(self):
        """(R,) physical mean concurrence and standard errors."""
        return self._mean_and_se(self.conc_sum)

    def ess(self):
        w, w2 = self.weight_sum.sum(axis=0), self.weight_sq_sum.sum(axis=0)
        return np.where(w2 > 0, w**2 / np.where(w2 > 0, w2, 1.0), 0.0)


__all__ = [
    "ALWAYS", "BinSpec", "ConditionalEstimate", "EnsembleAccumulator", "EstimationError", "Histogram",
    "Predicate", "ScalarEstimate", "StateEstimate", "a_posteriori_state", "a_priori_state", "as_ensemble",
    "batch_stderr", "classical_marginal", "clopper_pearson", "concurrences", "counts_equal", "in_bin",
    "joint_sigma", "jump_record", "mean_concurrence", "no_jumps", "observable_mean", "same_record_as",
]
