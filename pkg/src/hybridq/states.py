"""Small dense operators: density-operator hygiene, distances, concurrence.

Operators are plain complex ``numpy`` arrays of shape ``(n, n)``; most helpers
also accept a stack ``(..., n, n)``. Two-qubit vectors use the computational
basis ordering ``|00>, |01>, |10>, |11>`` with ``|ij> = |i> (x) |j>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_HERM = 1e-9
TOL_PSD = 1e-8
EPS_P = 1e-12
PURE_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SYSY = np.kron(SY, SY)


class StateError(ValueError):
    """Raised for operators that are not valid (possibly unnormalised) states."""


@dataclass(frozen=True)
class DensityState:
    """A possibly unnormalised density operator together with its trace."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=complex)
        check_state(sigma, normalized=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma).real)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def dagger(a):
    return np.swapaxes(np.conj(a), -1, -2)


def hermitize(a):
    """Orthogonal projection onto Hermitian matrices."""
    return 0.5 * (a + dagger(a))


def expect(rho, a):
    """<rho, a> = tr(rho a), batched over leading axes."""
    return np.einsum("...ij,...ji->...", rho, a)


def hermiticity_defect(a) -> float:
    a = np.asarray(a)
    scale = max(1.0, float(np.linalg.norm(a)))
    return float(np.linalg.norm(a - dagger(a))) / scale


def check_state(sigma, normalized: bool = True, tol_psd: float = TOL_PSD):
    """Raise ``StateError`` unless ``sigma`` is Hermitian, PSD and (optionally) unit trace."""
    sigma = np.asarray(sigma)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] < 1:
        raise StateError(f"expected a square matrix, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise StateError("state has non-finite entries")
    if hermiticity_defect(sigma) > TOL_HERM:
        raise StateError("state is not Hermitian")
    tr = np.trace(sigma).real
    evals = np.linalg.eigvalsh(hermitize(sigma))
    if evals[0] < -tol_psd * max(1.0, tr):
        raise StateError(f"state is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
    if normalized and abs(tr - 1.0) > 1e-9:
        raise StateError(f"state trace {tr} differs from 1")


def maximally_mixed(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex) / n


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def basis_ket(bits: str) -> np.ndarray:
    """Computational basis vector for a bit string, e.g. ``"01"``."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"bad bit string {bits!r}")
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


BELL = {
    "phi_plus": np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2),
    "phi_minus": np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2),
    "psi_plus": np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2),
    "psi_minus": np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2),
}


def normalize(sigma, fallback=None, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Return ``sigma / tr(sigma)``, or ``fallback`` when the trace vanishes.

    Negative eigenvalues in ``(-tol_psd, 0)`` are clipped and the result
    renormalised; anything more negative raises ``StateError``.
    """
    if isinstance(sigma, DensityState):
        sigma = sigma.sigma
    sigma = np.asarray(sigma, dtype=complex)
    n = sigma.shape[-1]
    if hermiticity_defect(sigma) > TOL_HERM:
        raise StateError("cannot normalise a non-Hermitian operator")
    p = float(np.trace(sigma).real)
    if not np.isfinite(p):
        raise StateError("non-finite trace")
    if p <= EPS_P:
        return maximally_mixed(n) if fallback is None else np.asarray(fallback, dtype=complex)
    rho = hermitize(sigma) / p
    evals, vecs = np.linalg.eigh(rho)
    if evals[0] >= 0.0:
        return rho
    if evals[0] < -tol_psd:
        raise StateError(f"normalised state has eigenvalue {evals[0]:.3e} < -{tol_psd}")
    evals = np.clip(evals, 0.0, None)
    rho = (vecs * evals) @ dagger(vecs)
    return hermitize(rho / np.trace(rho).real)


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` for Hermitian operators."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(a - b)))))


def chi(phi):
    """The bilinear form <T phi | sy(x)sy phi> = 2 (phi_10 phi_01 - phi_11 phi_00).

    Accepts vectors of shape (..., 4).
    """
    phi = np.asarray(phi, dtype=complex)
    if phi.shape[-1] != 4:
        raise ValueError("chi needs two-qubit vectors")
    if not np.all(np.isfinite(phi)):
        raise ValueError("non-finite vector")
    return 2.0 * (phi[..., 2] * phi[..., 1] - phi[..., 3] * phi[..., 0])


def concurrence_pure(phi):
    """Concurrence |chi(phi)| of a normalised two-qubit vector (batched)."""
    phi = np.asarray(phi, dtype=complex)
    norms = np.linalg.norm(phi, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("concurrence_pure needs normalised vectors")
    return np.abs(chi(phi))


def pure_vector(rho, tol: float = PURE_TOL):
    """Principal eigenvector of (a stack of) rank-1 states.

    Raises ``StateError`` when the second largest eigenvalue exceeds ``tol``
    relative to the trace.
    """
    rho = np.asarray(rho)
    evals, vecs = np.linalg.eigh(hermitize(rho))
    tr = np.sum(evals, axis=-1)
    if np.any(evals[..., -2] > tol * np.maximum(tr, EPS_P)):
        raise StateError("state is not pure")
    return vecs[..., :, -1]


def purity_gap(rho):
    """Second largest eigenvalue divided by the trace (0 for rank-1 states)."""
    evals = np.linalg.eigvalsh(hermitize(np.asarray(rho)))
    if evals.shape[-1] < 2:
        return np.zeros(evals.shape[:-1])
    return evals[..., -2] / np.maximum(np.sum(evals, axis=-1), EPS_P)


def _sqrt_factor(rho, rank_tol=1e-13):
    evals, vecs = np.linalg.eigh(hermitize(rho))
    evals = np.where(evals > rank_tol * max(evals[-1], EPS_P), evals, 0.0)
    return vecs * np.sqrt(evals)


def concurrence_mixed(rho) -> float:
    """Wootters concurrence of a two-qubit density operator.

    With rho = W W^dagger, the square roots of the eigenvalues of
    rho (sy sy) rho* (sy sy) are the singular values of W^T (sy sy) W; using the
    singular values avoids square roots of round-off for rank-deficient rho.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise StateError("concurrence_mixed needs a 4x4 state")
    check_state(rho)
    w = _sqrt_factor(rho)
    mu = np.linalg.svd(w.T @ SYSY @ w, compute_uv=False)
    return float(max(0.0, mu[0] - mu[1] - mu[2] - mu[3]))


def random_pure_state(n: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    return psi / np.linalg.norm(psi)


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)
