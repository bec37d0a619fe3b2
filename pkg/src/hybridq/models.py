"""Hybrid models: coefficient functions of the classical point and built-in examples.

All coefficient callbacks are vectorised: they take ``x`` of shape ``(..., s)``
and return arrays with the same leading axes. Jump types are a finite set
``{0, ..., l-1}`` with rates ``lambda_k``; ``J_k`` are the jump operators in the
convention where a type-k jump maps ``sigma -> J_k sigma J_k^dagger``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .states import I2, SX, SY, SZ, TOL_HERM, dagger

Array = np.ndarray


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    name: str
    scalars: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HybridModel:
    name: str
    n: int
    s: int
    d: int
    l: int
    rates: Array
    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    jump_displacement: Callable[[Array], Array]
    hamiltonian: Callable[[Array], Array]
    lindblad: Callable[[Array], Array]
    jump_ops: Callable[[Array], Array]
    compensated: tuple = ()
    quantum_depends_on_x: bool = True
    x_box: tuple = ((-1.0,), (1.0,))
    sup_bound: float = np.inf
    params: ModelParams | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float).reshape(self.l)
        if np.any(rates <= 0):
            raise ModelError("jump rates must be positive")
        object.__setattr__(self, "rates", rates)
        comp = tuple(bool(c) for c in self.compensated) or (False,) * self.l
        if len(comp) != self.l:
            raise ModelError("one compensated flag per jump type")
        object.__setattr__(self, "compensated", comp)

    @property
    def max_rate(self) -> float:
        return float(self.rates.max()) if self.l else 0.0


@dataclass(frozen=True)
class Coefficients:
    """Coefficients frozen at a classical point (or a batch of points)."""

    c: Array  # (..., s)
    a: Array  # (..., s, d)
    g: Array  # (..., l, s)
    H: Array  # (..., n, n)
    L: Array  # (..., d, n, n)
    J: Array  # (..., l, n, n)
    K: Array  # (..., n, n)
    rates: Array
    compensated: tuple


def eval_coefficients(model: HybridModel, x) -> Coefficients:
    """Evaluate every coefficient of ``model`` at ``x`` (shape ``(s,)`` or ``(..., s)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.s,):
        raise ModelError(f"expected classical points of dimension {model.s}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ModelError("classical point is not finite")
    lead = x.shape[:-1]
    c = np.asarray(model.drift(x), dtype=float).reshape(lead + (model.s,))
    a = np.asarray(model.diffusion(x), dtype=float).reshape(lead + (model.s, model.d))
    g = np.asarray(model.jump_displacement(x), dtype=float).reshape(lead + (model.l, model.s))
    H = np.asarray(model.hamiltonian(x), dtype=complex).reshape(lead + (model.n, model.n))
    L = np.asarray(model.lindblad(x), dtype=complex).reshape(lead + (model.d, model.n, model.n))
    J = np.asarray(model.jump_ops(x), dtype=complex).reshape(lead + (model.l, model.n, model.n))
    for name, arr in (("c", c), ("a", a), ("g", g), ("H", H), ("L", L), ("J", J)):
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"coefficient {name} of model {model.name!r} is not finite")
    K = 1j * H
    if model.d:
        K = K + 0.5 * np.sum(dagger(L) @ L, axis=-3)
    if model.l:
        K = K + 0.5 * np.einsum("k,...kij->...ij", model.rates, dagger(J) @ J)
    return Coefficients(c, a, g, H, L, J, K, model.rates, model.compensated)


def check_model(model: HybridModel, n_samples: int = 100, seed: int = 0) -> None:
    """Spot-check Hermiticity, finiteness and the declared sup-norm bound.

    Samples ``n_samples`` points uniformly in ``model.x_box``. Boundedness is
    only sampled, not proven.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in model.x_box)
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((n_samples, model.s))
    co = eval_coefficients(model, x)
    herm = np.linalg.norm(co.H - dagger(co.H), axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(co.H, axis=(-2, -1)))
    if np.any(herm / scale > TOL_HERM):
        raise ModelError(f"H(x) of model {model.name!r} is not Hermitian")
    for name, ops in (("H", co.H[:, None]), ("L", co.L), ("J", co.J)):
        if ops.size and np.max(np.linalg.norm(ops, ord=2, axis=(-2, -1))) > model.sup_bound * (1 + 1e-12):
            raise ModelError(f"{name}(x) of model {model.name!r} exceeds declared bound {model.sup_bound}")


# -- vectorised coefficient callbacks (module level so models pickle) --------


def _constant(value, x):
    x = np.asarray(x)
    return np.broadcast_to(value, x.shape[:-1] + value.shape)


def _linear_drift(c0, kappa, x):
    return c0 - kappa * np.asarray(x)


def _unit_displacements(l, x):
    x = np.asarray(x)
    return np.broadcast_to(np.eye(l), x.shape[:-1] + (l, l))


def _point_mass_displacement(x0, x):
    return (x0 - np.asarray(x))[..., None, :]


def _nearest_point(points, x):
    d2 = np.sum((np.asarray(x)[..., None, :] - points) ** 2, axis=-1)
    return np.argmin(d2, axis=-1)


def _pauli_displacement(points, sources, targets, x):
    x = np.asarray(x)
    idx = _nearest_point(points, x)
    active = np.moveaxis(sources[:, idx], 0, -1)  # (..., l)
    disp = points[targets] - x[..., None, :]
    return np.where(active[..., None], disp, 0.0)


def _gate_profile(x):
    """Continuous g with g(0) = 1 and g(x) = 0 for x >= 1."""
    return np.clip(1.0 - np.asarray(x)[..., 0], 0.0, 1.0)


def _hidden_jump(beta, unitary, x):
    gx = _gate_profile(x) * beta
    return gx[..., None, None, None] * unitary


def _feedback_hamiltonian(omega, h, x):
    th = np.tanh(np.asarray(x)[..., 0])[..., None, None]
    return 0.5 * omega * SZ + h * th * SX


# -- built-ins ---------------------------------------------------------------


def _per_type(value, l, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(l, float(arr))
    if arr.shape != (l,):
        raise ModelError(f"{name} needs {l} entries, got {arr.shape}")
    return arr


def _positive(name, arr):
    if np.any(np.asarray(arr) <= 0):
        raise ModelError(f"{name} must be positive")


def local_unitary(phi: float, axis) -> np.ndarray:
    """exp(i phi sigma.axis) for a unit 3-vector ``axis``."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ModelError(f"rotation axis must be a unit 3-vector, got {axis}")
    gen = axis[0] * SX + axis[1] * SY + axis[2] * SZ
    return np.cos(phi) * I2 + 1j * np.sin(phi) * gen


def two_qubit_hamiltonian(omega: float) -> np.ndarray:
    return 0.5 * omega * (np.kron(SZ, I2) + np.kron(I2, SZ))


def pure_classical(c0=0.0, kappa=0.0, a=1.0, g=1.0, lam=1.0, ell=0.25, j=1.2, compensated=False):
    """One-dimensional jump-diffusion with scalar quantum coefficients (n = 1).

    dX = (c0 - kappa X) dt + a dW + g dN; L = ell, J = j change the law of X
    under the physical probability only.
    """
    _positive("lam", lam)
    zero1 = np.zeros((1, 1), dtype=complex)
    return HybridModel(
        name="pure_classical", n=1, s=1, d=1, l=1, rates=[lam],
        drift=partial(_linear_drift, np.array([float(c0)]), float(kappa)),
        diffusion=partial(_constant, np.array([[float(a)]])),
        jump_displacement=partial(_constant, np.array([[float(g)]])),
        hamiltonian=partial(_constant, zero1),
        lindblad=partial(_constant, np.array([[[ell]]], dtype=complex)),
        jump_ops=partial(_constant, np.array([[[j]]], dtype=complex)),
        compensated=(bool(compensated),), quantum_depends_on_x=False,
        x_box=((-5.0,), (5.0,)), sup_bound=max(abs(ell), abs(j)),
    )


def unitary_local(omega=2.0, lam=1.0, beta=1.2, phi=np.pi / 2, axis=(1.0, 0.0, 0.0), l=2, l1=1):
    """Two qubits, jump type k applies beta_k U_k to qubit 1 (k < l1) or qubit 2.

    The classical component counts jumps of each type: X_k = N_k.
    """
    l = int(l)
    l1 = int(l1)
    if not 0 <= l1 <= l or l < 1:
        raise ModelError("need 0 <= l1 <= l and l >= 1")
    lam = _per_type(lam, l, "lam")
    beta = _per_type(beta, l, "beta")
    phi = _per_type(phi, l, "phi")
    axes = np.asarray(axis, dtype=float)
    axes = np.broadcast_to(axes, (l, 3)) if axes.shape == (3,) else axes
    _positive("lam", lam)
    _positive("beta", beta)
    jumps = []
    for k in range(l):
        u = local_unitary(phi[k], axes[k])
        op = np.kron(u, I2) if k < l1 else np.kron(I2, u)
        jumps.append(beta[k] * op)
    return _counting_two_qubit("unitary_local", omega, lam, np.array(jumps), float(beta.max()))


def unitary_nonlocal(omega=2.0, lam=1.0, beta=1.2):
    """Two qubits with U_{1,2} = (sx(x)1 +/- i 1(x)sx)/sqrt(2); X_k = N_k."""
    lam = _per_type(lam, 2, "lam")
    beta = _per_type(beta, 2, "beta")
    _positive("lam", lam)
    _positive("beta", beta)
    sx1, sx2 = np.kron(SX, I2), np.kron(I2, SX)
    u1 = (sx1 + 1j * sx2) / np.sqrt(2)
    u2 = (sx1 - 1j * sx2) / np.sqrt(2)
    jumps = np.array([beta[0] * u1, beta[1] * u2])
    return _counting_two_qubit("unitary_nonlocal", omega, lam, jumps, float(beta.max()))


def _counting_two_qubit(name, omega, lam, jumps, beta_max):
    l = len(lam)
    H = two_qubit_hamiltonian(omega)
    return HybridModel(
        name=name, n=4, s=l, d=0, l=l, rates=lam,
        drift=partial(_constant, np.zeros(l)),
        diffusion=partial(_constant, np.zeros((l, 0))),
        jump_displacement=partial(_unit_displacements, l),
        hamiltonian=partial(_constant, H),
        lindblad=partial(_constant, np.zeros((0, 4, 4), dtype=complex)),
        jump_ops=partial(_constant, jumps),
        quantum_depends_on_x=False,
        x_box=((0.0,) * l, (10.0,) * l), sup_bound=max(abs(omega), beta_max),
    )


def hidden_entanglement(omega=2.0, lam=1.0, beta=1.2, phi=np.pi / 2, axis=(1.0, 0.0, 0.0)):
    """Single shot on qubit 2: J(x) = g(x) beta (1 (x) U) with g(x) = clip(1 - x, 0, 1), X = N."""
    _positive("lam", lam)
    _positive("beta", beta)
    u = np.kron(I2, local_unitary(phi, axis))[None]
    return HybridModel(
        name="hidden_entanglement", n=4, s=1, d=0, l=1, rates=[lam],
        drift=partial(_constant, np.zeros(1)),
        diffusion=partial(_constant, np.zeros((1, 0))),
        jump_displacement=partial(_constant, np.ones((1, 1))),
        hamiltonian=partial(_constant, two_qubit_hamiltonian(omega)),
        lindblad=partial(_constant, np.zeros((0, 4, 4), dtype=complex)),
        jump_ops=partial(_hidden_jump, float(beta), u),
        quantum_depends_on_x=True,
        x_box=((-1.0,), (3.0,)), sup_bound=max(abs(omega), float(beta)),
    )


DEFAULT_WALK = {
    "points": [[0.0], [1.0], [2.0]],
    "jumps": [
        {"sources": [0], "target": 1, "rate": 1.0},
        {"sources": [1], "target": 2, "rate": 0.5},
        {"sources": [2], "target": 0, "rate": 0.8},
        {"sources": [1], "target": 0, "rate": 0.3},
    ],
}


def pauli_walk(points=None, jumps=None):
    """Jumps among fixed points; type k moves points in ``sources`` to ``target``.

    Each jump dict may carry ``beta`` (scalar J_k, default 1), which rescales the
    physical intensity to rate * beta**2.
    """
    points = np.asarray(DEFAULT_WALK["points"] if points is None else points, dtype=float)
    jumps = DEFAULT_WALK["jumps"] if jumps is None else jumps
    if points.ndim != 2 or len(points) < 1:
        raise ModelError("points must be a list of s-vectors")
    n_pts, s = points.shape
    if len({tuple(p) for p in points}) != n_pts:
        raise ModelError("points must be distinct")
    l = len(jumps)
    if l == 0:
        raise ModelError("pauli_walk needs at least one jump type")
    sources = np.zeros((l, n_pts), dtype=bool)
    targets = np.zeros(l, dtype=int)
    rates = np.zeros(l)
    betas = np.ones(l)
    for k, jump in enumerate(jumps):
        unknown = set(jump) - {"sources", "target", "rate", "beta"}
        if unknown:
            raise ModelError(f"unknown jump keys {sorted(unknown)}")
        src = list(jump["sources"])
        if not src or min(src) < 0 or max(src) >= n_pts:
            raise ModelError(f"jump {k}: bad sources {src}")
        sources[k, src] = True
        targets[k] = int(jump["target"])
        if not 0 <= targets[k] < n_pts:
            raise ModelError(f"jump {k}: bad target {targets[k]}")
        rates[k] = float(jump["rate"])
        betas[k] = float(jump.get("beta", 1.0))
    _positive("rate", rates)
    _positive("beta", betas)
    if not sources.any(axis=0).all():
        raise ModelError("every point must be a source of some jump type (union of F_k must cover R^s)")
    lo, hi = points.min(axis=0) - 1.0, points.max(axis=0) + 1.0
    return HybridModel(
        name="pauli_walk", n=1, s=s, d=0, l=l, rates=rates,
        drift=partial(_constant, np.zeros(s)),
        diffusion=partial(_constant, np.zeros((s, 0))),
        jump_displacement=partial(_pauli_displacement, points, sources, targets),
        hamiltonian=partial(_constant, np.zeros((1, 1), dtype=complex)),
        lindblad=partial(_constant, np.zeros((0, 1, 1), dtype=complex)),
        jump_ops=partial(_constant, betas.astype(complex).reshape(l, 1, 1)),
        quantum_depends_on_x=False,
        x_box=(tuple(lo), tuple(hi)), sup_bound=float(betas.max()),
    )


def pauli_generator(points, jumps) -> np.ndarray:
    """Rate matrix Q (rows sum to zero) of the walk among ``points``, for dp/dt = p Q."""
    n_pts = len(points)
    Q = np.zeros((n_pts, n_pts))
    for jump in jumps:
        for i in jump["sources"]:
            j = int(jump["target"])
            if i != j:
                Q[i, j] += float(jump["rate"])
                Q[i, i] -= float(jump["rate"])
    return Q


def point_mass(x0=1.0, lam=1.0, beta=1.0):
    """dX = (x0 - X(t-)) dN: after the first jump X sits at x0."""
    _positive("lam", lam)
    if beta == 0:
        raise ModelError("beta must be nonzero")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    s = x0.shape[0]
    return HybridModel(
        name="point_mass", n=1, s=s, d=0, l=1, rates=[lam],
        drift=partial(_constant, np.zeros(s)),
        diffusion=partial(_constant, np.zeros((s, 0))),
        jump_displacement=partial(_point_mass_displacement, x0),
        hamiltonian=partial(_constant, np.zeros((1, 1), dtype=complex)),
        lindblad=partial(_constant, np.zeros((0, 1, 1), dtype=complex)),
        jump_ops=partial(_constant, np.array([[[beta]]], dtype=complex)),
        quantum_depends_on_x=False,
        x_box=(tuple(x0 - 3.0), tuple(x0 + 3.0)), sup_bound=abs(float(beta)),
    )


def monitored_qubit(omega=1.0, kappa=0.5, h=0.5):
    """Qubit under continuous sz measurement; X is the integrated output signal.

    H(x) = omega/2 sz + h tanh(x) sx feeds the record back into the dynamics.
    Under the physical probability dX = 2 sqrt(kappa) <sz> dt + dW_hat.
    """
    _positive("kappa", kappa)
    return HybridModel(
        name="monitored_qubit", n=2, s=1, d=1, l=0, rates=[],
        drift=partial(_constant, np.zeros(1)),
        diffusion=partial(_constant, np.ones((1, 1))),
        jump_displacement=partial(_constant, np.zeros((0, 1))),
        hamiltonian=partial(_feedback_hamiltonian, float(omega), float(h)),
        lindblad=partial(_constant, np.sqrt(kappa) * SZ[None]),
        jump_ops=partial(_constant, np.zeros((0, 2, 2), dtype=complex)),
        quantum_depends_on_x=h != 0,
        x_box=((-5.0,), (5.0,)), sup_bound=max(0.5 * abs(omega) + abs(h), np.sqrt(kappa)),
    )


_REGISTRY: dict[str, Callable[..., HybridModel]] = {
    "pure_classical": pure_classical,
    "unitary_local": unitary_local,
    "unitary_nonlocal": unitary_nonlocal,
    "hidden_entanglement": hidden_entanglement,
    "pauli_walk": pauli_walk,
    "point_mass": point_mass,
    "monitored_qubit": monitored_qubit,
}


def register_model(name: str, factory: Callable[..., HybridModel], overwrite: bool = False) -> None:
    """Register a user model factory under ``name``.

    The factory's callbacks must be vectorised over leading axes of ``x`` and,
    for multi-worker runs, picklable. Strong continuity in x is the user's
    obligation; only boundedness is spot-checked.
    """
    if name in _REGISTRY and not overwrite:
        raise ModelError(f"model {name!r} already registered")
    _REGISTRY[name] = factory


def list_models() -> list[str]:
    return sorted(_REGISTRY)


def build_builtin(params: ModelParams | str, **scalars) -> HybridModel:
    if isinstance(params, str):
        params = ModelParams(params, scalars)
    try:
        factory = _REGISTRY[params.name]
    except KeyError:
        raise ModelError(f"unknown model {params.name!r}; available: {', '.join(list_models())}") from None
    try:
        model = factory(**params.scalars)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {params.name!r}: {exc}") from None
    object.__setattr__(model, "params", params)
    return model


__all__ = [
    "Coefficients", "HybridModel", "ModelError", "ModelParams", "build_builtin",
    "check_model", "eval_coefficients", "list_models", "local_unitary", "pauli_generator",
    "register_model",
]
