"""Run configuration: YAML documents validated into ``RunConfig``.

Unknown keys are rejected and every violation is reported at once.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from functools import reduce

import numpy as np
import yaml

from .analysis import BinSpec
from .engine import MAX_RATE_DT
from .models import HybridModel, ModelError, ModelParams, build_builtin, list_models
from .states import BELL, I2, SX, SY, SZ, StateError, basis_ket, check_state, maximally_mixed, projector, purity_gap

OUTPUT_DIR_ENV = "HYBRIDQ_OUTPUT_DIR"
OUTPUTS = ("paths", "marginals", "a_priori", "concurrence", "observables", "instrument")
CHECKS = ("martingale", "mode_equivalence", "a_priori_lindblad", "equilibrium", "concurrence",
          "purity", "normalization")
_TOP_KEYS = {"model", "mode", "n_traj", "T", "dt", "seed", "init", "outputs", "observables", "bins",
             "checks", "record_every", "n_paths", "workers", "chunk_size", "psd_check_every", "output_dir"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors) if not isinstance(errors, str) else [errors]
        super().__init__("; ".join(self.errors))


@dataclass
class CheckSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    model: ModelParams
    mode: str = "both"
    n_traj: int = 10_000
    T: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    init_x: list | None = None
    init_state: object = "maximally_mixed"
    outputs: tuple = ("a_priori", "marginals", "observables")
    observables: tuple = ()
    bins: dict | None = None
    checks: tuple = ()
    record_every: int | None = None
    n_paths: int = 10
    workers: int = 1
    chunk_size: int = 2048
    psd_check_every: int = 10
    output_dir: str | None = None

    @property
    def modes(self) -> tuple:
        return ("Q", "P") if self.mode == "both" else (self.mode,)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def resolved_output_dir(self) -> str:
        env = os.environ.get(OUTPUT_DIR_ENV)
        if env:
            return env
        return self.output_dir or os.path.join("runs", f"{self.model.name}-seed{self.seed}")

    def build_model(self) -> HybridModel:
        return build_builtin(self.model)

    def echo(self) -> dict:
        d = asdict(self)
        d["model"] = {"name": self.model.name, "params": dict(self.model.scalars)}
        d["checks"] = [{"name": c.name, **c.params} for c in self.checks]
        return d


# -- named states and observables -------------------------------------------

_PAULI = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def parse_state(spec, n: int) -> np.ndarray:
    """``maximally_mixed``, ``bell_<name>``, ``ket:<bits>``, or ``{real: [[..]], imag: [[..]]}``."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"real", "imag"}
        if unknown or "real" not in spec:
            raise ConfigError(f"explicit state needs keys real[, imag], got {sorted(spec)}")
        rho = np.asarray(spec["real"], dtype=float) + 1j * np.asarray(spec.get("imag", 0.0), dtype=float)
    elif spec == "maximally_mixed":
        rho = maximally_mixed(n)
    elif isinstance(spec, str) and spec.startswith("bell_") and spec[5:] in BELL:
        rho = projector(BELL[spec[5:]])
    elif isinstance(spec, str) and spec.startswith("ket:"):
        rho = projector(basis_ket(spec[4:]))
    else:
        raise ConfigError(f"unknown initial state {spec!r}")
    if rho.shape != (n, n):
        raise ConfigError(f"initial state has shape {rho.shape}, model needs {(n, n)}")
    try:
        check_state(rho, normalized=True)
    except StateError as exc:
        raise ConfigError(f"initial state: {exc}") from None
    return rho


def pauli_operator(label: str) -> np.ndarray:
    """Tensor product of Pauli letters, e.g. ``"ZI"`` for sz on qubit 1."""
    if not label or set(label) - set(_PAULI):
        raise ConfigError(f"bad Pauli label {label!r}")
    return reduce(np.kron, [_PAULI[c] for c in label])


def default_observables(n: int) -> tuple:
    if n == 4:
        return ("ZI", "IZ", "ZZ", "XX")
    if n == 2:
        return ("X", "Y", "Z")
    return ("identity",)


def observable_matrix(spec, n: int) -> np.ndarray:
    if spec == "identity":
        return np.eye(n, dtype=complex)
    if isinstance(spec, dict):
        a = np.asarray(spec["real"], dtype=float) + 1j * np.asarray(spec.get("imag", 0.0), dtype=float)
    else:
        a = pauli_operator(str(spec))
    if a.shape != (n, n):
        raise ConfigError(f"observable {spec!r} has shape {a.shape}, model needs {(n, n)}")
    return a


def observable_name(spec) -> str:
    return spec if isinstance(spec, str) else spec.get("name", "custom")


def parse_bins(spec, s: int) -> BinSpec | None:
    """``{edges: [[...], ...]}``, ``{uniform: {lo, hi, n}}``, ``{integer: {lo, hi}}`` or ``{points: [...]}``."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("bins must have exactly one of edges, uniform, integer, points")
    (kind, val), = spec.items()
    try:
        if kind == "edges":
            bins = BinSpec(tuple(val))
        elif kind == "uniform":
            bins = BinSpec.uniform(val["lo"], val["hi"], val.get("n", 32))
        elif kind == "integer":
            bins = BinSpec.integer(val["lo"], val["hi"])
        elif kind == "points":
            bins = BinSpec.around_points(val)
        else:
            raise ConfigError(f"unknown bins kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad bins spec: {exc}") from None
    if len(bins.edges) != s:
        raise ConfigError(f"bins cover {len(bins.edges)} coordinates, model has {s}")
    return bins


# -- parsing -----------------------------------------------------------------


def _num(doc, key, kind, errors, default, lo=None, lo_open=False):
    if key not in doc:
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or (kind is int and not float(val).is_integer()):
        errors.append(f"{key} must be {'an integer' if kind is int else 'a number'}, got {val!r}")
        return default
    val = kind(val)
    if not math.isfinite(val):
        errors.append(f"{key} must be finite")
    elif lo is not None and (val <= lo if lo_open else val < lo):
        errors.append(f"{key} must be {'>' if lo_open else '>='} {lo}, got {val}")
    return val


def parse_config(text: str) -> RunConfig:
    """Validate a YAML document; raises ``ConfigError`` listing every violation."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    errors = [f"unknown key {k!r}" for k in sorted(set(doc) - _TOP_KEYS)]

    model_doc = doc.get("model")
    params = None
    if isinstance(model_doc, str):
        model_doc = {"name": model_doc}
    if not isinstance(model_doc, dict) or "name" not in model_doc:
        errors.append("model must be a name or a mapping with 'name' and optional 'params'")
    else:
        errors += [f"unknown key model.{k}" for k in sorted(set(model_doc) - {"name", "params"})]
        if model_doc["name"] not in list_models():
            errors.append(f"unknown model {model_doc['name']!r}; available: {', '.join(list_models())}")
        else:
            params = ModelParams(model_doc["name"], dict(model_doc.get("params") or {}))

    mode = doc.get("mode", "both")
    if mode not in ("Q", "P", "both"):
        errors.append(f"mode must be Q, P or both, got {mode!r}")
    n_traj = _num(doc, "n_traj", int, errors, 10_000, lo=1)
    T = _num(doc, "T", float, errors, 1.0, lo=0)
    dt = _num(doc, "dt", float, errors, 1e-3, lo=0, lo_open=True)
    seed = _num(doc, "seed", int, errors, 0, lo=0)
    record_every = _num(doc, "record_every", int, errors, None, lo=1)
    n_paths = _num(doc, "n_paths", int, errors, 10, lo=0)
    workers = _num(doc, "workers", int, errors, 1, lo=1)
    chunk_size = _num(doc, "chunk_size", int, errors, 2048, lo=1)
    psd_every = _num(doc, "psd_check_every", int, errors, 10, lo=0)
    if isinstance(T, float) and isinstance(dt, float) and dt > 0:
        n = round(T / dt)
        if abs(n * dt - T) > 1e-9 * max(1.0, T):
            errors.append(f"dt={dt} does not divide T={T}")

    init = doc.get("init") or {}
    if not isinstance(init, dict):
        errors.append("init must be a mapping")
        init = {}
    errors += [f"unknown key init.{k}" for k in sorted(set(init) - {"x", "state"})]

    outputs = doc.get("outputs", list(RunConfig.outputs))
    if not isinstance(outputs, list):
        errors.append("outputs must be a list")
        outputs = []
    errors += [f"unknown output {o!r}; choose from {', '.join(OUTPUTS)}" for o in outputs if o not in OUTPUTS]

    checks = []
    for c in doc.get("checks") or []:
        name, cparams = (c, {}) if isinstance(c, str) else (c.get("name") if isinstance(c, dict) else None,
                                                           {k: v for k, v in c.items() if k != "name"}
                                                           if isinstance(c, dict) else {})
        if name not in CHECKS:
            errors.append(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
        else:
            checks.append(CheckSpec(name, cparams))

    observables = doc.get("observables") or []
    if not isinstance(observables, list):
        errors.append("observables must be a list")
        observables = []

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        errors.append("output_dir must be a string")

    model = None
    if params is not None:
        try:
            model = build_builtin(params)
        except ModelError as exc:
            errors.append(str(exc))
    if model is not None:
        if isinstance(dt, float) and model.max_rate * dt > MAX_RATE_DT * (1 + 1e-12):
            errors.append(f"dt * max(lambda) = {model.max_rate * dt:.3g} violates the constraint "
                          f"lambda_max * dt <= {MAX_RATE_DT}")
        for label, fn in (("init.state", lambda: parse_state(init.get("state", "maximally_mixed"), model.n)),
                          ("bins", lambda: parse_bins(doc.get("bins"), model.s)),
                          ("observables", lambda: [observable_matrix(o, model.n) for o in observables])):
            try:
                fn()
            except ConfigError as exc:
                errors += [f"{label}: {e}" for e in exc.errors]
            except (ValueError, TypeError, KeyError) as exc:
                errors.append(f"{label}: {exc}")
        x = init.get("x")
        if x is not None and np.shape(x) != (model.s,):
            errors.append(f"init.x must have {model.s} entries")
        needs_pure = "concurrence" in outputs or any(c.name in ("concurrence", "purity") for c in checks)
        if ("concurrence" in outputs or any(c.name == "concurrence" for c in checks)) and model.n != 4:
            errors.append("concurrence needs a two-qubit model")
        if needs_pure:
            try:
                rho = parse_state(init.get("state", "maximally_mixed"), model.n)
                if purity_gap(rho) > 1e-9:
                    errors.append("concurrence and purity tracking need a pure initial state")
            except ConfigError:
                pass

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        model=params, mode=mode, n_traj=n_traj, T=T, dt=dt, seed=seed,
        init_x=None if init.get("x") is None else [float(v) for v in init["x"]],
        init_state=init.get("state", "maximally_mixed"), outputs=tuple(outputs),
        observables=tuple(observables), bins=doc.get("bins"), checks=tuple(checks),
        record_every=record_every, n_paths=n_paths, workers=workers, chunk_size=chunk_size,
        psd_check_every=psd_every, output_dir=output_dir,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
