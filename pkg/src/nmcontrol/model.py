"""Operators of a qudit coupled to two-level defects, in the rotating frame.

Basis ordering is ``qudit ⊗ TLS_1 ⊗ ... ⊗ TLS_n`` with each TLS in the
order ``(|g>, |e>)``. All frequencies are angular, in rad/ns, and all times
are in ns. The frame rotates at the qudit base frequency per excitation, so
only the anharmonic ladder, the TLS detunings and the exchange coupling
remain in the drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "QuditSpec",
    "TlsSpec",
    "ModelSpec",
    "OperatorSet",
    "ModelError",
    "mhz_to_angular",
    "angular_to_mhz",
    "build_operators",
    "validate_excitation_conservation",
    "reference_model",
    "excitation_numbers",
]

FREQUENCY_CONVENTIONS = ("ordinary", "angular")


class ModelError(ValueError):
    """Raised for physically invalid or inconsistent model parameters."""


def mhz_to_angular(value_mhz: float, convention: str = "ordinary") -> float:
    """Convert a frequency in MHz to rad/ns.

    With ``convention="ordinary"`` the value is a cycle frequency and picks up
    a factor 2π; with ``"angular"`` it is taken to be angular already.
    """
    if convention == "ordinary":
        return 2.0 * math.pi * 1e-3 * value_mhz
    if convention == "angular":
        return 1e-3 * value_mhz
    raise ModelError(f"unknown frequency convention {convention!r}")


def angular_to_mhz(value: float, convention: str = "ordinary") -> float:
    return value / mhz_to_angular(1.0, convention)


def _check_time(name: str, value: Optional[float], optional: bool = False) -> None:
    if value is None:
        if optional:
            return
        raise ModelError(f"{name} is required")
    if math.isnan(value) or value <= 0:
        raise ModelError(f"{name} must be positive or infinite, got {value}")


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class QuditSpec:
    n_levels: int = 4
    anharmonicity: float = 0.0
    t1: float = math.inf
    t2_star: Optional[float] = None
    base_frequency: float = 0.0

    def __post_init__(self):
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise ModelError(f"n_levels must be an integer >= 2, got {self.n_levels}")
        _check_finite("anharmonicity", self.anharmonicity)
        _check_finite("base_frequency", self.base_frequency)
        _check_time("qudit t1", self.t1)
        _check_time("qudit t2_star", self.t2_star, optional=True)


@dataclass(frozen=True)
class TlsSpec:
    """A two-level defect.

    ``detuning`` is ``omega_qudit - omega_tls``; positive values put the TLS
    below the qudit.
    """

    detuning: float
    coupling: float
    t1: float = math.inf
    t2_star: Optional[float] = None

    def __post_init__(self):
        _check_finite("TLS detuning", self.detuning)
        _check_finite("TLS coupling", self.coupling)
        if self.coupling < 0:
            raise ModelError(f"TLS coupling must be >= 0, got {self.coupling}")
        _check_time("TLS t1", self.t1)
        _check_time("TLS t2_star", self.t2_star, optional=True)


@dataclass(frozen=True)
class ModelSpec:
    qudit: QuditSpec = field(default_factory=QuditSpec)
    tls: tuple[TlsSpec, ...] = ()
    frequency_convention: str = "ordinary"

    def __post_init__(self):
        object.__setattr__(self, "tls", tuple(self.tls))
        if self.frequency_convention not in FREQUENCY_CONVENTIONS:
            raise ModelError(
                f"frequency_convention must be one of {FREQUENCY_CONVENTIONS}")

    @property
    def n_levels(self) -> int:
        return self.qudit.n_levels

    @property
    def n_tls(self) -> int:
        return len(self.tls)

    @property
    def env_dim(self) -> int:
        return 2 ** self.n_tls

    @property
    def dim(self) -> int:
        return self.n_levels * self.env_dim

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, **changes)


def reference_model(
    anharmonicity_mhz: float = 40.0,
    detuning_mhz: float = 550.0,
    coupling_mhz: float = 60.0,
    qudit_t1: float = 5000.0,
    tls_t1: float = 1000.0,
    n_levels: int = 4,
    extra_tls: Sequence[tuple[float, float, float]] = (),
    convention: str = "ordinary",
) -> ModelSpec:
    """Four-level qudit with one strongly coupled TLS, parameters in MHz/ns.

    ``extra_tls`` holds ``(detuning_mhz, coupling_mhz, t1_ns)`` triples for
    additional defects, detuning measured from the qudit.
    """
    f = lambda v: mhz_to_angular(v, convention)  # noqa: E731
    tls = [TlsSpec(f(detuning_mhz), f(coupling_mhz), tls_t1)]
    tls += [TlsSpec(f(d), f(s), t1) for d, s, t1 in extra_tls]
    return ModelSpec(
        QuditSpec(n_levels=n_levels, anharmonicity=f(anharmonicity_mhz), t1=qudit_t1),
        tuple(tls),
        convention,
    )


def _embed(op_qudit: np.ndarray, tls_ops: dict[int, np.ndarray], n_tls: int) -> np.ndarray:
    out = op_qudit
    eye2 = np.eye(2)
    for i in range(n_tls):
        out = np.kron(out, tls_ops.get(i, eye2))
    return out


def excitation_numbers(n_levels: int, n_tls: int) -> np.ndarray:
    """Total excitation count of every basis state, in basis order."""
    qudit = np.arange(n_levels)
    env = np.zeros(1, dtype=int)
    for _ in range(n_tls):
        env = (env[:, None] + np.arange(2)[None, :]).ravel()
    return (qudit[:, None] + env[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Matrices generating the joint dynamics.

    The Hamiltonian at control value ``delta`` (rad/ns) is
    ``drift + delta * control_generator``.
    """

    drift: np.ndarray
    control_generator: np.ndarray
    collapse_ops: tuple[np.ndarray, ...]
    excitation_number: np.ndarray
    n_levels: int
    n_tls: int

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def env_dim(self) -> int:
        return 2 ** self.n_tls

    def hamiltonian(self, delta: float) -> np.ndarray:
        return self.drift + delta * self.control_generator

    def replace(self, **changes) -> "OperatorSet":
        from dataclasses import replace

        return replace(self, **changes)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def build_operators(model: ModelSpec) -> OperatorSet:
    """Assemble drift, control generator and collapse operators."""
    n = model.n_levels
    n_tls = model.n_tls
    levels = np.arange(n)
    beta = model.qudit.anharmonicity

    a = np.diag(np.sqrt(levels[1:]), k=1).astype(complex)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
    sp = sm.T.copy()
    ee = np.diag([0.0, 1.0]).astype(complex)
    z = np.diag([-1.0, 1.0]).astype(complex)
    eye_q = np.eye(n, dtype=complex)

    drift = _embed(np.diag(beta * levels * (levels + 1) / 2).astype(complex), {}, n_tls)
    for i, t in enumerate(model.tls):
        drift = drift - t.detuning * _embed(eye_q, {i: ee}, n_tls)
        exchange = _embed(a, {i: sp}, n_tls)
        drift = drift + 0.5 * t.coupling * (exchange + exchange.conj().T)

    control = _embed(np.diag(levels).astype(complex), {}, n_tls)

    collapse = []
    q = model.qudit
    if math.isfinite(q.t1):
        for k in range(1, n):
            op = np.zeros((n, n), dtype=complex)
            op[k - 1, k] = math.sqrt(k / q.t1)
            collapse.append(_embed(op, {}, n_tls))
    if q.t2_star is not None and math.isfinite(q.t2_star):
        collapse.append(math.sqrt(1.0 / (2.0 * q.t2_star)) * control)
    for i, t in enumerate(model.tls):
        if math.isfinite(t.t1):
            collapse.append(math.sqrt(1.0 / t.t1) * _embed(eye_q, {i: sm}, n_tls))
        if t.t2_star is not None and math.isfinite(t.t2_star):
            collapse.append(math.sqrt(1.0 / (2.0 * t.t2_star)) * _embed(eye_q, {i: z}, n_tls))

    exc = excitation_numbers(n, n_tls)
    return OperatorSet(
        drift=_frozen(drift),
        control_generator=_frozen(control),
        collapse_ops=tuple(_frozen(c) for c in collapse),
        excitation_number=_frozen(np.diag(exc)),
        n_levels=n,
        n_tls=n_tls,
    )


def _commutator_small(a: np.ndarray, b: np.ndarray, atol: float) -> bool:
    c = a @ b - b @ a
    scale = max(1.0, np.linalg.norm(a), np.linalg.norm(b))
    return np.linalg.norm(c) <= atol * scale


def validate_excitation_conservation(ops: OperatorSet, atol: float = 1e-12) -> bool:
    """True iff drift and control conserve the total excitation number and
    every collapse operator removes exactly one excitation."""
    nt = ops.excitation_number
    if not _commutator_small(ops.drift, nt, atol):
        return False
    if not _commutator_small(ops.control_generator, nt, atol):
        return False
    exc = np.real(np.diag(nt)).round().astype(int)
    for c in ops.collapse_ops:
        rows, cols = np.nonzero(np.abs(c) > atol * max(1.0, np.abs(c).max()))
        if rows.size == 0:
            continue
        # dephasing-type operators are diagonal and keep the excitation
        # number; anything else must lower it by exactly one
        shift = exc[cols] - exc[rows]
        if not (np.all(shift == 1) or np.all(shift == 0)):
            return False
    return True
