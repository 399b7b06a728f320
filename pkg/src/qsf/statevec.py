"""Dense statevector simulator for the gate set {H, RX, RY, RZ, CNOT}.

Conventions, fixed once and asserted by tests:
  - qubit 0 is the least-significant bit of the amplitude index, so the
    basis state with only qubit q set has amplitude index 2**q;
  - RZ uses the symmetric form diag(e^{-i theta/2}, e^{i theta/2});
  - expectation values are exact (no shot sampling).

Gates are applied over strided amplitude slices of a copied buffer, never
by building 2**n x 2**n matrices.  The batched kernels at the bottom act
in place on [M, 2**n] arrays and carry per-row rotation angles; they are
what the variational-circuit layer drives during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MAX_QUBITS = 12

_ROTATIONS = frozenset({"RX", "RY", "RZ"})
_KINDS = frozenset({"H", "CNOT"}) | _ROTATIONS

_SQRT2_INV = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    """An n-qubit pure state: 2**n complex amplitudes, unit norm."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if self.n_qubits < 1:
            raise ConfigError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if amps.shape != (2**self.n_qubits,):
            raise ConfigError(
                f"amplitude vector has length {amps.shape}, expected {2**self.n_qubits}"
            )
        norm = float(np.sum(np.abs(amps) ** 2))
        # 1e-9 guard: loose enough for accumulated round-off, tight enough for bugs
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"state norm {norm} deviates from 1 beyond tolerance")


@dataclass(frozen=True)
class GateOp:
    """A single gate: kind in {H, RX, RY, RZ, CNOT}, targets, optional angle.

    For CNOT, targets is (control, target).
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = field(default=None)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        expected = 2 if self.kind == "CNOT" else 1
        if len(self.targets) != expected:
            raise ConfigError(f"{self.kind} takes {expected} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ConfigError(f"{self.kind} targets must be distinct, got {self.targets}")
        if self.kind in _ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ConfigError(f"{self.kind} requires a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise ConfigError(f"{self.kind} takes no angle")


def H(qubit: int) -> GateOp:
    return GateOp("H", (qubit,))


def RX(angle: float, qubit: int) -> GateOp:
    return GateOp("RX", (qubit,), angle)


def RY(angle: float, qubit: int) -> GateOp:
    return GateOp("RY", (qubit,), angle)


def RZ(angle: float, qubit: int) -> GateOp:
    return GateOp("RZ", (qubit,), angle)


def CNOT(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


def zero_state(n_qubits: int) -> StateVector:
    """The |0...0> state on n_qubits, with 1 <= n_qubits <= MAX_QUBITS."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(
            f"n_qubits must be within [1, {MAX_QUBITS}], got {n_qubits}"
        )
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Return the state transformed by one gate; the input is left untouched."""
    n = state.n_qubits
    for q in gate.targets:
        if not 0 <= q < n:
            raise IndexError(f"qubit index {q} out of range for {n}-qubit state")
    buf = state.amplitudes.copy().reshape(1, -1)
    if gate.kind == "H":
        _apply_h(buf, n, gate.targets[0])
    elif gate.kind == "CNOT":
        _apply_cnot(buf, n, gate.targets[0], gate.targets[1])
    else:
        _apply_rotation(buf, n, gate.targets[0], gate.kind, gate.angle)
    return StateVector(n, buf.reshape(-1))


def expectation_z(state: StateVector, qubit: int) -> float:
    """Exact <Z> on one qubit: sum of |a_b|^2 * (+1 if bit clear else -1)."""
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(
            f"qubit index {qubit} out of range for {state.n_qubits}-qubit state"
        )
    return float(_expect_z_batch(state.amplitudes.reshape(1, -1), state.n_qubits, qubit)[0])


def expectation_z_all(state: StateVector) -> np.ndarray:
    """<Z> for every qubit, index i matching expectation_z(state, i)."""
    return _expect_z_all_batch(state.amplitudes.reshape(1, -1), state.n_qubits)[0]


# --- batched kernels ------------------------------------------------------
#
# amps is [M, 2**n] complex128 and is modified in place.  Rotation angles
# may be scalars or [M] arrays (one angle per batch row).


def _zero_batch(m: int, n_qubits: int) -> np.ndarray:
    amps = np.zeros((m, 2**n_qubits), dtype=complex)
    amps[:, 0] = 1.0
    return amps


def _qubit_view(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    # [M, high, 2, low] with axis 2 the target qubit's bit (qubit 0 = LSB)
    m = amps.shape[0]
    return amps.reshape(m, 2 ** (n - 1 - qubit), 2, 2**qubit)


def _apply_h(amps: np.ndarray, n: int, qubit: int) -> None:
    v = _qubit_view(amps, n, qubit)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = (a0 + a1) * _SQRT2_INV
    v[:, :, 1, :] = (a0 - a1) * _SQRT2_INV


def _apply_rotation(amps: np.ndarray, n: int, qubit: int, kind: str, theta) -> None:
    half = 0.5 * np.asarray(theta, dtype=float)
    c = np.cos(half)
    s = np.sin(half)
    if c.ndim == 1:  # per-row angles: broadcast over (high, low) axes
        c = c[:, None, None]
        s = s[:, None, None]
    v = _qubit_view(amps, n, qubit)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    if kind == "RY":
        v[:, :, 0, :] = c * a0 - s * a1
        v[:, :, 1, :] = s * a0 + c * a1
    elif kind == "RX":
        v[:, :, 0, :] = c * a0 - 1j * s * a1
        v[:, :, 1, :] = -1j * s * a0 + c * a1
    elif kind == "RZ":
        v[:, :, 0, :] = (c - 1j * s) * a0
        v[:, :, 1, :] = (c + 1j * s) * a1
    else:  # pragma: no cover - guarded by GateOp validation
        raise ConfigError(f"not a rotation kind: {kind}")


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int) -> None:
    m = amps.shape[0]
    v = amps.reshape([m] + [2] * n)
    # axis for qubit q sits at 1 + (n - 1 - q); batch is axis 0
    c_ax = 1 + (n - 1 - control)
    t_ax = 1 + (n - 1 - target)
    i10 = [slice(None)] * (n + 1)
    i11 = [slice(None)] * (n + 1)
    i10[c_ax] = i11[c_ax] = 1
    i10[t_ax] = 0
    i11[t_ax] = 1
    i10, i11 = tuple(i10), tuple(i11)
    tmp = v[i10].copy()
    v[i10] = v[i11]
    v[i11] = tmp


def _expect_z_batch(amps: np.ndarray, n: int, qubit: int) -> np.ndarray:
    probs = np.abs(_qubit_view(amps, n, qubit)) ** 2
    p1 = probs[:, :, 1, :].sum(axis=(1, 2))
    p0 = probs[:, :, 0, :].sum(axis=(1, 2))
    return p0 - p1


def _expect_z_all_batch(amps: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((amps.shape[0], n), dtype=float)
    for q in range(n):
        out[:, q] = _expect_z_batch(amps, n, q)
    return out
