"""Variational quantum circuit: encoding, ansatz, readout, and gradients.

Circuit layout per sample:
  1. encoding: per qubit q, H then RY(arctan x_q) then RZ(arctan x_q^2);
  2. n_qlayers repetitions of an entangling sublayer followed by a
     variational sublayer of per-qubit rotations cycling RX, RY, RZ;
  3. readout: exact <Z> on every qubit.

The entangling sublayer defaults to the all-offsets staircase: for each
offset r in 1..n-1, CNOT(i, (i+r) mod n) for every qubit i, which costs
n*(n-1) CNOTs per layer.  A ring-only variant (offset 1) is available via
VqcShape.entangler for ablations.

Gradients use the parameter-shift rule (f(t+pi/2) - f(t-pi/2))/2 for all
rotation angles, including the two encoding angles per qubit; feature
gradients chain through the arctan derivatives.  The private *_batch
helpers evaluate many samples (and all their shifted circuits) in one
vectorized pass and are the hot path during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import statevec
from .errors import ConfigError, DataError

ENTANGLERS = ("staircase", "ring")

_CYCLE = ("RX", "RY", "RZ")


@dataclass(frozen=True)
class VqcShape:
    """Circuit dimensions: qubit count, layer count, rotations per qubit."""

    n_qubits: int
    n_qlayers: int = 1
    n_vrotations: int = 3
    entangler: str = "staircase"

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 8:
            raise ConfigError(f"n_qubits must be in [1, 8], got {self.n_qubits}")
        if self.n_qlayers < 1:
            raise ConfigError(f"n_qlayers must be >= 1, got {self.n_qlayers}")
        if self.n_vrotations < 1:
            raise ConfigError(f"n_vrotations must be >= 1, got {self.n_vrotations}")
        if self.entangler not in ENTANGLERS:
            raise ConfigError(
                f"entangler must be one of {ENTANGLERS}, got {self.entangler!r}"
            )

    @property
    def n_angles(self) -> int:
        return self.n_qlayers * self.n_qubits * self.n_vrotations

    def angles_shape(self) -> tuple[int, int, int]:
        return (self.n_qlayers, self.n_qubits, self.n_vrotations)


@dataclass(frozen=True)
class VqcParams:
    """Trainable ansatz angles, indexed [layer, qubit, rotation]."""

    shape: VqcShape
    angles: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        object.__setattr__(self, "angles", angles)
        if angles.shape != self.shape.angles_shape():
            raise ConfigError(
                f"angle tensor shape {angles.shape} does not match "
                f"{self.shape.angles_shape()}"
            )
        if not np.all(np.isfinite(angles)):
            raise ConfigError("ansatz angles must all be finite")


@dataclass(frozen=True)
class EncodingAngles:
    """Per-qubit encoding rotations: ry = arctan(x), rz = arctan(x^2)."""

    ry: np.ndarray
    rz: np.ndarray


def init_params(shape: VqcShape, rng: np.random.Generator) -> VqcParams:
    """Small random start near the identity circuit."""
    lim = np.pi / 100.0
    return VqcParams(shape, rng.uniform(-lim, lim, size=shape.angles_shape()))


def encode_features(features) -> EncodingAngles:
    x = np.asarray(features, dtype=float)
    if x.ndim != 1:
        raise DataError(f"features must be a flat vector, got shape {x.shape}")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise DataError(f"non-finite feature at index {bad[0]}")
    return EncodingAngles(ry=np.arctan(x), rz=np.arctan(x * x))


def prep_gates(enc: EncodingAngles) -> list[statevec.GateOp]:
    gates = []
    for q in range(len(enc.ry)):
        gates.append(statevec.H(q))
        gates.append(statevec.RY(float(enc.ry[q]), q))
        gates.append(statevec.RZ(float(enc.rz[q]), q))
    return gates


def entangler_offsets(shape: VqcShape) -> range:
    if shape.entangler == "ring":
        return range(1, min(2, shape.n_qubits))
    return range(1, shape.n_qubits)


def ansatz_gates(params: VqcParams) -> list[statevec.GateOp]:
    """The full gate sequence of the ansatz, layer by layer."""
    shape = params.shape
    n = shape.n_qubits
    gates: list[statevec.GateOp] = []
    for layer in range(shape.n_qlayers):
        for r in entangler_offsets(shape):
            for i in range(n):
                gates.append(statevec.CNOT(i, (i + r) % n))
        for q in range(n):
            for j in range(shape.n_vrotations):
                angle = float(params.angles[layer, q, j])
                gates.append(statevec.GateOp(_CYCLE[j % 3], (q,), angle))
    return gates


def prepare_state(enc: EncodingAngles) -> statevec.StateVector:
    state = statevec.zero_state(len(enc.ry))
    for gate in prep_gates(enc):
        state = statevec.apply_gate(state, gate)
    return state


def apply_ansatz(state: statevec.StateVector, params: VqcParams) -> statevec.StateVector:
    if state.n_qubits != params.shape.n_qubits:
        raise ConfigError(
            f"state has {state.n_qubits} qubits, params expect {params.shape.n_qubits}"
        )
    for gate in ansatz_gates(params):
        state = statevec.apply_gate(state, gate)
    return state


def vqc_forward(features, params: VqcParams) -> np.ndarray:
    """Per-qubit <Z> of the full circuit; every entry lies in [-1, 1]."""
    enc = encode_features(features)
    if len(enc.ry) != params.shape.n_qubits:
        raise ConfigError(
            f"got {len(enc.ry)} features for {params.shape.n_qubits} qubits"
        )
    return statevec.expectation_z_all(apply_ansatz(prepare_state(enc), params))


def vqc_gradient(features, params: VqcParams) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-shift gradients of every output.

    Returns (d_params, d_features) with d_params[i] the gradient of output
    <Z_i> over the angle tensor and d_features[i, j] = d<Z_i>/d x_j.
    """
    x = np.asarray(features, dtype=float)
    enc = encode_features(x)
    if len(enc.ry) != params.shape.n_qubits:
        raise ConfigError(
            f"got {len(enc.ry)} features for {params.shape.n_qubits} qubits"
        )
    d_ansatz, d_ry, d_rz = _jacobian_batch(
        params.shape, enc.ry[None, :], enc.rz[None, :], params.angles
    )
    # chain rule through ry = arctan(x) and rz = arctan(x^2)
    d_features = d_ry[0] / (1.0 + x**2) + d_rz[0] * (2.0 * x / (1.0 + x**4))
    return d_ansatz[0], d_features


# --- batched evaluation ---------------------------------------------------


def _forward_batch(
    shape: VqcShape, enc_ry: np.ndarray, enc_rz: np.ndarray, angles: np.ndarray
) -> np.ndarray:
    """Evaluate M circuits at once.

    enc_ry, enc_rz: [M, n_qubits]; angles: [M, n_qlayers, n_qubits,
    n_vrotations] (per-row ansatz angles).  Returns <Z> as [M, n_qubits].
    """
    n = shape.n_qubits
    amps = statevec._zero_batch(enc_ry.shape[0], n)
    for q in range(n):
        statevec._apply_h(amps, n, q)
        statevec._apply_rotation(amps, n, q, "RY", enc_ry[:, q])
        statevec._apply_rotation(amps, n, q, "RZ", enc_rz[:, q])
    for layer in range(shape.n_qlayers):
        for r in entangler_offsets(shape):
            for i in range(n):
                statevec._apply_cnot(amps, n, i, (i + r) % n)
        for q in range(n):
            for j in range(shape.n_vrotations):
                statevec._apply_rotation(amps, n, q, _CYCLE[j % 3], angles[:, layer, q, j])
    return statevec._expect_z_all_batch(amps, n)


def _jacobian_batch(
    shape: VqcShape, enc_ry: np.ndarray, enc_rz: np.ndarray, angles: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift-rule Jacobians for M samples sharing one ansatz.

    enc_ry, enc_rz: [M, n_qubits]; angles: the shared [n_qlayers, n_qubits,
    n_vrotations] tensor.  Every parameter of every sample is shifted by
    +-pi/2 and the whole stack is evaluated in a single batched pass.

    Returns (d_ansatz [M, n_out, *angles.shape], d_ry [M, n_out, n_qubits],
    d_rz [M, n_out, n_qubits]) where n_out = n_qubits.
    """
    m, n = enc_ry.shape
    a_flat = angles.reshape(-1)
    n_a = a_flat.size
    n_p = n_a + 2 * n
    base = np.concatenate(
        [np.broadcast_to(a_flat, (m, n_a)), enc_ry, enc_rz], axis=1
    )  # [M, n_p]
    stack = np.repeat(base[:, None, :], 2 * n_p, axis=1)
    k = np.arange(n_p)
    stack[:, 2 * k, k] += np.pi / 2
    stack[:, 2 * k + 1, k] -= np.pi / 2
    flat = stack.reshape(m * 2 * n_p, n_p)
    z = _forward_batch(
        shape,
        flat[:, n_a : n_a + n],
        flat[:, n_a + n :],
        flat[:, :n_a].reshape(-1, *shape.angles_shape()),
    ).reshape(m, 2 * n_p, n)
    grads = 0.5 * (z[:, 0::2, :] - z[:, 1::2, :])  # [M, n_p, n_out]
    grads = np.swapaxes(grads, 1, 2)  # [M, n_out, n_p]
    d_ansatz = grads[:, :, :n_a].reshape(m, n, *shape.angles_shape())
    d_ry = grads[:, :, n_a : n_a + n]
    d_rz = grads[:, :, n_a + n :]
    return d_ansatz, d_ry, d_rz
