"""Classical LSTM and quantum QLSTM cells, stacked with dropout and a head.

Both cell kinds share the gate structure

    v_t = concat(h_{t-1}, x_t)
    f, i, o = sigmoid(gate pre-activations);  C = tanh(update pre-activation)
    c_t = f * c_{t-1} + i * C
    h_t = o * tanh(c_t)

The classical cell computes pre-activations as affine maps of v_t.  The
quantum cell projects v_t down to n_qubits, runs one variational circuit
per gate, and maps each circuit's Z-expectations back to hidden size with
a per-gate (optionally shared) linear projection.  An optional six-circuit
mode adds a fifth circuit on the hidden path, h_t = proj(VQC(proj(o *
tanh(c_t)))), and a sixth that transforms what the cell emits to the next
layer.

Stacks run n_layers cells over the window, apply inverted-scaling dropout
to each layer's output sequence in train mode, and map the final
timestep through a linear head to a scalar per sample.

Parameter tensors are created in a fixed draw order from the caller's rng
(documented in Stack.__init__), so a seed pins every initial weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from . import vqc as vqc_mod
from .autodiff import Tensor
from .errors import ConfigError, DataError
from .vqc import VqcParams, VqcShape

GATES = ("forget", "input", "update", "output")

MODEL_KINDS = ("classical", "quantum")


@dataclass(frozen=True)
class CellState:
    """Recurrent carry: hidden vector h and memory cell c."""

    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "c", c)
        if h.shape != c.shape or h.ndim != 1:
            raise ConfigError(f"h and c must be equal-length vectors, got {h.shape} / {c.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
            raise ConfigError("cell state must be finite")


def zero_cell_state(hidden: int) -> CellState:
    return CellState(np.zeros(hidden), np.zeros(hidden))


@dataclass(frozen=True)
class LstmCellParams:
    """Four gate weight matrices [hidden, hidden+input] and their biases."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for name in ("W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} must be finite")
        hidden, span = self.W_f.shape
        if span <= hidden:
            raise ConfigError(
                f"weight width {span} leaves no input columns for hidden size {hidden}"
            )
        for name in ("W_i", "W_C", "W_o"):
            if getattr(self, name).shape != (hidden, span):
                raise ConfigError(f"{name} shape differs from W_f {self.W_f.shape}")
        for name in ("b_f", "b_i", "b_C", "b_o"):
            if getattr(self, name).shape != (hidden,):
                raise ConfigError(f"{name} must have shape ({hidden},)")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]


@dataclass(frozen=True)
class QlstmCellParams:
    """Input projection, one circuit per gate, per-gate output projections.

    gate_vqcs holds {forget, input, update, output}, all with one shared
    VqcShape, plus an optional "hidden" circuit for six-circuit mode; that
    mode also needs the hid_* projection arrays.
    """

    in_w: np.ndarray
    in_b: np.ndarray
    gate_vqcs: Mapping[str, VqcParams]
    out_w: Mapping[str, np.ndarray]
    out_b: Mapping[str, np.ndarray]
    hid_in_w: np.ndarray | None = field(default=None)
    hid_in_b: np.ndarray | None = field(default=None)
    hid_out_w: np.ndarray | None = field(default=None)
    hid_out_b: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "in_w", np.asarray(self.in_w, dtype=float))
        object.__setattr__(self, "in_b", np.asarray(self.in_b, dtype=float))
        missing = set(GATES) - set(self.gate_vqcs)
        if missing:
            raise ConfigError(f"gate_vqcs missing circuits for {sorted(missing)}")
        shapes = {self.gate_vqcs[g].shape for g in GATES}
        if len(shapes) != 1:
            raise ConfigError("all gate circuits must share one VqcShape")
        n = self.gate_vqcs["forget"].shape.n_qubits
        if self.in_w.ndim != 2 or self.in_w.shape[0] != n:
            raise ConfigError(f"in_w must map features to {n} qubits, got {self.in_w.shape}")
        if self.in_b.shape != (n,):
            raise ConfigError(f"in_b must have shape ({n},)")
        hidden = None
        for g in GATES:
            w = np.asarray(self.out_w[g], dtype=float)
            b = np.asarray(self.out_b[g], dtype=float)
            if w.ndim != 2 or w.shape[1] != n:
                raise ConfigError(f"out_w[{g!r}] must have {n} columns, got {w.shape}")
            hidden = hidden or w.shape[0]
            if w.shape[0] != hidden or b.shape != (hidden,):
                raise ConfigError(f"output projection for {g!r} inconsistent with hidden {hidden}")
        if self.in_w.shape[1] <= hidden:
            raise ConfigError(
                f"in_w width {self.in_w.shape[1]} leaves no input columns "
                f"for hidden size {hidden}"
            )
        six_bits = [
            self.hid_in_w is not None,
            self.hid_in_b is not None,
            self.hid_out_w is not None,
            self.hid_out_b is not None,
            "hidden" in self.gate_vqcs,
        ]
        if any(six_bits) and not all(six_bits):
            raise ConfigError("six-circuit mode needs the hidden circuit and all hid_* arrays")
        if all(six_bits):
            if self.gate_vqcs["hidden"].shape != self.gate_vqcs["forget"].shape:
                raise ConfigError("hidden circuit must share the gate VqcShape")
            if np.shape(self.hid_in_w) != (n, hidden) or np.shape(self.hid_in_b) != (n,):
                raise ConfigError("hid_in projection must map hidden to qubits")
            if np.shape(self.hid_out_w) != (hidden, n) or np.shape(self.hid_out_b) != (hidden,):
                raise ConfigError("hid_out projection must map qubits to hidden")

    @property
    def hidden(self) -> int:
        return np.asarray(self.out_w["forget"]).shape[0]

    @property
    def input_size(self) -> int:
        return self.in_w.shape[1] - self.hidden

    @property
    def six_mode(self) -> bool:
        return "hidden" in self.gate_vqcs


@dataclass(frozen=True)
class StackConfig:
    """Model architecture: cell kind, depth, width, dropout, circuit shape."""

    hidden: int
    model_kind: str
    n_layers: int = 2
    dropout: float = 0.2
    vqc_shape: VqcShape | None = None
    six_vqc: bool = False
    share_out_proj: bool = False

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        # n_layers = 0 is the degenerate linear model (head only), kept for
        # gradient checking against an exactly quadratic objective
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.model_kind == "quantum":
            if self.vqc_shape is None:
                raise ConfigError("quantum models need a vqc_shape")
        elif self.vqc_shape is not None or self.six_vqc or self.share_out_proj:
            raise ConfigError("vqc_shape/six_vqc/share_out_proj apply to quantum models only")


# --- quantum circuit as an autodiff node ----------------------------------


def _vqc_node(x: Tensor, angles: Tensor, shape: VqcShape) -> Tensor:
    """Batched circuit evaluation with parameter-shift backward.

    x: [batch, n_qubits] features; angles: the shared ansatz tensor.
    Backward computes shift-rule Jacobians lazily and chains feature
    gradients through the arctan encodings.
    """
    xd = x.data
    enc_ry = np.arctan(xd)
    enc_rz = np.arctan(xd * xd)
    m = xd.shape[0]
    z = vqc_mod._forward_batch(
        shape, enc_ry, enc_rz, np.broadcast_to(angles.data, (m,) + angles.data.shape)
    )

    def backward(g):
        d_ansatz, d_ry, d_rz = vqc_mod._jacobian_batch(shape, enc_ry, enc_rz, angles.data)
        d_feat = (
            d_ry * (1.0 / (1.0 + xd**2))[:, None, :]
            + d_rz * (2.0 * xd / (1.0 + xd**4))[:, None, :]
        )
        gx = np.einsum("bo,bof->bf", g, d_feat)
        ga = np.einsum("bo,bo...->...", g, d_ansatz)
        return gx, ga

    return Tensor.from_op(z, (x, angles), backward)


# --- batched cell steps ---------------------------------------------------


def _lstm_step(x: Tensor, h: Tensor, c: Tensor, p: Mapping[str, Tensor]):
    v = ad.concat([h, x], axis=1)
    f = ad.sigmoid(ad.affine(v, p["W_f"], p["b_f"]))
    i = ad.sigmoid(ad.affine(v, p["W_i"], p["b_i"]))
    C = ad.tanh(ad.affine(v, p["W_C"], p["b_C"]))
    o = ad.sigmoid(ad.affine(v, p["W_o"], p["b_o"]))
    c2 = f * c + i * C
    h2 = o * ad.tanh(c2)
    return h2, c2


def _qlstm_step(
    x: Tensor, h: Tensor, c: Tensor, p: Mapping[str, Tensor], shape: VqcShape
):
    v = ad.concat([h, x], axis=1)
    vt = ad.affine(v, p["in_w"], p["in_b"])

    def gate(name):
        z = _vqc_node(vt, p[f"angles_{name}"], shape)
        if "out_w" in p:  # shared projection
            return ad.affine(z, p["out_w"], p["out_b"])
        return ad.affine(z, p[f"out_w_{name}"], p[f"out_b_{name}"])

    f = ad.sigmoid(gate("forget"))
    i = ad.sigmoid(gate("input"))
    C = ad.tanh(gate("update"))
    o = ad.sigmoid(gate("output"))
    c2 = f * c + i * C
    u = o * ad.tanh(c2)
    if "angles_hidden" in p:
        z = _vqc_node(ad.affine(u, p["hid_in_w"], p["hid_in_b"]), p["angles_hidden"], shape)
        h2 = ad.affine(z, p["hid_out_w"], p["hid_out_b"])
    else:
        h2 = u
    return h2, c2


def _emit(h: Tensor, p: Mapping[str, Tensor], shape: VqcShape | None) -> Tensor:
    """What the cell passes to the next layer; identity except in six mode."""
    if "angles_emit" not in p:
        return h
    z = _vqc_node(ad.affine(h, p["emit_in_w"], p["emit_in_b"]), p["angles_emit"], shape)
    return ad.affine(z, p["emit_out_w"], p["emit_out_b"])


# --- public single-sample cell API ----------------------------------------


def lstm_cell_step(x, state: CellState, params: LstmCellParams) -> CellState:
    """One classical step; x is the input vector for this timestep."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise ConfigError(f"input shape {x.shape} does not match cell input {params.input_size}")
    if state.h.shape != (params.hidden,):
        raise ConfigError(f"state width {state.h.shape} does not match hidden {params.hidden}")
    p = {
        name: Tensor(getattr(params, name))
        for name in ("W_f", "b_f", "W_i", "b_i", "W_C", "b_C", "W_o", "b_o")
    }
    h, c = _lstm_step(Tensor(x[None, :]), Tensor(state.h[None, :]), Tensor(state.c[None, :]), p)
    return CellState(h.data[0], c.data[0])


def qlstm_cell_step(x, state: CellState, params: QlstmCellParams) -> CellState:
    """One quantum step; four gate circuits, optional hidden-path circuit."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise ConfigError(f"input shape {x.shape} does not match cell input {params.input_size}")
    if state.h.shape != (params.hidden,):
        raise ConfigError(f"state width {state.h.shape} does not match hidden {params.hidden}")
    shape = params.gate_vqcs["forget"].shape
    p: dict[str, Tensor] = {"in_w": Tensor(params.in_w), "in_b": Tensor(params.in_b)}
    for g in GATES:
        p[f"angles_{g}"] = Tensor(params.gate_vqcs[g].angles)
        p[f"out_w_{g}"] = Tensor(params.out_w[g])
        p[f"out_b_{g}"] = Tensor(params.out_b[g])
    if params.six_mode:
        p["angles_hidden"] = Tensor(params.gate_vqcs["hidden"].angles)
        p["hid_in_w"] = Tensor(params.hid_in_w)
        p["hid_in_b"] = Tensor(params.hid_in_b)
        p["hid_out_w"] = Tensor(params.hid_out_w)
        p["hid_out_b"] = Tensor(params.hid_out_b)
    h, c = _qlstm_step(
        Tensor(x[None, :]), Tensor(state.h[None, :]), Tensor(state.c[None, :]), p, shape
    )
    return CellState(h.data[0], c.data[0])


# --- the stacked model ----------------------------------------------------


class Stack:
    """n_layers recurrent cells, dropout after each layer, linear head.

    Parameters are drawn from `rng` in a fixed order so a seed pins the
    model: per layer, classical gates in (f, i, C, o) order as (W, b)
    pairs, or for quantum layers the input projection, then per-gate
    circuit angles and output projections in GATES order, then the
    six-mode extras; finally the head (w, b).  All classical weights use
    uniform [-1/sqrt(hidden), 1/sqrt(hidden)], circuit angles uniform
    [-pi/100, pi/100].
    """

    def __init__(self, config: StackConfig, n_features: int, rng: np.random.Generator):
        if n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {n_features}")
        self.config = config
        self.n_features = n_features
        self._params: dict[str, Tensor] = {}
        bound = 1.0 / math.sqrt(config.hidden)

        def draw(name, *shape):
            self._params[name] = Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        def draw_angles(name, shape: VqcShape):
            self._params[name] = Tensor(
                vqc_mod.init_params(shape, rng).angles, requires_grad=True
            )

        for li in range(config.n_layers):
            in_dim = n_features if li == 0 else config.hidden
            span = config.hidden + in_dim
            if config.model_kind == "classical":
                for g in ("f", "i", "C", "o"):
                    draw(f"l{li}.W_{g}", config.hidden, span)
                    draw(f"l{li}.b_{g}", config.hidden)
            else:
                shape = config.vqc_shape
                n = shape.n_qubits
                draw(f"l{li}.in_w", n, span)
                draw(f"l{li}.in_b", n)
                for g in GATES:
                    draw_angles(f"l{li}.angles_{g}", shape)
                if config.share_out_proj:
                    draw(f"l{li}.out_w", config.hidden, n)
                    draw(f"l{li}.out_b", config.hidden)
                else:
                    for g in GATES:
                        draw(f"l{li}.out_w_{g}", config.hidden, n)
                        draw(f"l{li}.out_b_{g}", config.hidden)
                if config.six_vqc:
                    draw_angles(f"l{li}.angles_hidden", shape)
                    draw(f"l{li}.hid_in_w", n, config.hidden)
                    draw(f"l{li}.hid_in_b", n)
                    draw(f"l{li}.hid_out_w", config.hidden, n)
                    draw(f"l{li}.hid_out_b", config.hidden)
                    draw_angles(f"l{li}.angles_emit", shape)
                    draw(f"l{li}.emit_in_w", n, config.hidden)
                    draw(f"l{li}.emit_in_b", n)
                    draw(f"l{li}.emit_out_w", config.hidden, n)
                    draw(f"l{li}.emit_out_b", config.hidden)
        head_in = config.hidden if config.n_layers >= 1 else n_features
        draw("head.w", 1, head_in)
        draw("head.b", 1)

    def parameters(self) -> dict[str, Tensor]:
        return self._params

    def _layer(self, li: int) -> dict[str, Tensor]:
        prefix = f"l{li}."
        return {k[len(prefix):]: t for k, t in self._params.items() if k.startswith(prefix)}

    def forward(self, windows, mode: str = "eval", dropout_rng=None) -> Tensor:
        """Predictions for a [batch, window, features] array, as a [batch] Tensor."""
        if mode not in ("train", "eval"):
            raise ConfigError(f"mode must be train or eval, got {mode!r}")
        w = np.asarray(windows, dtype=float)
        if w.ndim != 3 or w.shape[2] != self.n_features:
            raise DataError(
                f"windows must be [batch, window, {self.n_features}], got {w.shape}"
            )
        if w.shape[1] < 1:
            raise DataError("window length must be >= 1")
        if not np.all(np.isfinite(w)):
            raise DataError("windows contain non-finite values")
        drop = self.config.dropout if mode == "train" else 0.0
        if drop > 0.0 and dropout_rng is None:
            raise ConfigError("train mode with dropout needs a dropout rng")
        b, win, _ = w.shape
        hidden = self.config.hidden
        seq = [Tensor(w[:, t, :]) for t in range(win)]
        for li in range(self.config.n_layers):
            p = self._layer(li)
            h = Tensor(np.zeros((b, hidden)))
            c = Tensor(np.zeros((b, hidden)))
            outs = []
            for t in range(win):
                if self.config.model_kind == "classical":
                    h, c = _lstm_step(seq[t], h, c, p)
                else:
                    h, c = _qlstm_step(seq[t], h, c, p, self.config.vqc_shape)
                outs.append(_emit(h, p, self.config.vqc_shape))
            if drop > 0.0:
                mask = (dropout_rng.random((b, win, hidden)) >= drop) / (1.0 - drop)
                outs = [ad.scale(outs[t], mask[:, t, :]) for t in range(win)]
            seq = outs
        out = ad.affine(seq[-1], self._params["head.w"], self._params["head.b"])
        return ad.reshape(out, (b,))

    def predict(self, windows) -> np.ndarray:
        return self.forward(windows, mode="eval").data

    def cell_params(self, li: int):
        """The layer's parameters as the single-sample cell dataclass."""
        p = self._layer(li)
        if self.config.model_kind == "classical":
            return LstmCellParams(**{k: p[k].data for k in
                                     ("W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o")})
        shape = self.config.vqc_shape
        vqcs = {g: VqcParams(shape, p[f"angles_{g}"].data) for g in GATES}
        if self.config.share_out_proj:
            out_w = {g: p["out_w"].data for g in GATES}
            out_b = {g: p["out_b"].data for g in GATES}
        else:
            out_w = {g: p[f"out_w_{g}"].data for g in GATES}
            out_b = {g: p[f"out_b_{g}"].data for g in GATES}
        extra = {}
        if self.config.six_vqc:
            vqcs["hidden"] = VqcParams(shape, p["angles_hidden"].data)
            extra = {
                "hid_in_w": p["hid_in_w"].data,
                "hid_in_b": p["hid_in_b"].data,
                "hid_out_w": p["hid_out_w"].data,
                "hid_out_b": p["hid_out_b"].data,
            }
        return QlstmCellParams(
            in_w=p["in_w"].data, in_b=p["in_b"].data,
            gate_vqcs=vqcs, out_w=out_w, out_b=out_b, **extra,
        )


def stack_forward(window, model: Stack, mode: str = "eval", rng_seed: int = 0) -> float:
    """Scalar prediction for one [window, features] matrix."""
    arr = np.asarray(window, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"window must be a 2-d [window, features] matrix, got shape {arr.shape}")
    rng = np.random.default_rng(rng_seed) if mode == "train" else None
    out = model.forward(arr[None, :, :], mode=mode, dropout_rng=rng)
    return float(out.data[0])
