"""Independent reference implementations used only by tests.

Everything here is deliberately naive: full 2^n x 2^n matrices built by
explicit Kronecker products, scalar loops for the recurrent cells, and
numerical integration for t-distribution tails.  Slow and obvious beats
fast and shared-with-the-implementation.
"""

import math

import numpy as np

I2 = np.eye(2, dtype=complex)

H_MAT = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)


def rx_mat(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry_mat(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_mat(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex
    )


def dense_1q(u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Embed a 2x2 gate on `qubit` (qubit 0 = least-significant bit)."""
    m = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        m = np.kron(m, u if q == qubit else I2)
    return m


def dense_cnot(control: int, target: int, n: int) -> np.ndarray:
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for b in range(dim):
        b2 = b ^ (1 << target) if (b >> control) & 1 else b
        m[b2, b] = 1.0
    return m


def dense_expect_z(state: np.ndarray, qubit: int) -> float:
    z = 0.0
    for b, amp in enumerate(state):
        sign = 1.0 if ((b >> qubit) & 1) == 0 else -1.0
        z += sign * abs(amp) ** 2
    return z


def dense_vqc_forward(features, angles, entangler: str = "staircase") -> np.ndarray:
    """Full-matrix evaluation of the circuit: encoding, layers, <Z> readout.

    angles has shape [layers, n, rotations]; rotations cycle RX, RY, RZ.
    """
    x = np.asarray(features, dtype=float)
    n = x.size
    state = np.zeros(2**n, dtype=complex)
    state[0] = 1.0
    for q in range(n):
        state = dense_1q(H_MAT, q, n) @ state
        state = dense_1q(ry_mat(math.atan(x[q])), q, n) @ state
        state = dense_1q(rz_mat(math.atan(x[q] ** 2)), q, n) @ state
    angles = np.asarray(angles, dtype=float)
    layers, _, rotations = angles.shape
    if entangler == "staircase":
        offsets = range(1, n)
    elif entangler == "ring":
        offsets = range(1, min(2, n))
    else:
        raise ValueError(entangler)
    rot_mats = (rx_mat, ry_mat, rz_mat)
    for layer in range(layers):
        for r in offsets:
            for i in range(n):
                state = dense_cnot(i, (i + r) % n, n) @ state
        for q in range(n):
            for j in range(rotations):
                state = dense_1q(rot_mats[j % 3](angles[layer, q, j]), q, n) @ state
    return np.array([dense_expect_z(state, q) for q in range(n)])


# --- recurrent cell oracles ----------------------------------------------


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def lstm_cell_oracle(x, h, c, W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o):
    """Scalar-loop transcription of the five cell equations."""
    v = list(h) + list(x)
    hidden = len(h)
    h2 = np.empty(hidden)
    c2 = np.empty(hidden)
    for j in range(hidden):
        pre_f = sum(W_f[j][k] * v[k] for k in range(len(v))) + b_f[j]
        pre_i = sum(W_i[j][k] * v[k] for k in range(len(v))) + b_i[j]
        pre_C = sum(W_C[j][k] * v[k] for k in range(len(v))) + b_C[j]
        pre_o = sum(W_o[j][k] * v[k] for k in range(len(v))) + b_o[j]
        f = _sigmoid(pre_f)
        i = _sigmoid(pre_i)
        Cg = math.tanh(pre_C)
        o = _sigmoid(pre_o)
        c2[j] = f * c[j] + i * Cg
        h2[j] = o * math.tanh(c2[j])
    return h2, c2


def qlstm_cell_oracle(
    x, h, c, in_w, in_b, gate_angles, out_w, out_b,
    entangler="staircase", hid_in_w=None, hid_in_b=None,
    hid_out_w=None, hid_out_b=None, hid_angles=None,
):
    """Composition oracle: dense circuits plus scalar gate arithmetic.

    gate_angles / out_w / out_b are dicts keyed forget, input, update,
    output.  Passing the hid_* pieces switches on the fifth circuit on the
    hidden path.
    """
    v = list(h) + list(x)
    n_qubits = len(in_b)
    hidden = len(h)
    vt = [
        sum(in_w[q][k] * v[k] for k in range(len(v))) + in_b[q]
        for q in range(n_qubits)
    ]

    def projected(name):
        z = dense_vqc_forward(vt, gate_angles[name], entangler)
        return [
            sum(out_w[name][j][q] * z[q] for q in range(n_qubits)) + out_b[name][j]
            for j in range(hidden)
        ]

    pre_f = projected("forget")
    pre_i = projected("input")
    pre_C = projected("update")
    pre_o = projected("output")
    c2 = np.empty(hidden)
    u = np.empty(hidden)
    for j in range(hidden):
        f = _sigmoid(pre_f[j])
        i = _sigmoid(pre_i[j])
        Cg = math.tanh(pre_C[j])
        o = _sigmoid(pre_o[j])
        c2[j] = f * c[j] + i * Cg
        u[j] = o * math.tanh(c2[j])
    if hid_angles is None:
        return u, c2
    ht = [
        sum(hid_in_w[q][j] * u[j] for j in range(hidden)) + hid_in_b[q]
        for q in range(n_qubits)
    ]
    z = dense_vqc_forward(ht, hid_angles, entangler)
    h2 = np.array([
        sum(hid_out_w[j][q] * z[q] for q in range(n_qubits)) + hid_out_b[j]
        for j in range(hidden)
    ])
    return h2, c2


# --- Student-t tail integration ------------------------------------------


def t_pdf(x, df: float):
    coef = math.exp(
        math.lgamma((df + 1) / 2.0) - math.lgamma(df / 2.0)
    ) / math.sqrt(df * math.pi)
    return coef * (1.0 + np.asarray(x) ** 2 / df) ** (-(df + 1) / 2.0)


def p_two_sided_trapezoid(t: float, df: float, step: float = 1e-4) -> float:
    """p = 1 - integral of the t density over [-|t|, |t|], trapezoid rule."""
    tt = abs(t)
    if tt == 0.0:
        return 1.0
    if math.isinf(tt):
        return 0.0
    grid = np.linspace(0.0, tt, int(math.ceil(tt / step)) + 1)
    inner = 2.0 * np.trapezoid(t_pdf(grid, df), grid)
    return float(min(1.0, max(0.0, 1.0 - inner)))


def p_two_sided_quad(t: float, df: float) -> float:
    """High-accuracy tail probability via adaptive quadrature."""
    from scipy import integrate

    tt = abs(t)
    if tt == 0.0:
        return 1.0
    if math.isinf(tt):
        return 0.0
    tail, _ = integrate.quad(lambda x: float(t_pdf(x, df)), tt, np.inf)
    return float(min(1.0, 2.0 * tail))


def paired_t_oracle(a, b):
    """Textbook paired t statistic and quadrature p-value."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = d.size
    s_d = math.sqrt(float(np.sum((d - d.mean()) ** 2)) / (n - 1))
    t = float(d.mean() / (s_d / math.sqrt(n)))
    return t, p_two_sided_quad(t, n - 1)


def pooled_t_oracle(a, b):
    """Textbook pooled-variance t statistic and quadrature p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = a.size, b.size
    s1 = float(np.sum((a - a.mean()) ** 2)) / (n1 - 1)
    s2 = float(np.sum((b - b.mean()) ** 2)) / (n2 - 1)
    sp = math.sqrt(((n1 - 1) * s1 + (n2 - 1) * s2) / (n1 + n2 - 2))
    t = float((a.mean() - b.mean()) / (sp * math.sqrt(1.0 / n1 + 1.0 / n2)))
    return t, p_two_sided_quad(t, n1 + n2 - 2)


def cohens_d_oracle(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = a.size, b.size
    s1 = float(np.sum((a - a.mean()) ** 2)) / (n1 - 1)
    s2 = float(np.sum((b - b.mean()) ** 2)) / (n2 - 1)
    sp = math.sqrt(((n1 - 1) * s1 + (n2 - 1) * s2) / (n1 + n2 - 2))
    return float((a.mean() - b.mean()) / sp)
