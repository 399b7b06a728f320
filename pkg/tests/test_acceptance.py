"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints PASS or FAIL through the terminal-summary hook in
conftest.py.  The reference runs (criteria 7 and 8) use the pinned
configuration below; the first-epoch ordering in criterion 8 is a
seed-sensitive qualitative property and holds for these exact settings,
not for arbitrary seeds.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pandas as pd
import pytest

from qsf import cli, datapipe, evalstats, recurrent, statevec as sv, training, vqc
from qsf.vqc import VqcParams, VqcShape

import oracles

DAYS = 14
SYNTH_SEED = 7
WINDOW = 8
BATCH = 32
LR = 0.001

CLASSICAL = {"hidden": 16, "epochs": 20, "seed": 172, "n_layers": 2, "dropout": 0.2}
QUANTUM = {"hidden": 64, "epochs": 5, "seed": 172, "n_layers": 1, "dropout": 0.2,
           "n_qubits": 2, "n_qlayers": 1}

CLASSICAL_BUDGET_S = 60.0
QUANTUM_BUDGET_S = 1200.0


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="session")
def ref_ws(tmp_path_factory):
    """Synthesize, preprocess, and train both reference models once."""
    root = tmp_path_factory.mktemp("ref")
    raw, data = root / "raw", root / "data"
    assert run_cli("synth", "--days", DAYS, "--seed", SYNTH_SEED, "--out", raw) == 0
    assert run_cli("preprocess", "--data", raw / "synth.csv", "--out", data) == 0

    walls = {}

    def train(kind, cfg, extra=()):
        out = root / kind
        argv = [
            "train",
            "--train", data / "train.csv", "--test", data / "test.csv",
            "--scaler", data / "scaler.json",
            "--window", WINDOW, "--batch-size", BATCH, "--lr", LR,
            "--epochs", cfg["epochs"], "--hidden", cfg["hidden"],
            "--n-layers", cfg["n_layers"], "--dropout", cfg["dropout"],
            "--seed", cfg["seed"], "--out", out,
        ]
        argv += list(extra)
        start = time.perf_counter()
        assert run_cli(*argv) == 0
        walls[kind] = time.perf_counter() - start
        return out

    lstm = train("lstm", CLASSICAL, ("--model", "classical"))
    qlstm = train("qlstm", QUANTUM, (
        "--model", "quantum",
        "--n-qubits", QUANTUM["n_qubits"], "--n-qlayers", QUANTUM["n_qlayers"],
    ))
    return {
        "root": root,
        "data": data,
        "lstm": lstm,
        "qlstm": qlstm,
        "hist_lstm": training.EpochHistory.load_csv(lstm / "history.csv"),
        "hist_qlstm": training.EpochHistory.load_csv(qlstm / "history.csv"),
        "walls": walls,
    }


def test_criterion_1_simulator_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    # norm drift over 100 random gates per register size
    for n in (2, 3, 4, 5, 6):
        state = sv.zero_state(n)
        for _ in range(100):
            kind = rng.choice(["h", "rx", "ry", "rz", "cnot"])
            angle = float(rng.uniform(-2 * np.pi, 2 * np.pi))
            q = int(rng.integers(n))
            if kind == "cnot":
                c, t = rng.choice(n, size=2, replace=False)
                op = sv.CNOT(int(c), int(t))
            elif kind == "h":
                op = sv.H(q)
            else:
                op = {"rx": sv.RX, "ry": sv.RY, "rz": sv.RZ}[kind](angle, q)
            state = sv.apply_gate(state, op)
        assert abs(np.linalg.norm(state.amplitudes) - 1.0) <= 1e-10
    # <Z> = cos(theta) for RY(theta)|0>
    for theta in rng.uniform(-2 * np.pi, 2 * np.pi, size=100):
        state = sv.apply_gate(sv.zero_state(1), sv.RY(float(theta), 0))
        assert abs(sv.expectation_z(state, 0) - np.cos(theta)) < 1e-12
    # CNOT is an exact involution (a basis permutation)
    state = sv.zero_state(3)
    for q in range(3):
        state = sv.apply_gate(state, sv.RY(float(rng.uniform(0, np.pi)), q))
    twice = sv.apply_gate(sv.apply_gate(state, sv.CNOT(0, 2)), sv.CNOT(0, 2))
    assert np.array_equal(twice.amplitudes, state.amplitudes)
    assert time.perf_counter() - start < 5.0


def test_criterion_2_vqc_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    for i in range(20):
        n = int(rng.integers(1, 4))
        layers = int(rng.integers(1, 4))
        entangler = "staircase" if i % 2 == 0 else "ring"
        shape = VqcShape(n_qubits=n, n_qlayers=layers, entangler=entangler)
        params = VqcParams(shape, rng.uniform(-np.pi, np.pi, shape.angles_shape()))
        features = rng.uniform(-3.0, 3.0, size=n)
        got = vqc.vqc_forward(features, params)
        want = oracles.dense_vqc_forward(features, params.angles, entangler=entangler)
        np.testing.assert_allclose(got, want, atol=1e-10)
    assert time.perf_counter() - start < 10.0


def _fd_vqc(features, params, h=1e-6):
    shape = params.shape
    base = np.asarray(params.angles, dtype=float)
    d_params = np.zeros((shape.n_qubits,) + base.shape)
    for idx in np.ndindex(base.shape):
        up, dn = base.copy(), base.copy()
        up[idx] += h
        dn[idx] -= h
        fu = vqc.vqc_forward(features, VqcParams(shape, up))
        fd = vqc.vqc_forward(features, VqcParams(shape, dn))
        d_params[(slice(None),) + idx] = (fu - fd) / (2 * h)
    d_features = np.zeros((shape.n_qubits, shape.n_qubits))
    for k in range(shape.n_qubits):
        up, dn = features.copy(), features.copy()
        up[k] += h
        dn[k] -= h
        d_features[:, k] = (
            vqc.vqc_forward(up, params) - vqc.vqc_forward(dn, params)
        ) / (2 * h)
    return d_params, d_features


def _max_rel(analytic, numeric, floor=1e-8):
    # worst deviation normalized by the gradient's own scale; an absolute
    # 1e-8 floor keeps all-zero gradients from dividing noise by noise
    worst = float(np.max(np.abs(analytic - numeric)))
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if scale < floor:
        assert worst < floor
        return 0.0
    return worst / scale


def test_criterion_3_gradient_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        layers = int(rng.integers(1, 3))
        shape = VqcShape(n_qubits=n, n_qlayers=layers)
        params = VqcParams(shape, rng.uniform(-np.pi, np.pi, shape.angles_shape()))
        features = rng.uniform(-2.0, 2.0, size=n)
        d_params, d_features = vqc.vqc_gradient(features, params)
        fd_params, fd_features = _fd_vqc(features, params)
        worst = max(worst, _max_rel(d_params, fd_params),
                    _max_rel(d_features, fd_features))
    assert worst < 1e-5

    windows = np.random.default_rng(1).uniform(0.0, 1.0, size=(3, 4, 2))
    targets = np.random.default_rng(2).uniform(0.0, 1.0, size=3)
    shape = VqcShape(n_qubits=2, n_qlayers=1)
    cfg = recurrent.StackConfig(hidden=2, model_kind="quantum", n_layers=1,
                                dropout=0.0, vqc_shape=shape)
    model = recurrent.Stack(cfg, 2, np.random.default_rng(5))
    assert training.grad_check(model, (windows, targets), h=1e-4) < 1e-4

    cfg = recurrent.StackConfig(hidden=3, model_kind="classical", n_layers=1,
                                dropout=0.0)
    model = recurrent.Stack(cfg, 2, np.random.default_rng(6))
    assert training.grad_check(model, (windows, targets), h=1e-5) < 1e-6
    assert time.perf_counter() - start < 60.0


def test_criterion_4_cell_oracle_equivalence():
    rng = np.random.default_rng(13)
    for _ in range(20):
        hidden = int(rng.integers(1, 4))
        n_in = int(rng.integers(1, 4))
        span = hidden + n_in
        params = recurrent.LstmCellParams(
            W_f=rng.normal(size=(hidden, span)), W_i=rng.normal(size=(hidden, span)),
            W_C=rng.normal(size=(hidden, span)), W_o=rng.normal(size=(hidden, span)),
            b_f=rng.normal(size=hidden), b_i=rng.normal(size=hidden),
            b_C=rng.normal(size=hidden), b_o=rng.normal(size=hidden),
        )
        x = rng.normal(size=n_in)
        prev = recurrent.CellState(h=rng.normal(size=hidden), c=rng.normal(size=hidden))
        got = recurrent.lstm_cell_step(x, prev, params)
        h2, c2 = oracles.lstm_cell_oracle(
            x, prev.h, prev.c, params.W_f, params.W_i, params.W_C, params.W_o,
            params.b_f, params.b_i, params.b_C, params.b_o,
        )
        np.testing.assert_allclose(got.h, h2, atol=1e-12)
        np.testing.assert_allclose(got.c, c2, atol=1e-12)

    for _ in range(20):
        hidden = int(rng.integers(1, 4))
        n_in = int(rng.integers(1, 3))
        n_q = int(rng.integers(1, 4))
        layers = int(rng.integers(1, 3))
        shape = VqcShape(n_qubits=n_q, n_qlayers=layers)
        vqcs = {g: VqcParams(shape, rng.uniform(-1, 1, shape.angles_shape()))
                for g in recurrent.GATES}
        params = recurrent.QlstmCellParams(
            in_w=rng.normal(size=(n_q, hidden + n_in)),
            in_b=rng.normal(size=n_q),
            gate_vqcs=vqcs,
            out_w={g: rng.normal(size=(hidden, n_q)) for g in recurrent.GATES},
            out_b={g: rng.normal(size=hidden) for g in recurrent.GATES},
        )
        x = rng.normal(size=n_in)
        prev = recurrent.CellState(h=rng.normal(size=hidden), c=rng.normal(size=hidden))
        got = recurrent.qlstm_cell_step(x, prev, params)
        h2, c2 = oracles.qlstm_cell_oracle(
            x, prev.h, prev.c, params.in_w, params.in_b,
            {g: vqcs[g].angles for g in recurrent.GATES},
            params.out_w, params.out_b,
        )
        np.testing.assert_allclose(got.h, h2, atol=1e-10)
        np.testing.assert_allclose(got.c, c2, atol=1e-10)


def test_criterion_5_pipeline_exactness():
    idx = pd.to_datetime(["2024-01-01 10:00", "2024-01-01 10:10"])
    frame = pd.DataFrame({"power": [10.0, 20.0]}, index=idx)
    out = datapipe.interpolate_to_target(frame, "5min")
    assert out["power"].iloc[1] == 15.0

    rng = np.random.default_rng(14)
    cols = pd.DataFrame(
        {"power": rng.uniform(5, 50, size=74), "temp": rng.uniform(-5, 30, size=74)},
        index=pd.date_range("2024-01-01", periods=74, freq="5min"),
    )
    scaler = datapipe.fit_scaler(cols)
    scaled = datapipe.transform(cols, scaler)
    assert float(scaled.min().min()) >= 0.0 and float(scaled.max().max()) <= 1.0
    for col in cols:
        back = datapipe.inverse_transform(scaled[col].to_numpy(), scaler, col)
        np.testing.assert_allclose(back, cols[col].to_numpy(), atol=1e-12)

    for total, n_train in ((10, 8), (5, 4), (41, 32), (74, 59)):
        train, test = datapipe.split_chronological(cols.iloc[:total], 0.8)
        assert len(train) == n_train and len(test) == total - n_train

    ds = datapipe.make_windows(scaled, 4, "power")  # N = 74 - 4 = 70
    assert ds.n == 70
    got = datapipe.batches(ds, batch_size=32, shuffle=False)
    assert [len(t) for _, t in got] == [32, 32, 6]


def test_criterion_6_statistics_oracle():
    rng = np.random.default_rng(15)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        a = rng.normal(loc=rng.uniform(-1, 1), size=n)
        b = rng.normal(size=n)
        res = evalstats.t_test(a, b, "paired")
        t_want, _ = oracles.paired_t_oracle(a, b)
        assert abs(res.t_statistic - t_want) < 1e-9
        assert abs(res.p_value - oracles.p_two_sided_quad(res.t_statistic, n - 1)) < 1e-9
        m = int(rng.integers(3, 30))
        c = rng.normal(size=m)
        res = evalstats.t_test(a, c, "pooled_independent")
        t_want, _ = oracles.pooled_t_oracle(a, c)
        assert abs(res.t_statistic - t_want) < 1e-9
        assert abs(res.p_value - oracles.p_two_sided_quad(res.t_statistic, n + m - 2)) < 1e-9
        assert abs(res.cohens_d - oracles.cohens_d_oracle(a, c)) < 1e-9

    a = np.array([0.25, 0.5, 0.875])
    same = evalstats.t_test(a, a, "paired")
    assert (same.t_statistic, same.p_value, same.cohens_d) == (0.0, 1.0, 0.0)
    shifted = evalstats.t_test(a + 1.0, a, "paired")
    assert shifted.t_statistic == np.inf and shifted.p_value == 0.0


def test_criterion_7_desk_scale_convergence(ref_ws, tmp_path):
    hist_c = ref_ws["hist_lstm"]
    hist_q = ref_ws["hist_qlstm"]
    assert hist_c.test_loss[-1] <= 0.5 * hist_c.test_loss[0]
    assert hist_q.test_loss[-1] <= 0.5 * hist_q.test_loss[0]
    assert ref_ws["walls"]["lstm"] < CLASSICAL_BUDGET_S
    assert ref_ws["walls"]["qlstm"] < QUANTUM_BUDGET_S

    # pinned-run regression: the classical history must match the recorded one
    golden = training.EpochHistory.load_csv("tests/data/golden_classical_history.csv")
    np.testing.assert_allclose(hist_c.train_loss, golden.train_loss, rtol=1e-7)
    np.testing.assert_allclose(hist_c.test_loss, golden.test_loss, rtol=1e-7)

    # a tiny smooth series must be memorizable to high precision
    n = 38
    idx = pd.date_range("2024-03-01", periods=n, freq="5min")
    wave = 0.5 + 0.4 * np.sin(np.linspace(0.0, 3.0 * np.pi, n))
    tiny = pd.DataFrame({"power": wave, "hour": np.linspace(0.0, 1.0, n)}, index=idx)
    datapipe.save_frame(tiny, tmp_path / "tiny.csv")
    scaler = datapipe.fit_scaler(tiny)
    (tmp_path / "scaler.json").write_text(json.dumps(scaler.to_dict()))
    assert run_cli(
        "train", "--train", tmp_path / "tiny.csv", "--test", tmp_path / "tiny.csv",
        "--scaler", tmp_path / "scaler.json", "--window", 8, "--epochs", 200,
        "--lr", 0.01, "--hidden", 8, "--n-layers", 1, "--dropout", 0.0,
        "--model", "classical", "--seed", 0, "--out", tmp_path / "overfit",
    ) == 0
    assert run_cli(
        "evaluate", "--checkpoint", tmp_path / "overfit" / "model.ckpt",
        "--data", tmp_path / "tiny.csv", "--out", tmp_path / "overfit",
    ) == 0
    metrics = json.loads((tmp_path / "overfit" / "metrics.json").read_text())
    assert metrics["mse"] < 1e-3


def test_criterion_8_first_epoch_ordering(ref_ws, tmp_path):
    assert ref_ws["hist_qlstm"].test_loss[0] < ref_ws["hist_lstm"].test_loss[0]

    assert run_cli(
        "compare", "--a", ref_ws["lstm"] / "history.csv",
        "--b", ref_ws["qlstm"] / "history.csv",
        "--label-a", "lstm", "--label-b", "qlstm", "--out", tmp_path,
    ) == 0
    report = json.loads((tmp_path / "compare.json").read_text())
    for label in ("lstm", "qlstm"):
        body = report[label]
        assert body["convergence_epoch"] >= 1
        assert set(body["stability"]) == {
            "train_loss_sd", "test_loss_sd", "mean_test_loss", "median_test_loss"
        }
        assert body["final_test_loss"] > 0.0
    pooled = report["test_loss"]["pooled_independent"]
    assert {"t_statistic", "p_value", "cohens_d", "n1", "n2"} <= set(pooled)
    # unequal epoch counts rule out the paired test
    assert report["test_loss"]["paired"] is None


def _run_chain(base):
    def go(*argv):
        proc = subprocess.run(
            [sys.executable, "-m", "qsf.cli"] + [str(a) for a in argv]
            + ["--threads", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        return proc

    raw, data = base / "raw", base / "data"
    go("synth", "--days", 2, "--seed", 9, "--out", raw)
    go("preprocess", "--data", raw / "synth.csv", "--out", data)
    model = base / "model"
    go("train", "--train", data / "train.csv", "--test", data / "test.csv",
       "--scaler", data / "scaler.json", "--window", 8, "--epochs", 2,
       "--hidden", 4, "--n-layers", 1, "--dropout", 0.2, "--seed", 1,
       "--model", "classical", "--out", model)
    go("evaluate", "--checkpoint", model / "model.ckpt",
       "--data", data / "test.csv", "--out", base / "eval")
    go("predict", "--checkpoint", model / "model.ckpt",
       "--data", data / "test.csv", "--horizon", 5, "--out", base / "pred")
    go("compare", "--a", model / "history.csv", "--b", model / "history.csv",
       "--out", base / "cmp")
    go("grid", "--train", data / "train.csv", "--test", data / "test.csv",
       "--scaler", data / "scaler.json", "--window", 8, "--epochs", 1,
       "--hidden", 4, "--n-layers", 1, "--seed", 1, "--out", base / "grid",
       "--vary", "hidden=2,4")
    return base


def _no_wall(text):
    return [",".join(line.split(",")[:3]) for line in text.splitlines()]


def test_criterion_9_determinism(tmp_path):
    fixed = [
        "raw/synth.csv", "raw/synth_manifest.json",
        "data/train.csv", "data/test.csv", "data/scaler.json",
        "model/model.ckpt", "model/metrics.json",
        "eval/predictions.csv", "eval/metrics.json",
        "pred/predictions.csv", "cmp/compare.json", "grid/grid.csv",
    ]
    _run_chain(tmp_path)
    first = {rel: (tmp_path / rel).read_bytes() for rel in fixed}
    first_hist = _no_wall((tmp_path / "model/history.csv").read_text())
    _run_chain(tmp_path)  # identical commands, identical paths
    for rel in fixed:
        assert (tmp_path / rel).read_bytes() == first[rel], rel
    # history rows are identical apart from wall-clock timings
    assert _no_wall((tmp_path / "model/history.csv").read_text()) == first_hist
