"""Command-line surface: synth, preprocess, train, evaluate, predict,
compare, grid.

Only stdlib modules are imported at module level; numpy, pandas, and the
library modules load inside handlers so that --threads can pin BLAS
thread-count env vars before numpy initializes.

Exit codes: 0 success, 1 usage/configuration, 2 data or I/O, 3 training
failure.

Settings resolve as: command-line flag > config-file entry > default.
Config files are flat `key=value` lines ('#' starts a comment); keys not
recognized by the command are rejected.  The default output directory is
--out, else $QSF_OUT, else the current directory.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, StateError, TrainingError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _int(v):
    return v if isinstance(v, int) else int(str(v), 10)


def _float(v):
    return float(v)


def _str(v):
    return str(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _intlist(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _strlist(v):
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


_COMMON = {
    "seed": (_int, 0),
    "out": (_str, None),
}

_TRAIN_KEYS = {
    "train": (_str, None),
    "test": (_str, None),
    "scaler": (_str, None),
    "target": (_str, "power"),
    "features": (_strlist, None),
    "window": (_int, 8),
    "batch_size": (_int, 32),
    "lr": (_float, 0.001),
    "epochs": (_int, 20),
    "model": (_str, "classical"),
    "hidden": (_int, 16),
    "n_layers": (_int, 2),
    "n_qubits": (_int, 4),
    "n_qlayers": (_int, 1),
    "n_vrotations": (_int, 3),
    "vqc_mode": (_str, "four"),
    "entangle": (_str, "staircase"),
    "dropout": (_float, 0.2),
    "share_out_proj": (_bool, False),
    **_COMMON,
}

_SETTINGS = {
    "synth": {
        "days": (_int, None),
        "step": (_str, "5min"),
        "noise_sd": (_float, 0.05),
        "peak_mw": (_float, 150.0),
        **_COMMON,
    },
    "preprocess": {
        "data": (_str, None),
        "schema": (_str, "simulated"),
        "target_step": (_str, "5min"),
        "lags": (_intlist, [1, 2, 3]),
        "ratio": (_float, 0.8),
        **_COMMON,
    },
    "train": _TRAIN_KEYS,
    "evaluate": {
        "checkpoint": (_str, None),
        "data": (_str, None),
        "horizon": (_int, None),
        **_COMMON,
    },
    "predict": {
        "checkpoint": (_str, None),
        "data": (_str, None),
        "horizon": (_int, None),
        **_COMMON,
    },
    "compare": {
        "a": (_str, None),
        "b": (_str, None),
        "label_a": (_str, "model_a"),
        "label_b": (_str, "model_b"),
        **_COMMON,
    },
    "grid": _TRAIN_KEYS,
}

_GRID_VARY_KEYS = (
    "window",
    "batch_size",
    "lr",
    "epochs",
    "model",
    "hidden",
    "n_layers",
    "n_qubits",
    "n_qlayers",
    "n_vrotations",
    "vqc_mode",
    "entangle",
    "dropout",
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default $QSF_OUT or .)")
    common.add_argument("--threads", type=int, help="pin BLAS/OpenMP thread count")
    common.add_argument("--extended-metrics", action="store_true", default=None,
                        help="also report MAPE and R^2 where defined")

    parser = _Parser(prog="qsf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--days", type=int)
    p.add_argument("--step")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--peak-mw", dest="peak_mw", type=float)

    p = sub.add_parser("preprocess", parents=[common],
                       help="interpolate, engineer features, split, scale")
    p.add_argument("--data")
    p.add_argument("--schema", choices=("simulated", "real_plant"))
    p.add_argument("--target-step", dest="target_step")
    p.add_argument("--lags")
    p.add_argument("--ratio", type=float)

    def add_train_flags(p):
        p.add_argument("--train")
        p.add_argument("--test")
        p.add_argument("--scaler")
        p.add_argument("--target")
        p.add_argument("--features")
        p.add_argument("--window", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--model", choices=("classical", "quantum"))
        p.add_argument("--hidden", type=int)
        p.add_argument("--n-layers", dest="n_layers", type=int)
        p.add_argument("--n-qubits", dest="n_qubits", type=int)
        p.add_argument("--n-qlayers", dest="n_qlayers", type=int)
        p.add_argument("--n-vrotations", dest="n_vrotations", type=int)
        p.add_argument("--vqc-mode", dest="vqc_mode", choices=("four", "six"))
        p.add_argument("--entangle", choices=("staircase", "ring"))
        p.add_argument("--dropout", type=float)
        p.add_argument("--share-out-proj", dest="share_out_proj",
                       action="store_true", default=None)

    p = sub.add_parser("train", parents=[common], help="train a model")
    add_train_flags(p)

    p = sub.add_parser("evaluate", parents=[common],
                       help="predict on a dataset and report metrics")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("predict", parents=[common],
                       help="write physical-unit predictions for a dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("compare", parents=[common],
                       help="statistical comparison of two training histories")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--label-a", dest="label_a")
    p.add_argument("--label-b", dest="label_b")

    p = sub.add_parser("grid", parents=[common],
                       help="train every combination of --vary settings")
    add_train_flags(p)
    p.add_argument("--vary", action="append", default=None,
                   metavar="KEY=V1,V2", help="repeatable; at most 64 combinations")

    return parser


def _read_config_file(path, known) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataError(f"no such config file: {path}")
    raw = {}
    for ln_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln_no} is not key=value: {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} (line {ln_no})")
        if key in raw:
            raise ConfigError(f"duplicate config key {key!r} (line {ln_no})")
        raw[key] = value
    return raw


def _resolve(args, command: str) -> dict:
    known = _SETTINGS[command]
    file_raw = {}
    if getattr(args, "config", None):
        file_raw = _read_config_file(args.config, known)
    cfg = {}
    for key, (conv, default) in known.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_raw.get(key)
        if value is None:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(value)
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value {value!r} for setting {key!r}")
    cfg["extended_metrics"] = bool(getattr(args, "extended_metrics", None))
    return cfg


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"missing required setting {key!r} (--{key.replace('_', '-')})")


def _out_dir(cfg) -> Path:
    out = cfg.get("out") or os.environ.get("QSF_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _validate_run_config(cfg) -> None:
    checks = [
        ("window", cfg["window"] >= 1, ">= 1"),
        ("batch_size", cfg["batch_size"] >= 1, ">= 1"),
        ("lr", cfg["lr"] > 0, "> 0"),
        ("epochs", cfg["epochs"] >= 1, ">= 1"),
        ("hidden", cfg["hidden"] >= 1, ">= 1"),
        ("n_layers", cfg["n_layers"] >= 1, ">= 1"),
        ("n_qubits", 2 <= cfg["n_qubits"] <= 8, "in [2, 8]"),
        ("n_qlayers", 1 <= cfg["n_qlayers"] <= 4, "in [1, 4]"),
        ("n_vrotations", cfg["n_vrotations"] >= 1, ">= 1"),
        ("dropout", 0.0 <= cfg["dropout"] < 1.0, "in [0, 1)"),
    ]
    for name, ok, rule in checks:
        if not ok:
            raise ConfigError(f"{name} must be {rule}, got {cfg[name]}")
    if cfg["model"] not in ("classical", "quantum"):
        raise ConfigError(f"model must be classical or quantum, got {cfg['model']!r}")
    if cfg["vqc_mode"] not in ("four", "six"):
        raise ConfigError(f"vqc_mode must be four or six, got {cfg['vqc_mode']!r}")
    if cfg["entangle"] not in ("staircase", "ring"):
        raise ConfigError(f"entangle must be staircase or ring, got {cfg['entangle']!r}")


def _build_model(cfg, n_features: int):
    import numpy as np

    from .recurrent import Stack, StackConfig
    from .vqc import VqcShape

    if cfg["model"] == "quantum":
        shape = VqcShape(
            n_qubits=cfg["n_qubits"],
            n_qlayers=cfg["n_qlayers"],
            n_vrotations=cfg["n_vrotations"],
            entangler=cfg["entangle"],
        )
        stack_cfg = StackConfig(
            hidden=cfg["hidden"],
            model_kind="quantum",
            n_layers=cfg["n_layers"],
            dropout=cfg["dropout"],
            vqc_shape=shape,
            six_vqc=cfg["vqc_mode"] == "six",
            share_out_proj=cfg["share_out_proj"],
        )
    else:
        stack_cfg = StackConfig(
            hidden=cfg["hidden"],
            model_kind="classical",
            n_layers=cfg["n_layers"],
            dropout=cfg["dropout"],
        )
    return Stack(stack_cfg, n_features, np.random.default_rng(cfg["seed"]))


def _load_scaler(path):
    from . import datapipe

    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataError(f"no such scaler file: {path}")
    try:
        return datapipe.ScalerParams.from_dict(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed scaler file {path}: {exc}")


def _metrics_obj(cfg, actual, predicted) -> dict:
    from . import evalstats

    obj = evalstats.metric_report(actual, predicted).to_dict()
    if cfg["extended_metrics"]:
        try:
            obj["mape"] = evalstats.mape(actual, predicted)
        except DataError:
            obj["mape"] = None
        try:
            obj["r_squared"] = evalstats.r_squared(actual, predicted)
        except DataError:
            obj["r_squared"] = None
    return obj


def _cmd_synth(args) -> None:
    cfg = _resolve(args, "synth")
    _require(cfg, "days")
    if cfg["days"] < 1:
        raise ConfigError(f"days must be >= 1, got {cfg['days']}")
    from . import datapipe

    out = _out_dir(cfg)
    frame = datapipe.synth_solar(
        cfg["days"], step=cfg["step"], seed=cfg["seed"],
        noise_sd=cfg["noise_sd"], peak_mw=cfg["peak_mw"],
    )
    datapipe.save_frame(frame, out / "synth.csv")
    _write_json(out / "synth_manifest.json", {
        "days": cfg["days"],
        "step": cfg["step"],
        "seed": cfg["seed"],
        "noise_sd": cfg["noise_sd"],
        "peak_mw": cfg["peak_mw"],
        "rows": len(frame),
        "columns": list(frame.columns),
        "start": str(frame.index[0]),
    })
    print(f"wrote {out / 'synth.csv'} ({len(frame)} rows)")


def _cmd_preprocess(args) -> None:
    cfg = _resolve(args, "preprocess")
    _require(cfg, "data")
    from . import datapipe

    out = _out_dir(cfg)
    frame = datapipe.load_csv(cfg["data"], cfg["schema"])
    frame = datapipe.interpolate_to_target(frame, cfg["target_step"])
    frame = datapipe.engineer_features(frame, cfg["lags"])
    train_frame, test_frame = datapipe.split_chronological(frame, cfg["ratio"])
    scaler = datapipe.fit_scaler(train_frame)
    datapipe.save_frame(datapipe.transform(train_frame, scaler), out / "train.csv")
    datapipe.save_frame(datapipe.transform(test_frame, scaler), out / "test.csv")
    _write_json(out / "scaler.json", scaler.to_dict())
    print(f"wrote {out / 'train.csv'} ({len(train_frame)} rows), "
          f"{out / 'test.csv'} ({len(test_frame)} rows), {out / 'scaler.json'}")


def _load_windowed(cfg, scaler):
    from . import datapipe

    train_frame = datapipe.load_processed(cfg["train"])
    test_frame = datapipe.load_processed(cfg["test"])
    train_set = datapipe.make_windows(
        train_frame, cfg["window"], cfg["target"], cfg["features"], scaler
    )
    test_set = datapipe.make_windows(
        test_frame, cfg["window"], cfg["target"], cfg["features"], scaler
    )
    return train_set, test_set


def _train_once(cfg, train_set, test_set):
    from . import training

    model = _build_model(cfg, len(train_set.feature_names))
    tc = training.TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        lr=cfg["lr"], seed=cfg["seed"], shuffle_train=True,
    )
    history = training.train(model, train_set, test_set, tc)
    return model, history


def _cmd_train(args) -> None:
    cfg = _resolve(args, "train")
    _require(cfg, "train", "test", "scaler")
    _validate_run_config(cfg)
    from . import training

    out = _out_dir(cfg)
    scaler = _load_scaler(cfg["scaler"])
    train_set, test_set = _load_windowed(cfg, scaler)
    model, history = _train_once(cfg, train_set, test_set)
    history.save_csv(out / "history.csv")
    training.save_checkpoint(out / "model.ckpt", training.Checkpoint(
        model=model, seed=cfg["seed"], window=cfg["window"],
        feature_names=train_set.feature_names, target_name=cfg["target"],
        scaler=scaler,
    ))
    predictions = model.predict(test_set.inputs)
    _write_json(out / "metrics.json", _metrics_obj(cfg, test_set.targets, predictions))
    print(f"trained {cfg['model']} model for {cfg['epochs']} epochs; "
          f"final test mse {history.test_loss[-1]:.6g}")
    print(f"wrote {out / 'model.ckpt'}, {out / 'history.csv'}, {out / 'metrics.json'}")


def _predict_table(cfg):
    """Shared by predict/evaluate: scaled and physical-unit predictions."""
    from . import datapipe, training

    ckpt = training.load_checkpoint(cfg["checkpoint"])
    frame = datapipe.load_processed(cfg["data"])
    missing = [c for c in ckpt.feature_names if c not in frame.columns]
    if missing:
        raise DataError(f"dataset lacks column(s) {missing} required by the checkpoint")
    ds = datapipe.make_windows(
        frame, ckpt.window, ckpt.target_name, ckpt.feature_names, ckpt.scaler
    )
    horizon = cfg["horizon"]
    if horizon is None:
        horizon = ds.n
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if horizon > ds.n:
        raise DataError(f"horizon {horizon} exceeds the {ds.n} available windows")
    scaled_pred = ckpt.model.predict(ds.inputs[:horizon])
    scaled_actual = ds.targets[:horizon]
    stamps = frame.index[ckpt.window : ckpt.window + horizon]
    if ckpt.scaler is not None:
        actual = datapipe.inverse_transform(scaled_actual, ckpt.scaler, ckpt.target_name)
        predicted = datapipe.inverse_transform(scaled_pred, ckpt.scaler, ckpt.target_name)
    else:
        actual, predicted = scaled_actual, scaled_pred
    return stamps, actual, predicted, scaled_actual, scaled_pred


def _write_predictions(path, stamps, actual, predicted) -> None:
    with open(path, "w") as fh:
        fh.write("timestamp,actual,predicted\n")
        for ts, a, p in zip(stamps, actual, predicted):
            fh.write(f"{ts},{float(a)!r},{float(p)!r}\n")


def _cmd_predict(args) -> None:
    cfg = _resolve(args, "predict")
    _require(cfg, "checkpoint", "data")
    out = _out_dir(cfg)
    stamps, actual, predicted, _, _ = _predict_table(cfg)
    _write_predictions(out / "predictions.csv", stamps, actual, predicted)
    print(f"wrote {out / 'predictions.csv'} ({len(stamps)} rows)")


def _cmd_evaluate(args) -> None:
    cfg = _resolve(args, "evaluate")
    _require(cfg, "checkpoint", "data")
    out = _out_dir(cfg)
    stamps, actual, predicted, scaled_actual, scaled_pred = _predict_table(cfg)
    _write_predictions(out / "predictions.csv", stamps, actual, predicted)
    _write_json(out / "metrics.json", _metrics_obj(cfg, scaled_actual, scaled_pred))
    print(f"wrote {out / 'predictions.csv'} and {out / 'metrics.json'} "
          f"({len(stamps)} rows)")


def _cmd_compare(args) -> None:
    cfg = _resolve(args, "compare")
    _require(cfg, "a", "b")
    from . import evalstats
    from .training import EpochHistory

    out = _out_dir(cfg)
    hist_a = EpochHistory.load_csv(cfg["a"])
    hist_b = EpochHistory.load_csv(cfg["b"])
    if hist_a.epochs < 2 or hist_b.epochs < 2:
        raise DataError("compare needs at least 2 epochs per history")

    def tests(x, y):
        entry = {
            "pooled_independent": evalstats.t_test(x, y, "pooled_independent").to_dict()
        }
        # a paired test needs one value per matching epoch
        entry["paired"] = (
            evalstats.t_test(x, y, "paired").to_dict() if len(x) == len(y) else None
        )
        return entry

    def summary(hist, path):
        return {
            "path": str(path),
            "epochs": hist.epochs,
            "stability": evalstats.stability(hist).to_dict(),
            "convergence_epoch": evalstats.convergence_epoch(hist.test_loss),
            "final_test_loss": float(hist.test_loss[-1]),
        }

    report = {
        cfg["label_a"]: summary(hist_a, cfg["a"]),
        cfg["label_b"]: summary(hist_b, cfg["b"]),
        "train_loss": tests(hist_a.train_loss, hist_b.train_loss),
        "test_loss": tests(hist_a.test_loss, hist_b.test_loss),
    }
    _write_json(out / "compare.json", report)
    print(f"wrote {out / 'compare.json'}")


def _cmd_grid(args) -> None:
    cfg = _resolve(args, "grid")
    _require(cfg, "train", "test", "scaler")
    from . import evalstats

    varies = []
    for vary_str in getattr(args, "vary", None) or []:
        if "=" not in vary_str:
            raise ConfigError(f"--vary must look like key=v1,v2 got {vary_str!r}")
        key, values = vary_str.split("=", 1)
        key = key.strip()
        if key not in _GRID_VARY_KEYS:
            raise ConfigError(f"cannot vary {key!r}; choose from {_GRID_VARY_KEYS}")
        conv = _TRAIN_KEYS[key][0]
        try:
            parsed = [conv(v) for v in values.split(",") if v.strip()]
        except (TypeError, ValueError):
            raise ConfigError(f"invalid values for --vary {key}: {values!r}")
        if not parsed:
            raise ConfigError(f"--vary {key} lists no values")
        varies.append((key, parsed))
    if not varies:
        raise ConfigError("grid needs at least one --vary KEY=V1,V2")
    n_combos = 1
    for _, vals in varies:
        n_combos *= len(vals)
    if n_combos > 64:
        raise ConfigError(f"grid of {n_combos} combinations exceeds the limit of 64")

    out = _out_dir(cfg)
    scaler = _load_scaler(cfg["scaler"])
    keys = [k for k, _ in varies]
    rows = []
    for combo in itertools.product(*(vals for _, vals in varies)):
        run_cfg = dict(cfg)
        run_cfg.update(zip(keys, combo))
        _validate_run_config(run_cfg)
        train_set, test_set = _load_windowed(run_cfg, scaler)
        _, history = _train_once(run_cfg, train_set, test_set)
        rows.append((
            combo,
            float(history.test_loss[-1]),
            evalstats.convergence_epoch(history.test_loss),
        ))
    rows.sort(key=lambda row: row[1])
    with open(out / "grid.csv", "w") as fh:
        fh.write(",".join(keys) + ",final_test_mse,convergence_epoch\n")
        for combo, final_mse, conv_epoch in rows:
            cells = [repr(v) if isinstance(v, float) else str(v) for v in combo]
            fh.write(",".join(cells) + f",{final_mse!r},{conv_epoch}\n")
    print(f"wrote {out / 'grid.csv'} ({len(rows)} combinations)")


_HANDLERS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "compare": _cmd_compare,
    "grid": _cmd_grid,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 1
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    try:
        _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, StateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
