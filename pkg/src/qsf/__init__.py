"""Quantum and classical LSTM forecasting toolkit for solar power series.

Submodules:
  statevec   dense statevector simulator (H, RX, RY, RZ, CNOT, <Z>)
  vqc        variational circuit: encoding, ansatz, parameter-shift grads
  autodiff   minimal reverse-mode engine over numpy arrays
  recurrent  LSTM / QLSTM cells and the stacked model
  training   MSE + Adam training loop, gradient checks, checkpoints
  datapipe   CSV ingestion, features, scaling, windowing, synthetic data
  evalstats  metrics, t-tests, effect sizes, stability summaries
  cli        the `qsf` command-line tool

This top-level module stays import-light on purpose: the CLI configures
BLAS threading env vars before numpy loads, so only the (stdlib-only)
exception types are re-exported here.
"""

from .errors import ConfigError, DataError, QsfError, StateError, TrainingError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "QsfError",
    "StateError",
    "TrainingError",
    "__version__",
]
