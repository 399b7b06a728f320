"""Error metrics and the statistical comparison machinery.

MAE/MSE/RMSE on scaled targets, paired and pooled two-sided t-tests with
p-values from the regularized incomplete beta function, Cohen's d with the
pooled sample SD, and per-run stability summaries.  Degenerate inputs
follow declared sentinel rules rather than raising: identical samples give
t=0, p=1; zero spread with distinct means gives +-inf with p=0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DataError

TEST_KINDS = ("paired", "pooled_independent")


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StatTestResult:
    t_statistic: float
    p_value: float
    cohens_d: float
    n1: int
    n2: int
    kind: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StabilityReport:
    train_loss_sd: float
    test_loss_sd: float
    mean_test_loss: float
    median_test_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


def _paired(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.ndim != 1 or y.shape != y_hat.shape:
        raise DataError(f"need equal-length vectors, got {y.shape} and {y_hat.shape}")
    if y.size == 0:
        raise DataError("need at least one sample")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def rmse(y, y_hat) -> float:
    return math.sqrt(mse(y, y_hat))


def metric_report(y, y_hat) -> MetricReport:
    m = mse(y, y_hat)
    return MetricReport(mae=mae(y, y_hat), mse=m, rmse=math.sqrt(m))


def mape(y, y_hat) -> float:
    """Mean absolute percentage error; rejects zero actuals."""
    y, y_hat = _paired(y, y_hat)
    if np.any(y == 0.0):
        raise DataError("mape undefined when an actual value is 0")
    return float(100.0 * np.mean(np.abs((y - y_hat) / y)))


def r_squared(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("r_squared undefined for constant actuals")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


# --- Student-t machinery --------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    tiny = 1e-30
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0, x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ConfigError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided p-value P(|T| >= |t|) for Student's t with df dof."""
    if df <= 0:
        raise ConfigError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


def cohens_d(a, b) -> float:
    """Pooled-SD effect size; sign follows mean(a) - mean(b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DataError("cohens_d needs at least 2 samples per group")
    diff = float(a.mean() - b.mean())
    s_p = _pooled_sd(a, b)
    if s_p == 0.0:
        if diff == 0.0:
            return 0.0
        return math.copysign(math.inf, diff)
    return diff / s_p


def _pooled_sd(a: np.ndarray, b: np.ndarray) -> float:
    n1, n2 = a.size, b.size
    var = ((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / (n1 + n2 - 2)
    return float(math.sqrt(var))


def t_test(a, b, kind: str = "paired") -> StatTestResult:
    """Two-sided t-test; paired works on differences, pooled on group means.

    The pooled standard error uses s_p * sqrt(1/n1 + 1/n2), which reduces
    to the equal-n form s_p * sqrt(2/n) when n1 = n2.
    """
    if kind not in TEST_KINDS:
        raise ConfigError(f"kind must be one of {TEST_KINDS}, got {kind!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind == "paired":
        if a.shape != b.shape or a.ndim != 1:
            raise DataError(f"paired test needs equal-length vectors, got {a.shape}, {b.shape}")
        if a.size < 2:
            raise DataError("paired test needs at least 2 pairs")
        d = a - b
        s_d = float(d.std(ddof=1))
        if s_d == 0.0:
            t = 0.0 if d.mean() == 0.0 else math.copysign(math.inf, d.mean())
        else:
            t = float(d.mean() / (s_d / math.sqrt(d.size)))
        df = d.size - 1
    else:
        if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
            raise DataError("pooled test needs two vectors of at least 2 samples")
        se = _pooled_sd(a, b) * math.sqrt(1.0 / a.size + 1.0 / b.size)
        diff = float(a.mean() - b.mean())
        if se == 0.0:
            t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        else:
            t = diff / se
        df = a.size + b.size - 2
    p = 1.0 if t == 0.0 else t_sf_two_sided(t, df)
    return StatTestResult(
        t_statistic=t,
        p_value=p,
        cohens_d=cohens_d(a, b),
        n1=a.size,
        n2=b.size,
        kind=kind,
    )


def stability(history) -> StabilityReport:
    """Loss spread across epochs; history needs train_loss and test_loss."""
    train = np.asarray(history.train_loss, dtype=float)
    test = np.asarray(history.test_loss, dtype=float)
    if train.size < 2 or test.size < 2:
        raise DataError("stability needs at least 2 epochs")
    return StabilityReport(
        train_loss_sd=float(train.std(ddof=1)),
        test_loss_sd=float(test.std(ddof=1)),
        mean_test_loss=float(test.mean()),
        median_test_loss=float(np.median(test)),
    )


def convergence_epoch(test_loss) -> int:
    """1-based first epoch whose test loss is within 1% of the minimum."""
    losses = np.asarray(test_loss, dtype=float)
    if losses.size < 1:
        raise DataError("need at least one epoch")
    return int(np.flatnonzero(losses <= 1.01 * losses.min())[0]) + 1
