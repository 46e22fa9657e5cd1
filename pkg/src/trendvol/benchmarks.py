"""Benchmark forecasters: GARCH(1,1) by maximum likelihood and 10-lag
linear regressions with L1 (Lasso) or L2 (Ridge) penalties.

GARCH convention: ``var[i] = omega + alpha * var[i-1] + beta * r[i-1]**2``
so ``alpha`` is the persistence and ``beta`` the innovation coefficient.

Linear objective: ``C * penalty(coef) + sum(residual**2)`` with the
intercept unpenalized and ``penalty`` either ``sum(|coef|)`` or
``sum(coef**2)``. ``C`` is not rescaled by the sample count.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import ConvergenceError, DataError
from .lstm import loss_mape

DEFAULT_C_GRID = tuple(np.logspace(-2, -6, 5))


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float
    log_likelihood: float = float("nan")
    n: int = 0

    def __post_init__(self):
        if not (self.omega > 0 and self.alpha >= 0 and self.beta >= 0 and self.alpha + self.beta < 1):
            raise DataError(f"invalid GARCH parameters {self}")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)

    def to_json(self) -> str:
        doc = {"model": "garch", "omega": self.omega, "alpha": self.alpha, "beta": self.beta,
               "loglik": self.log_likelihood, "n": self.n}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GarchParams":
        d = json.loads(text)
        return cls(d["omega"], d["alpha"], d["beta"], d["loglik"], d["n"])


def garch_variance(omega, alpha, beta, returns, init_var) -> np.ndarray:
    """Conditional variances ``var[0..n]``; ``var[i]`` uses returns before ``i`` only."""
    r2 = np.asarray(returns, dtype=float) ** 2
    drive = omega + beta * r2
    tail = lfilter([1.0], [1.0, -alpha], drive, zi=[alpha * init_var])[0]
    return np.concatenate([[init_var], tail])


def _unpack(theta):
    a, z1, z2 = theta
    persistence = 1.0 / (1.0 + math.exp(-z1))
    share = 1.0 / (1.0 + math.exp(-z2))
    return math.exp(a), persistence * share, persistence * (1.0 - share)


def _pack(omega, alpha, beta):
    s = alpha + beta
    return np.array([math.log(omega), math.log(s / (1 - s)), math.log(alpha / beta)])


def _neg_loglik(theta, r, var0):
    try:
        omega, alpha, beta = _unpack(theta)
    except OverflowError:
        return np.inf
    if not (omega > 0 and alpha + beta < 1.0):
        # the logistic map saturates in floating point far out on the ridge
        return np.inf
    var = garch_variance(omega, alpha, beta, r[:-1], var0)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        return np.inf
    return 0.5 * float(np.sum(np.log(2 * np.pi) + np.log(var) + r * r / var))


def garch_fit(returns, restarts: int = 5, seed: int = 0, maxiter: int = 4000,
              ll_tol: float = 1.0) -> GarchParams:
    """Gaussian maximum likelihood by Nelder-Mead on an unconstrained map.

    ``omega = exp(a)``; total persistence ``alpha + beta`` and the share
    going to ``alpha`` are logistic, so any optimizer output is admissible.
    Starts from ``(0.1 * var, 0.8, 0.1)`` plus ``restarts`` seeded draws.

    When the innovation coefficient is near zero the persistence is not
    identified and the likelihood is flat along ``omega = var * (1 - alpha)``.
    Among converged optima within ``ll_tol`` log-likelihood units of the
    best, the one with the smallest ``alpha + beta`` is returned; the
    constant-variance fit ``(var, 0, 0)`` is included as a candidate.
    """
    r = np.asarray(returns, dtype=float)
    if len(r) < 50:
        raise DataError(f"GARCH needs at least 50 returns, got {len(r)}")
    if not np.all(np.isfinite(r)):
        raise DataError("non-finite returns")
    var0 = float(np.var(r, ddof=1))
    if not var0 > 0:
        raise DataError("constant return series")

    rng = np.random.default_rng(seed)
    starts = [_pack(0.1 * var0, 0.8, 0.1)]
    for _ in range(restarts):
        s = rng.uniform(0.01, 0.99)
        share = rng.uniform(0.1, 0.95)
        omega = var0 * (1 - s) * math.exp(rng.normal(0.0, 0.5))
        starts.append(_pack(omega, s * share, s * (1 - share)))

    results = []
    for x0 in starts:
        res = minimize(_neg_loglik, x0, args=(r, var0), method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-8, "fatol": 1e-10})
        if np.isfinite(res.fun):
            results.append(res)
    if not results:
        raise ConvergenceError("GARCH likelihood was not finite at any start")
    best = min(results, key=lambda res: res.fun)
    if not best.success:
        raise ConvergenceError(f"GARCH fit did not converge: {best.message}")
    # the constant-variance model (alpha = beta = 0) is nested and sits on the
    # flat ridge, so it competes as a candidate with zero persistence
    flat_fun = 0.5 * float(np.sum(np.log(2 * np.pi) + np.log(var0) + r * r / var0))
    if flat_fun <= best.fun + ll_tol:
        return GarchParams(var0, 0.0, 0.0, -flat_fun, len(r))
    near = [res for res in results if res.success and res.fun <= best.fun + ll_tol]
    chosen = min(near, key=lambda res: (sum(_unpack(res.x)[1:]), res.fun))
    omega, alpha, beta = _unpack(chosen.x)
    return GarchParams(omega, alpha, beta, -float(chosen.fun), len(r))


def garch_forecast(params: GarchParams, returns, init_var: float | None = None) -> np.ndarray:
    """One-step-ahead volatility ``sqrt(var[0..n])`` over a return series.

    Entry ``i`` uses returns ``< i`` only; the last entry forecasts the
    period after the series. ``init_var`` defaults to the unconditional
    variance.
    """
    v0 = params.unconditional_variance if init_var is None else init_var
    return np.sqrt(garch_variance(params.omega, params.alpha, params.beta, returns, v0))


def garch_simulate(omega, alpha, beta, n, seed=0, burn=500) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(n + burn)
    var = omega / (1.0 - alpha - beta)
    r = np.empty(n + burn)
    for t in range(n + burn):
        r[t] = math.sqrt(var) * eps[t]
        var = omega + alpha * var + beta * r[t] * r[t]
    return r[burn:]


def lag_column_names(feature_names, lag_len) -> list[str]:
    return [f"{f}_lag{j}" for j in range(1, lag_len + 1) for f in feature_names]


def build_lag_matrix(dataset) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Flatten each window with lag 1 (the most recent period) first.

    Columns run feature-fastest: ``f1_lag1, f2_lag1, ..., f1_lag2, ...``.
    """
    X = np.asarray(dataset.X)
    if X.ndim != 3:
        raise DataError("inconsistent window shapes")
    n, L, F = X.shape
    design = X[:, ::-1, :].reshape(n, L * F)
    return design, np.asarray(dataset.target, dtype=float), lag_column_names(dataset.feature_names, L)


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coef: np.ndarray
    p: int
    C: float
    residual_variance: float
    feature_names: tuple[str, ...] = ()
    lag_len: int = 0
    sweeps: int = 0

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef

    def coef_table(self) -> np.ndarray:
        """Coefficients as ``(n_features, lag_len)``."""
        return self.coef.reshape(self.lag_len, len(self.feature_names)).T

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("feature,lag,coef\n")
        out.write(f"intercept,0,{self.intercept!r}\n")
        table = self.coef_table()
        for i, f in enumerate(self.feature_names):
            for j in range(self.lag_len):
                out.write(f"{f},{j + 1},{float(table[i, j])!r}\n")
        return out.getvalue()

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept, "coef": [float(c) for c in self.coef], "p": self.p,
            "C": self.C, "residual_variance": self.residual_variance,
            "feature_names": list(self.feature_names), "lag_len": self.lag_len,
        }

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(d["intercept"], np.array(d["coef"], dtype=float), d["p"], d["C"],
                   d["residual_variance"], tuple(d["feature_names"]), d["lag_len"])


def linear_objective(X, y, intercept, coef, p, C) -> float:
    resid = y - intercept - X @ coef
    penalty = np.sum(np.abs(coef)) if p == 1 else np.sum(coef * coef)
    return float(C * penalty + resid @ resid)


def _soft(z, t):
    return math.copysign(max(abs(z) - t, 0.0), z)


def fit_linear(X, y, p: int, C: float, tol: float = 1e-10, max_sweeps: int = 10_000,
               feature_names=(), lag_len: int = 0) -> LinearModel:
    """Minimize ``C * ||coef||_p^p + sum(residual**2)``.

    Ridge (``p=2``) solves ``(Xc'Xc + C I) coef = Xc'yc`` on centered data;
    Lasso (``p=1``) runs cyclic coordinate descent with soft-thresholding at
    ``C / 2`` until no coefficient moves more than ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != len(y):
        raise DataError("X must be a nonempty (rows, cols) matrix matching y")
    if not C > 0:
        raise DataError("C must be positive")
    if p not in (1, 2):
        raise DataError("p must be 1 or 2")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    G = Xc.T @ Xc
    b = Xc.T @ yc
    sweeps = 0
    if p == 2:
        A = G + C * np.eye(G.shape[0])
        if np.linalg.cond(A) > 1e14:
            raise DataError(f"ridge system is numerically singular at C={C:g}")
        coef = np.linalg.solve(A, b)
    else:
        m = X.shape[1]
        coef = np.zeros(m)
        diag = np.diag(G).copy()
        Gc = np.zeros(m)  # G @ coef, maintained incrementally
        half = C / 2.0
        for sweeps in range(1, max_sweeps + 1):
            biggest = 0.0
            for j in range(m):
                if diag[j] == 0.0:
                    continue
                old = coef[j]
                rho = b[j] - Gc[j] + diag[j] * old
                new = _soft(rho, half) / diag[j]
                if new != old:
                    Gc += G[:, j] * (new - old)
                    coef[j] = new
                    biggest = max(biggest, abs(new - old))
            if biggest < tol:
                break
        else:
            raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps at C={C:g}")
    intercept = y_mean - float(x_mean @ coef)
    resid = y - intercept - X @ coef
    return LinearModel(intercept, coef, p, float(C), float(resid @ resid / len(y)),
                       tuple(feature_names), lag_len, sweeps)


def select_linear(train_set, p: int, C_grid=DEFAULT_C_GRID, fit_fraction: float = 0.8):
    """Fit on the first 80% of training windows, pick C by MAPE on the rest.

    Returns ``(best_model, {C: validation_mape})``; ties go to the earlier grid entry.
    """
    C_grid = list(C_grid)
    if not C_grid:
        raise DataError("C grid is empty")
    X, y, _ = build_lag_matrix(train_set)
    n_fit = int(math.floor(len(y) * fit_fraction))
    if n_fit < 1 or n_fit >= len(y):
        raise DataError(f"{len(y)} windows too few for a fit/validation split")
    scores = {}
    best = None
    for C in C_grid:
        try:
            model = fit_linear(X[:n_fit], y[:n_fit], p, C,
                               feature_names=train_set.feature_names, lag_len=train_set.lag_len)
        except (DataError, ConvergenceError) as exc:
            warnings.warn(f"linear fit failed at C={C:g}: {exc}")
            continue
        score = loss_mape(model.predict(X[n_fit:]), y[n_fit:])
        scores[float(C)] = score
        if best is None or score < best[0]:
            best = (score, model)
    if best is None:
        raise ConvergenceError("every linear fit in the C grid failed")
    return best[1], scores
