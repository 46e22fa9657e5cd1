"""Synthetic OHLC + trend data with a known volatility process.

Daily variance is a GARCH(1,1) recursion multiplied by an exogenous
log-normal factor ``exp(scale * h_t)`` where ``h`` is a unit-variance AR(1).
The first ``n_coupled`` trends observe ``h`` one to three days ahead with
loading ``gamma`` on top of AR(1) noise; the rest are noise only. Intraday log-price
paths are simulated as discretized Brownian motion so the Garman-Klass
estimator recovers the daily variance.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields
from datetime import date

import numpy as np

from .errors import DataError
from .market_data import TREND_ABBREVIATIONS, OhlcBar, OhlcSeries, TrendSeries


@dataclass(frozen=True)
class SynthConfig:
    n_days: int = 3000
    n_trends: int = 23
    n_coupled: int = 3
    gamma: float = 0.8
    seed: int = 0
    garch_omega: float = 1.5e-5
    garch_alpha: float = 0.8
    garch_beta: float = 0.05
    latent_phi: float = 0.95
    latent_scale: float = 0.8
    trend_phi: float = 0.5
    trend_scale: float = 0.3
    intraday_steps: int = 390
    start_date: str = "2004-10-19"
    start_price: float = 1000.0

    def validate(self) -> "SynthConfig":
        problems = []
        if self.n_days < 100:
            problems.append("n_days must be >= 100")
        if self.n_trends < 0:
            problems.append("n_trends must be >= 0")
        if not 0 <= self.n_coupled <= self.n_trends:
            problems.append("n_coupled must lie in [0, n_trends]")
        if not 0.0 <= self.gamma <= 1.0:
            problems.append("gamma must lie in [0, 1]")
        if self.garch_omega <= 0 or self.garch_alpha < 0 or self.garch_beta < 0:
            problems.append("garch parameters must be omega > 0, alpha >= 0, beta >= 0")
        if self.garch_alpha + self.garch_beta >= 1:
            problems.append("garch_alpha + garch_beta must be < 1")
        if not (-1.0 < self.latent_phi < 1.0 and -1.0 < self.trend_phi < 1.0):
            problems.append("latent_phi and trend_phi must lie in (-1, 1)")
        if self.latent_scale < 0 or self.trend_scale <= 0:
            problems.append("latent_scale must be >= 0 and trend_scale > 0")
        if self.intraday_steps < 2:
            problems.append("intraday_steps must be >= 2")
        if self.start_price <= 0:
            problems.append("start_price must be positive")
        try:
            date.fromisoformat(self.start_date)
        except ValueError:
            problems.append(f"bad start_date {self.start_date!r}")
        if problems:
            raise DataError("invalid synthetic config: " + "; ".join(problems))
        return self

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise DataError(f"unknown synthetic config key {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    kwargs[key] = int(raw)
                elif kind == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = str(raw)
            except ValueError:
                raise DataError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs).validate()

    @classmethod
    def from_text(cls, text: str) -> "SynthConfig":
        parser = configparser.ConfigParser()
        parser.read_string("[synth]\n" + text)
        return cls.from_mapping(dict(parser["synth"]))

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def trend_names(n_trends: int) -> list[str]:
    names = list(TREND_ABBREVIATIONS[:n_trends])
    names += [f"trend{j + 1:02d}" for j in range(len(names), n_trends)]
    return names


def coupled_trend_lead(j: int) -> int:
    """Lead (in days) of the j-th coupled trend over volatility."""
    return 1 + j % 3


def _ar1(rng, phi, n, size=None):
    """Unit-variance stationary AR(1) paths, shape ``(n,)`` or ``(size, n)``."""
    shape = (n,) if size is None else (size, n)
    eps = rng.standard_normal(shape)
    out = np.empty(shape)
    scale = math.sqrt(1.0 - phi * phi)
    out[..., 0] = eps[..., 0]
    for t in range(1, n):
        out[..., t] = phi * out[..., t - 1] + scale * eps[..., t]
    return out


def synth_generate(config: SynthConfig, seed: int | None = None) -> tuple[OhlcSeries, list[TrendSeries]]:
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.n_days
    burn = 250
    total = burn + n
    lead_max = 3

    h = _ar1(rng, config.latent_phi, total + lead_max)
    kappa = config.latent_scale
    multiplier = np.exp(kappa * h[:total] - 0.5 * kappa * kappa)

    steps = config.intraday_steps
    z = rng.standard_normal((total, steps))
    eps = z.sum(axis=1) / math.sqrt(steps)

    omega, a_g, b_g = config.garch_omega, config.garch_alpha, config.garch_beta
    g = omega / (1.0 - a_g - b_g)
    r = np.empty(total)
    var = np.empty(total)
    r_prev = 0.0
    for t in range(total):
        if t > 0:
            g = omega + a_g * g + b_g * r_prev * r_prev
        var[t] = g * multiplier[t]
        r[t] = math.sqrt(var[t]) * eps[t]
        r_prev = r[t]

    # intraday paths for the kept days; open equals the previous close
    keep = slice(burn, total)
    paths = np.cumsum(z[keep], axis=1) * np.sqrt(var[keep] / steps)[:, None]
    high_rel = np.maximum(paths.max(axis=1), 0.0)
    low_rel = np.minimum(paths.min(axis=1), 0.0)
    close_rel = paths[:, -1]

    day0 = np.datetime64(config.start_date, "D")
    day0 = np.busday_offset(day0, 0, roll="forward")
    days = [d.astype(object) for d in np.busday_offset(day0, np.arange(n), roll="forward")]

    log_open = math.log(config.start_price) + np.concatenate([[0.0], np.cumsum(close_rel)[:-1]])
    bars = []
    for i in range(n):
        o = math.exp(log_open[i])
        bars.append(OhlcBar(
            days[i], o,
            o * math.exp(high_rel[i]), o * math.exp(low_rel[i]),
            o * math.exp(close_rel[i]), o * math.exp(close_rel[i]),
        ))

    names = trend_names(config.n_trends)
    noise = _ar1(rng, config.trend_phi, total, size=config.n_trends) if config.n_trends else np.empty((0, total))
    gamma = config.gamma
    trends = []
    for j, name in enumerate(names):
        s = noise[j]
        if j < config.n_coupled:
            lead = coupled_trend_lead(j)
            s = gamma * h[lead:lead + total] + math.sqrt(1.0 - gamma * gamma) * s
        level = np.exp(config.trend_scale * s[keep])
        trends.append(TrendSeries(name, tuple(days), level / level[0]))
    return OhlcSeries(tuple(bars)), trends
