import sys
import time
from pathlib import Path

import numpy as np
import pytest

from trendvol.market_data import OhlcBar, OhlcSeries, TrendSeries, assemble_panel, split_train_test
from trendvol.synth import SynthConfig, synth_generate

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def synth_default():
    """Default synthetic data set (gamma 0.8, 3000 days, seed 0)."""
    return synth_generate(SynthConfig())


@pytest.fixture(scope="session")
def synth_panel(synth_default):
    return assemble_panel(*synth_default)


@pytest.fixture(scope="session")
def synth_split(synth_panel):
    return split_train_test(synth_panel, 0.7)


def make_bars(closes, start="2020-01-01", spread=0.01):
    """Business-day bars with open = previous close and a symmetric high/low band."""
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(len(closes)), roll="forward")
    bars = []
    prev = closes[0]
    for d, c in zip(days, closes):
        o = prev
        hi = max(o, c) * (1 + spread)
        lo = min(o, c) * (1 - spread)
        bars.append(OhlcBar(d.astype(object), o, hi, lo, c, c))
        prev = c
    return OhlcSeries(tuple(bars))


def make_trend(name, series: OhlcSeries, values=None, seed=0):
    rng = np.random.default_rng(seed)
    n = len(series)
    values = rng.uniform(0.5, 1.5, n) if values is None else np.asarray(values, float)
    return TrendSeries(name, tuple(series.dates), values)


def small_panel(n=300, n_trends=2, seed=0):
    rng = np.random.default_rng(seed)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, n)))
    ohlc = make_bars(closes)
    trends = [make_trend(f"t{j}", ohlc, seed=seed + j + 1) for j in range(n_trends)]
    return assemble_panel(ohlc, trends)


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")
    config.stash[ACCEPTANCE] = []


@pytest.hookimpl(wrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    setattr(item, f"rep_{rep.when}", rep)
    return rep


@pytest.fixture(autouse=True)
def _acceptance_line(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is None:
        yield
        return
    number, title = marker.args
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"criterion {number:>2} {status}  {title}  ({elapsed:.1f}s)"
    request.config.stash[ACCEPTANCE].append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
