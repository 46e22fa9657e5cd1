import json
import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendvol.errors import DataError, TrainingError
from trendvol.lstm import (
    AdamState, LstmParams, LstmState, TrainConfig, adam_step, forward_step, forward_window,
    grad_window, init_params, loss_mape, model_from_json, model_to_json, predict, train,
    validation_split,
)
from trendvol.scheme import INF, Scheme, SchemeDataset


def random_params(rng, n_features, cell_dim, scale=0.5):
    shape = (cell_dim, 1 + n_features)
    W = [rng.normal(0, scale, shape) for _ in range(4)]
    b = [rng.normal(0, scale, cell_dim) for _ in range(4)]
    return LstmParams(*W, *b, alpha=float(rng.uniform(0.5, 1.5)), beta=rng.normal(0, scale, cell_dim))


def zero_params(n_features, cell_dim=1):
    z = np.zeros((cell_dim, 1 + n_features))
    zb = np.zeros(cell_dim)
    return LstmParams(z, z, z, z, zb, zb, zb, zb, alpha=0.0, beta=zb)


def make_dataset(X, seed, target, dt=1):
    n, L, F = X.shape
    idx = np.arange(n) + L
    return SchemeDataset(
        scheme=Scheme(dt, INF), lag_len=L, feature_names=[f"f{j}" for j in range(F)], X=X,
        seed_sigma=np.asarray(seed, float), feedback_sigma=np.repeat(np.asarray(seed, float)[:, None], L, 1),
        target=np.asarray(target, float), end_index=idx, end_dates=tuple(range(n)),
        first_day=idx - L, last_day=idx + 1, stats_mean=np.zeros(F), stats_std=np.ones(F),
    )


def step_oracle(params, I_prev, s, x, dps=40):
    """One cell update in extended precision, written out gate by gate."""
    with mpmath.workdps(dps):
        mp = mpmath.mpf
        v = [mp(float(s))] + [mp(float(xi)) for xi in x]
        sig = lambda z: 1 / (1 + mpmath.exp(-z))  # noqa: E731
        I_new, out = [], mp(float(params.alpha))
        for h in range(params.cell_dim):
            pre = {g: sum(mp(float(w)) * vi for w, vi in zip(getattr(params, f"W_{g}")[h], v))
                   + mp(float(getattr(params, f"b_{g}")[h])) for g in ("f", "C", "Itilde", "o")}
            f, c, o = sig(pre["f"]), sig(pre["C"]), sig(pre["o"])
            g = mpmath.tanh(pre["Itilde"])
            I = f * mp(float(I_prev[h])) + c * g
            I_new.append(I)
            out += mp(float(params.beta[h])) * o * mpmath.tanh(I)
        return [float(v) for v in I_new], float(out)


# ---------------------------------------------------------------- init

def test_init_constant_fill():
    p = init_params(2, 1, 0.1)
    flat = p.flatten()
    assert np.all(flat == 0.1)
    assert p.W_f.shape == (1, 3)


def test_init_shapes_and_determinism():
    p = init_params(4, cell_dim=3)
    assert p.W_f.size == 3 * 5 and p.beta.shape == (3,)
    q = init_params(4, cell_dim=3)
    np.testing.assert_array_equal(p.flatten(), q.flatten())
    with pytest.raises(DataError):
        init_params(2, 1, 0.0)
    with pytest.raises(DataError):
        init_params(2, 1, 0.1, init_mode="bogus")


def test_init_normalized_mode_is_seeded():
    a = init_params(3, 2, init_mode="normalized", rng=np.random.default_rng(1))
    b = init_params(3, 2, init_mode="normalized", rng=np.random.default_rng(1))
    np.testing.assert_array_equal(a.W_o, b.W_o)
    assert np.all(np.abs(a.W_f) <= math.sqrt(6 / 6))


# ---------------------------------------------------------------- forward

def test_zero_params_fixed_point():
    state, s = forward_step(zero_params(3), LstmState(np.zeros(1), 0.7), np.ones(3))
    assert s == 0.0 and state.I[0] == 0.0


def test_saturated_gates_hold_memory():
    p = zero_params(2)
    p = replace(p, b_f=np.array([20.0]), b_C=np.array([-20.0]))
    state = LstmState(np.array([0.37]), 0.1)
    for x in np.random.default_rng(0).normal(size=(30, 2)):
        state, _ = forward_step(p, state, x)
    assert state.I[0] == pytest.approx(0.37, rel=1e-6)


def test_exact_memory_when_forget_is_one():
    # f == 1 and c == 0 exactly (bias beyond float saturation) keep I bit-for-bit
    p = replace(zero_params(2), b_f=np.array([1e3]), b_C=np.array([-1e3]))
    state = LstmState(np.array([-0.25]), 0.1)
    for x in np.random.default_rng(1).normal(size=(50, 2)):
        state, _ = forward_step(p, state, x)
    assert state.I[0] == -0.25


@pytest.mark.parametrize("cell_dim", [1, 3])
def test_forward_step_matches_extended_precision(cell_dim):
    rng = np.random.default_rng(cell_dim)
    for _ in range(10):
        p = random_params(rng, 3, cell_dim)
        I0, s0, x = rng.normal(size=cell_dim), float(rng.uniform(0.5, 1.5)), rng.normal(size=3)
        state, s = forward_step(p, LstmState(I0, s0), x)
        I_want, s_want = step_oracle(p, I0, s0, x)
        np.testing.assert_allclose(state.I, I_want, rtol=0, atol=1e-12)
        assert s == pytest.approx(s_want, abs=1e-12)


def test_forward_window_is_unrolled_steps():
    rng = np.random.default_rng(4)
    p = random_params(rng, 2, 2)
    window = rng.normal(size=(6, 2))
    state = LstmState(np.zeros(2), 0.9)
    for x in window:
        state, s = forward_step(p, state, x)
    assert forward_window(p, window, 0.9) == pytest.approx(s, abs=1e-14)
    one = forward_window(p, window[:1], 0.9)
    assert one == pytest.approx(forward_step(p, LstmState(np.zeros(2), 0.9), window[0])[1], abs=1e-15)


def test_forward_window_zero_params_constant():
    p = replace(zero_params(3), alpha=0.42)
    for w in np.random.default_rng(0).normal(size=(5, 10, 3)):
        assert forward_window(p, w, 1.0) == 0.42
    with pytest.raises(DataError):
        forward_window(p, np.empty((0, 3)), 1.0)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_prediction_bounded_by_beta(seed, cell_dim):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 2, cell_dim, scale=3.0)
    s = forward_window(p, rng.normal(0, 5, size=(8, 2)), float(rng.normal()))
    assert abs(s - p.alpha) <= np.abs(p.beta).sum() + 1e-12


def test_forward_rejects_non_finite():
    with pytest.raises(DataError):
        forward_step(zero_params(1), LstmState(np.zeros(1), 0.1), [np.nan])


# ---------------------------------------------------------------- loss

def test_loss_mape_values():
    y = np.array([1.0, 2.0, 4.0])
    assert loss_mape(y, y) == 0.0
    assert loss_mape(1.1 * y, y) == pytest.approx(10.0, abs=1e-12)
    pred = np.array([1.5, 1.0, 5.0])
    assert loss_mape(pred, y) == pytest.approx(100 * (0.5 + 0.5 + 0.25) / 3, abs=1e-12)
    with pytest.raises(DataError):
        loss_mape([1.0], [0.0])


# ---------------------------------------------------------------- gradients

_LD = np.longdouble


def _loss_ld(theta, template, window, seed, target):
    """Window loss evaluated in extended (long double) precision from a flat vector."""
    H, F1 = template.W_f.shape
    pos = 0

    def take(size, shape):
        nonlocal pos
        out = theta[pos:pos + size].reshape(shape)
        pos += size
        return out

    W = [take(H * F1, (H, F1)) for _ in range(4)]
    b = [take(H, (H,)) for _ in range(4)]
    alpha = theta[pos]
    beta = theta[pos + 1:pos + 1 + H]
    sig = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
    I = np.zeros(H, dtype=_LD)
    s = _LD(seed)
    for x in np.asarray(window, dtype=_LD):
        v = np.concatenate([[s], x])
        f, c, o = sig(W[0] @ v + b[0]), sig(W[1] @ v + b[1]), sig(W[3] @ v + b[3])
        I = f * I + c * np.tanh(W[2] @ v + b[2])
        s = alpha + beta @ (o * np.tanh(I))
    return abs(s - _LD(target)) / _LD(target)


def fd_check(p, window, seed, target, h_rel=1e-6):
    """Worst relative gap between BPTT and central differences (h = 1e-6 relative)."""
    g = grad_window(p, window, seed, target).flatten()
    theta = p.flatten().astype(_LD)
    worst = 0.0
    for i in range(theta.size):
        h = _LD(h_rel) * max(_LD(1), abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd = float((_loss_ld(up, p, window, seed, target) - _loss_ld(dn, p, window, seed, target)) / (2 * h))
        worst = max(worst, abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-6))
    return worst


def gradient_instances(n=25, lag=10, n_features=3, cell_dims=(1, 3)):
    """Seeded random (params, window, seed, target) draws away from the loss kink."""
    out = []
    seed = 0
    while len(out) < n:
        rng = np.random.default_rng(seed)
        seed += 1
        cell_dim = cell_dims[len(out) % len(cell_dims)]
        p = random_params(rng, n_features, cell_dim)
        window = rng.normal(size=(lag, n_features))
        s0 = float(rng.uniform(0.5, 1.5))
        target = float(rng.uniform(0.3, 2.0))
        pred = forward_window(p, window, s0)
        if abs(pred - target) / target > 1e-3:
            out.append((p, window, s0, target))
    return out


def test_gradient_matches_finite_differences():
    worst = max(fd_check(*inst) for inst in gradient_instances())
    assert worst < 1e-5


def test_gradient_with_teacher_forcing():
    rng = np.random.default_rng(9)
    p = random_params(rng, 2, 2)
    w = rng.normal(size=(5, 2))
    fb = rng.uniform(0.5, 1.5, 5)
    g = grad_window(p, w, fb[0], 0.8, feedback=fb).flatten()
    theta = p.flatten()
    for i in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        f = lambda t: abs(forward_window(p.unflatten(t), w, fb[0], fb) - 0.8) / 0.8  # noqa: E731
        fd = (f(up) - f(dn)) / (2 * h)
        assert abs(g[i] - fd) <= 1e-5 * max(abs(g[i]), abs(fd), 1e-6)


def test_zero_params_gradient_reduction():
    p = replace(zero_params(3), alpha=0.5)
    g = grad_window(p, np.zeros((10, 3)), 1.0, 0.8)
    # sign(alpha - y) / y with alpha = 0.5 below y = 0.8
    assert g.alpha == pytest.approx(-1 / 0.8)
    # o * tanh(I) is zero throughout, so beta and every gate weight get no gradient
    assert np.all(g.beta == 0.0)
    for name in ("W_f", "W_C", "W_Itilde", "W_o", "b_f", "b_C", "b_Itilde", "b_o"):
        assert np.all(getattr(g, name) == 0.0), name


def test_dead_beta_path():
    # I stays zero (candidate gate zeroed), so the loss does not depend on beta
    rng = np.random.default_rng(2)
    p = random_params(rng, 2, 1)
    p = replace(p, W_Itilde=np.zeros((1, 3)), b_Itilde=np.zeros(1))
    w = rng.normal(size=(6, 2))
    p2 = replace(p, beta=2 * p.beta)
    assert forward_window(p, w, 1.0) == forward_window(p2, w, 1.0)
    assert grad_window(p, w, 1.0, 0.3).beta[0] == 0.0


def test_kink_subgradient_is_zero():
    p = replace(zero_params(2), alpha=0.6)
    g = grad_window(p, np.zeros((3, 2)), 1.0, 0.6)
    assert np.all(g.flatten() == 0.0)


# ---------------------------------------------------------------- Adam

def test_adam_zero_gradient():
    p = init_params(2)
    opt = AdamState.zeros(p)
    opt2, p2 = adam_step(opt, p, p.unflatten(np.zeros(p.flatten().size)))
    np.testing.assert_array_equal(p2.flatten(), p.flatten())
    assert opt2.t == 1


def test_adam_first_step_is_signed_lr():
    p = init_params(2)
    g = np.random.default_rng(0).normal(size=p.flatten().size)
    _, p2 = adam_step(AdamState.zeros(p, lr=1e-3), p, p.unflatten(g))
    np.testing.assert_allclose(p2.flatten() - p.flatten(), -1e-3 * np.sign(g), rtol=1e-4)


def test_adam_minimizes_quadratic():
    p = replace(zero_params(1), alpha=0.0)
    opt = AdamState.zeros(p, lr=0.01)
    for _ in range(2000):
        grad = p.unflatten(np.zeros(p.flatten().size))
        grad = replace(grad, alpha=2 * (p.alpha - 3.0))
        opt, p = adam_step(opt, p, grad)
    assert abs(p.alpha - 3.0) < 1e-3
    assert np.all(opt.v >= 0)


def test_adam_rejects_non_finite():
    p = init_params(1)
    with pytest.raises(TrainingError):
        adam_step(AdamState.zeros(p), p, p.unflatten(np.full(p.flatten().size, np.nan)))


# ---------------------------------------------------------------- training

def memorization_dataset(n=20, lag=10, n_features=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, lag, n_features))
    seed_sigma = rng.uniform(0.8, 1.2, n)
    target = 1.0 + 0.3 * np.tanh(X[:, -1, 0])
    return make_dataset(X, seed_sigma, target)


def test_validation_split_chronological_and_random():
    cfg = TrainConfig(validation_fraction=0.2)
    tr, val = validation_split(20, cfg)
    np.testing.assert_array_equal(val, np.arange(16, 20))
    tr2, val2 = validation_split(20, replace(cfg, validation_mode="random"))
    assert len(val2) == 4 and set(tr2) | set(val2) == set(range(20))
    with pytest.raises(DataError):
        validation_split(1, cfg)


def test_train_is_reproducible():
    ds = memorization_dataset()
    cfg = TrainConfig(epochs=15, batch_size=4, seed=3)
    a, b = train(ds, cfg), train(ds, cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    assert a.history_csv() == b.history_csv()


def test_train_returns_best_validation_epoch():
    ds = memorization_dataset()
    res = train(ds, TrainConfig(epochs=30, batch_size=4, lr=0.01))
    vals = [h.val_mape for h in res.history]
    assert res.best_epoch == int(np.argmin(vals))
    pred = predict(res.params, ds)
    assert loss_mape(pred[16:], ds.target[16:]) == pytest.approx(vals[res.best_epoch], rel=1e-12)


def test_train_reduces_training_loss():
    ds = memorization_dataset()
    res = train(ds, TrainConfig(epochs=200, batch_size=4, lr=0.01))
    assert res.history[-1].train_mape < res.history[0].train_mape


def test_initial_alpha_is_mean_training_target():
    ds = memorization_dataset()
    res = train(ds, TrainConfig(epochs=0))
    assert res.params.alpha == pytest.approx(np.mean(ds.target[:16]))
    assert res.params.W_f[0, 0] == 0.05


def test_train_divergence_reports_epoch():
    # tiny targets and an absurd step size push the relative error past float range
    ds = memorization_dataset()
    tiny = make_dataset(ds.X, ds.seed_sigma, ds.target * 1e-300)
    with pytest.raises(TrainingError) as info:
        train(tiny, TrainConfig(epochs=3, lr=1e300, batch_size=4))
    assert info.value.last_finite_epoch == 0


def test_train_too_few_windows():
    ds = memorization_dataset(n=1)
    with pytest.raises(DataError):
        train(ds, TrainConfig(epochs=1))


def test_teacher_forcing_trains():
    ds = memorization_dataset()
    res = train(ds, TrainConfig(epochs=5, batch_size=4, teacher_forcing=True))
    assert np.all(np.isfinite(predict(res.params, ds, teacher_forcing=True)))


def test_predict_single_window_and_purity():
    ds = memorization_dataset(n=3)
    p = random_params(np.random.default_rng(0), 3, 1)
    one = ds.subset([1])
    assert predict(p, one)[0] == pytest.approx(forward_window(p, one.X[0], one.seed_sigma[0]), abs=1e-15)
    np.testing.assert_array_equal(predict(p, ds), predict(p, ds))
    assert np.isfinite(loss_mape(predict(p, ds), ds.target))


def _scaled(ds, factor):
    return make_dataset(ds.X, ds.seed_sigma * factor, ds.target * factor)


def test_normalized_target_is_scale_free():
    # multiplying every volatility by a power of two leaves the normalized
    # problem bit-identical, so predictions scale by exactly that factor
    ds = memorization_dataset()
    cfg = TrainConfig(epochs=20, batch_size=4, lr=0.01, normalize_target=True)
    a, b = train(ds, cfg), train(_scaled(ds, 4.0), cfg)
    assert b.target_scale == 4.0 * a.target_scale
    assert [h.train_mape for h in a.history] == [h.train_mape for h in b.history]
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    pa = predict(a.params, ds, target_scale=a.target_scale)
    pb = predict(b.params, _scaled(ds, 4.0), target_scale=b.target_scale)
    np.testing.assert_array_equal(4.0 * pa, pb)


def test_raw_target_is_default():
    res = train(memorization_dataset(), TrainConfig(epochs=0))
    assert res.target_scale == 1.0
    assert res.params.alpha == pytest.approx(np.mean(memorization_dataset().target[:16]))


# ---------------------------------------------------------------- serialization

def test_model_json_roundtrip_bit_exact():
    p = random_params(np.random.default_rng(7), 3, 2)
    text = model_to_json(p, feature_order=["a", "b", "c"], scheme={"dt": 3, "k": "inf"},
                         normalization={"mean": [0.1, 0.2, 0.3]}, config=TrainConfig(), best_epoch=4)
    q, doc = model_from_json(text)
    np.testing.assert_array_equal(q.flatten(), p.flatten())
    assert doc["cell_dim"] == 2 and doc["n_features"] == 3
    assert doc["shapes"]["W_f"] == [2, 4]
    assert list(json.loads(text)) == sorted(json.loads(text))
    with pytest.raises(DataError):
        model_from_json(json.dumps({"format": "other"}))
