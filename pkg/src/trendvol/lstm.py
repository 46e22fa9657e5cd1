"""Single-block LSTM volatility model with prediction feedback.

At step ``i`` the gates see ``v = (sigma_hat_i, x_i)``::

    f = sigmoid(v . W_f + b_f)           forget
    c = sigmoid(v . W_C + b_C)           input weight
    g = tanh(v . W_Itilde + b_Itilde)    candidate information
    I = f * I_prev + c * g               cell state
    o = sigmoid(v . W_o + b_o)           output gate
    sigma_hat_next = alpha + beta . (o * tanh(I))

The prediction is fed back as the next step's ``sigma_hat``. A window is
run free-running from ``I = 0`` and ``sigma_hat = seed_sigma``; the last
prediction is compared with the target under absolute percentage error.
Gradients are exact reverse-mode through the unrolled window (BPTT),
including the feedback path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DataError, TrainingError

GATES = ("f", "C", "Itilde", "o")
_PARAM_FIELDS = ("W_f", "W_C", "W_Itilde", "W_o", "b_f", "b_C", "b_Itilde", "b_o", "alpha", "beta")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LstmParams:
    """Gate weights ``W_*`` have shape ``(cell_dim, 1 + n_features)``; column 0
    multiplies the fed-back volatility."""

    W_f: np.ndarray
    W_C: np.ndarray
    W_Itilde: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_C: np.ndarray
    b_Itilde: np.ndarray
    b_o: np.ndarray
    alpha: float
    beta: np.ndarray

    @property
    def cell_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def n_features(self) -> int:
        return self.W_f.shape[1] - 1

    def stacked(self):
        W = np.concatenate([self.W_f, self.W_C, self.W_Itilde, self.W_o])
        b = np.concatenate([self.b_f, self.b_C, self.b_Itilde, self.b_o])
        return W, b

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, n)) for n in _PARAM_FIELDS])

    def unflatten(self, flat) -> "LstmParams":
        flat = np.asarray(flat, dtype=float)
        out, pos = {}, 0
        for name in _PARAM_FIELDS:
            ref = np.asarray(getattr(self, name))
            size = ref.size
            chunk = flat[pos:pos + size]
            out[name] = float(chunk[0]) if name == "alpha" else chunk.reshape(ref.shape).copy()
            pos += size
        if pos != flat.size:
            raise DataError("flat parameter vector has the wrong length")
        return LstmParams(**out)

    def to_dict(self) -> dict:
        d = {name: np.asarray(getattr(self, name)).tolist() for name in _PARAM_FIELDS}
        d["alpha"] = float(self.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LstmParams":
        kw = {name: np.array(d[name], dtype=float) for name in _PARAM_FIELDS if name != "alpha"}
        return cls(alpha=float(d["alpha"]), **kw)


@dataclass(frozen=True)
class LstmState:
    I: np.ndarray
    sigma_hat: float


def init_params(n_features: int, cell_dim: int = 1, init_constant: float = 0.05,
                alpha: float | None = None, init_mode: str = "constant",
                rng: np.random.Generator | None = None) -> LstmParams:
    """Every weight and bias equal to ``init_constant``.

    ``alpha`` defaults to ``init_constant`` too; training seeds it with the
    mean training target. ``init_mode="normalized"`` instead draws gate
    weights from the normalized (Glorot) uniform range.
    """
    if n_features < 1 or cell_dim < 1:
        raise DataError("n_features and cell_dim must be >= 1")
    if not init_constant > 0:
        raise DataError("init_constant must be positive")
    shape = (cell_dim, 1 + n_features)
    if init_mode == "constant":
        W = [np.full(shape, init_constant) for _ in GATES]
    elif init_mode == "normalized":
        rng = rng or np.random.default_rng(0)
        bound = math.sqrt(6.0 / (shape[0] + shape[1]))
        W = [rng.uniform(-bound, bound, shape) for _ in GATES]
    else:
        raise DataError(f"unknown init_mode {init_mode!r}")
    b = [np.full(cell_dim, init_constant) for _ in GATES]
    return LstmParams(*W, *b, alpha=float(init_constant if alpha is None else alpha),
                      beta=np.full(cell_dim, init_constant))


def forward_step(params: LstmParams, state: LstmState, x_i) -> tuple[LstmState, float]:
    x_i = np.asarray(x_i, dtype=float)
    if not (np.all(np.isfinite(x_i)) and math.isfinite(state.sigma_hat)):
        raise DataError("non-finite input to forward_step")
    W, b = params.stacked()
    H = params.cell_dim
    v = np.concatenate([[state.sigma_hat], x_i])
    a = W @ v + b
    f, c, o = _sigmoid(a[:H]), _sigmoid(a[H:2 * H]), _sigmoid(a[3 * H:])
    g = np.tanh(a[2 * H:3 * H])
    I = f * state.I + c * g
    s = float(params.alpha + params.beta @ (o * np.tanh(I)))
    return LstmState(I, s), s


def _forward_batch(params, X, seed, feedback=None, keep=False):
    """Run windows ``X`` (B, L, F) from seeds (B,). Returns predictions and an optional tape."""
    W, b = params.stacked()
    H = params.cell_dim
    B, L, _ = X.shape
    I = np.zeros((B, H))
    s = np.asarray(seed, dtype=float).copy()
    tape = []
    for t in range(L):
        s_in = s if feedback is None else feedback[:, t]
        v = np.concatenate([s_in[:, None], X[:, t, :]], axis=1)
        a = v @ W.T + b
        f = _sigmoid(a[:, :H])
        c = _sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = _sigmoid(a[:, 3 * H:])
        I_prev = I
        I = f * I_prev + c * g
        tI = np.tanh(I)
        h = o * tI
        s = params.alpha + h @ params.beta
        if keep:
            tape.append((v, f, c, g, o, I_prev, tI, h))
    return s, tape


def forward_window(params: LstmParams, window, seed_sigma: float, feedback=None) -> float:
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] == 0:
        raise DataError("window must be a nonempty (lag_len, n_features) matrix")
    fb = None if feedback is None else np.asarray(feedback, dtype=float)[None, :]
    s, _ = _forward_batch(params, window[None], [seed_sigma], fb)
    return float(s[0])


def loss_mape(predictions, targets) -> float:
    """Mean absolute percentage error, in percent."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape or p.size == 0:
        raise DataError("predictions and targets must have equal nonzero length")
    if np.any(y <= 0):
        raise DataError("MAPE needs strictly positive targets")
    return float(100.0 * np.mean(np.abs(p - y) / y))


def _grad_batch(params, X, seed, target, feedback=None):
    """Mean over the batch of ``|sigma_hat - y| / y`` and its gradient."""
    W, _ = params.stacked()
    H = params.cell_dim
    B = X.shape[0]
    pred, tape = _forward_batch(params, X, seed, feedback, keep=True)
    loss = float(np.mean(np.abs(pred - target) / target))
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dalpha = 0.0
    dbeta = np.zeros(H)
    ds = np.sign(pred - target) / target / B
    dI_next = np.zeros((B, H))
    for v, f, c, g, o, I_prev, tI, h in reversed(tape):
        dalpha += ds.sum()
        dbeta += h.T @ ds
        dh = ds[:, None] * params.beta[None, :]
        do = dh * tI
        dI = dI_next + dh * o * (1.0 - tI * tI)
        da = np.concatenate([
            dI * I_prev * f * (1.0 - f),
            dI * g * c * (1.0 - c),
            dI * c * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dW += da.T @ v
        db += da.sum(axis=0)
        ds = (da @ W)[:, 0] if feedback is None else np.zeros(B)
        dI_next = dI * f
    grads = LstmParams(
        dW[:H], dW[H:2 * H], dW[2 * H:3 * H], dW[3 * H:],
        db[:H], db[H:2 * H], db[2 * H:3 * H], db[3 * H:],
        alpha=float(dalpha), beta=dbeta,
    )
    if not np.all(np.isfinite(grads.flatten())):
        raise TrainingError("non-finite gradient")
    return loss, grads


def grad_window(params: LstmParams, window, seed_sigma: float, target: float, feedback=None) -> LstmParams:
    """Exact gradient of ``|sigma_hat - target| / target`` for one window.

    At ``sigma_hat == target`` the subgradient 0 is used.
    """
    if not target > 0:
        raise DataError("target must be positive")
    window = np.asarray(window, dtype=float)
    fb = None if feedback is None else np.asarray(feedback, dtype=float)[None, :]
    _, grads = _grad_batch(params, window[None], np.array([seed_sigma], dtype=float),
                           np.array([target], dtype=float), fb)
    return grads


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: LstmParams, **hyper) -> "AdamState":
        n = params.flatten().size
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(opt: AdamState, params: LstmParams, grads: LstmParams) -> tuple[AdamState, LstmParams]:
    g = grads.flatten()
    if not np.all(np.isfinite(g)):
        raise TrainingError("non-finite gradient in adam_step")
    theta = params.flatten()
    if g.shape != theta.shape:
        raise DataError("gradient and parameter shapes differ")
    t = opt.t + 1
    m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g
    v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g * g
    m_hat = m / (1.0 - opt.beta1 ** t)
    v_hat = v / (1.0 - opt.beta2 ** t)
    theta = theta - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return replace(opt, m=m, v=v, t=t), params.unflatten(theta)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 600
    lag_len: int = 10
    validation_fraction: float = 0.2
    shuffle: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    init_constant: float = 0.05
    cell_dim: int = 1
    init_mode: str = "constant"
    teacher_forcing: bool = False
    validation_mode: str = "chronological"
    normalize_target: bool = False

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise DataError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.cell_dim < 1:
            raise DataError("batch_size and cell_dim must be >= 1, epochs >= 0")
        if self.validation_mode not in ("chronological", "random"):
            raise DataError(f"unknown validation_mode {self.validation_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mape: float
    val_mape: float


@dataclass
class TrainResult:
    params: LstmParams
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    target_scale: float = 1.0

    def history_csv(self) -> str:
        lines = ["epoch,train_mape,val_mape"]
        lines += [f"{h.epoch},{h.train_mape!r},{h.val_mape!r}" for h in self.history]
        return "\n".join(lines) + "\n"


def validation_split(n: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    n_val = max(1, int(math.floor(n * config.validation_fraction)))
    if n - n_val < 1:
        raise DataError(f"{n} windows leave nothing to train on after the validation split")
    if config.validation_mode == "chronological":
        idx = np.arange(n)
    else:
        idx = np.random.default_rng(config.seed).permutation(n)
        idx = np.concatenate([np.sort(idx[: n - n_val]), np.sort(idx[n - n_val:])])
    return idx[: n - n_val], idx[n - n_val:]


def _predict_arrays(params, X, seed, feedback, chunk=4096):
    out = []
    for i in range(0, X.shape[0], chunk):
        fb = None if feedback is None else feedback[i:i + chunk]
        out.append(_forward_batch(params, X[i:i + chunk], seed[i:i + chunk], fb)[0])
    return np.concatenate(out) if out else np.empty(0)


def train(train_set, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch Adam on the MAPE loss with a held-out validation tail.

    Returns the parameters from the epoch with the lowest validation MAPE.
    Epoch 0 in the history is the initial parameter set.

    With ``normalize_target`` every volatility series (seed, feedback and
    target) is divided by the mean training target, so the network works
    near unit scale; ``predict`` undoes this through ``target_scale``. A
    full z-score is not offered because MAPE needs positive targets.
    """
    n = len(train_set)
    if n < 2:
        raise DataError("need at least 2 windows to train")
    tr_idx, val_idx = validation_split(n, config)
    X, seed, y = train_set.X, train_set.seed_sigma, train_set.target
    fb = train_set.feedback_sigma if config.teacher_forcing else None
    if np.any(y <= 0):
        raise DataError("training targets must be positive")
    scale = float(np.mean(y[tr_idx])) if config.normalize_target else 1.0
    if scale != 1.0:
        seed, y = seed / scale, y / scale
        fb = None if fb is None else fb / scale

    rng = np.random.default_rng(config.seed)
    params = init_params(train_set.n_features, config.cell_dim, config.init_constant,
                         alpha=float(np.mean(y[tr_idx])), init_mode=config.init_mode, rng=rng)
    opt = AdamState.zeros(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    def evaluate(p):
        pred = _predict_arrays(p, X, seed, fb)
        return loss_mape(pred[tr_idx], y[tr_idx]), loss_mape(pred[val_idx], y[val_idx])

    tm, vm = evaluate(params)
    result = TrainResult(params, [EpochRecord(0, tm, vm)], 0, scale)
    best_val = vm
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(tr_idx) if config.shuffle else tr_idx
        for start in range(0, len(order), config.batch_size):
            bi = order[start:start + config.batch_size]
            try:
                _, grads = _grad_batch(params, X[bi], seed[bi], y[bi], None if fb is None else fb[bi])
                opt, params = adam_step(opt, params, grads)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", last_finite_epoch=epoch - 1) from None
        tm, vm = evaluate(params)
        if not (math.isfinite(tm) and math.isfinite(vm)):
            raise TrainingError(f"non-finite loss at epoch {epoch}", last_finite_epoch=epoch - 1)
        result.history.append(EpochRecord(epoch, tm, vm))
        if vm < best_val:
            best_val = vm
            result.params = params
            result.best_epoch = epoch
    return result


def predict(params: LstmParams, dataset, teacher_forcing: bool = False,
            target_scale: float = 1.0) -> np.ndarray:
    if len(dataset) == 0:
        raise DataError("empty dataset")
    fb = dataset.feedback_sigma if teacher_forcing else None
    if target_scale == 1.0:
        return _predict_arrays(params, dataset.X, dataset.seed_sigma, fb)
    fb = None if fb is None else fb / target_scale
    return target_scale * _predict_arrays(params, dataset.X, dataset.seed_sigma / target_scale, fb)


MODEL_FORMAT = "trendvol-lstm/1"


def model_to_json(params: LstmParams, *, feature_order, scheme: dict, normalization: dict,
                  config: TrainConfig, best_epoch: int, name: str = "lstm",
                  target_scale: float = 1.0) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "model": name,
        "cell_dim": params.cell_dim,
        "n_features": params.n_features,
        "feature_order": list(feature_order),
        "scheme": scheme,
        "normalization": normalization,
        "config": config.to_dict(),
        "best_epoch": best_epoch,
        "target_scale": float(target_scale),
        "shapes": {k: list(np.shape(getattr(params, k))) for k in _PARAM_FIELDS},
        "params": params.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> tuple[LstmParams, dict]:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not an LSTM model file (format={doc.get('format')!r})")
    params = LstmParams.from_dict(doc["params"])
    if params.cell_dim != doc["cell_dim"] or params.n_features != doc["n_features"]:
        raise DataError("model file shapes disagree with declared cell_dim/n_features")
    return params, doc
