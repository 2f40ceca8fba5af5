"""Backpropagation through time, Adam, the windowed training loop and gradient checking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dut import Dataset, normalized_blocks
from .errors import ConfigError, TrainingDiverged
from .nn_core import ModelSpec, NetworkParams, forward_batch, init_params
from .signal import to_iq

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    window_len: int = 64
    lr0: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    plateau_threshold: float = 1e-7
    min_lr: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: str = "f32"
    burn_in: int = 16

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.window_len < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1, window_len >= 1 required")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if min(self.lr0, self.min_lr, self.adam_eps) <= 0 or self.plateau_patience < 1:
            raise ConfigError("learning rates, eps and patience must be positive")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32|f64, got {self.precision!r}")
        if not 0 <= self.burn_in < self.window_len:
            raise ConfigError("burn_in must lie in [0, window_len)")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


def mse_loss(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


# -- reverse mode -------------------------------------------------------------

def _dsig(s):
    return s * (1 - s)


def _layer_backward(params: NetworkParams, k: int, tr: dict, dh_ext, a, grads: dict):
    """BPTT through one recurrent layer.  Returns gradient w.r.t. the layer input sequence."""
    spec = params.spec
    cell = params.cell(k)
    W, U, _ = cell.stacked()
    B, T, H = dh_ext.shape
    f, i, o, g, c, tc = (tr[n] for n in ("f", "i", "o", "g", "c", "tc"))
    film = spec.conditioned
    site = spec.film_site
    if film:
        gam, bet = tr["gamma"], tr["beta"]
        dgam = np.zeros_like(gam)
        dbet = np.zeros_like(bet)
    dz = np.empty((B, T, 4 * H), dtype=dh_ext.dtype)
    if _kernels.available(dh_ext.dtype.type):
        dummy = np.zeros((1, 1, 1), dtype=dh_ext.dtype)
        code = _kernels.SITES[site if film else None]
        _kernels.layer_backward(np.ascontiguousarray(dh_ext), np.ascontiguousarray(U),
                                gam if film else dummy, bet if film else dummy, code,
                                np.ascontiguousarray(tr["c0"]), f, i, o, g, c, tc,
                                tr["fm"] if code == 2 else dummy, dz,
                                dgam if film else dummy, dbet if film else dummy)
    else:
        dh_next = np.zeros((B, H), dtype=dh_ext.dtype)
        dc_next = np.zeros((B, H), dtype=dh_ext.dtype)
        for t in range(T - 1, -1, -1):
            c_prev = c[:, t - 1] if t > 0 else tr["c0"]
            dh = dh_ext[:, t] + dh_next
            do = dh * tc[:, t]
            dc = dc_next + dh * o[:, t] * (1 - tc[:, t] ** 2)
            if not film:
                df, di, dg, dc_next = dc * c_prev, dc * g[:, t], dc * i[:, t], dc * f[:, t]
            elif site == "candidate":
                dgm = dc * i[:, t]
                df = dc * c_prev
                di = dc * (gam[:, t] * g[:, t] + bet[:, t])
                dg = dgm * gam[:, t]
                dgam[:, t] = dgm * g[:, t]
                dbet[:, t] = dgm
                dc_next = dc * f[:, t]
            else:
                fm = tr["fm"][:, t]
                raw = gam[:, t] * f[:, t] + bet[:, t]
                dfm = dc * c_prev * ((raw > 0) & (raw < 1))
                df = dfm * gam[:, t]
                dgam[:, t] = dfm * f[:, t]
                dbet[:, t] = dfm
                di, dg = dc * g[:, t], dc * i[:, t]
                dc_next = dc * fm
            dzt = dz[:, t]
            dzt[:, :H] = df * _dsig(f[:, t])
            dzt[:, H:2 * H] = di * _dsig(i[:, t])
            dzt[:, 2 * H:3 * H] = do * _dsig(o[:, t])
            dzt[:, 3 * H:] = dg * (1 - g[:, t] ** 2)
            dh_next = dzt @ U

    h = tr["h"]
    h_prev = np.concatenate([tr["h0"][:, None], h[:, :-1]], axis=1)
    dzf = dz.reshape(-1, 4 * H)
    dW = dzf.T @ tr["x"].reshape(B * T, -1)
    dU = dzf.T @ h_prev.reshape(B * T, H)
    db = dzf.sum(axis=0)
    pre = f"layer{k}."
    for j, gname in enumerate(("f", "i", "o", "c")):
        sl = slice(j * H, (j + 1) * H)
        grads[pre + "W_" + gname] = dW[sl]
        grads[pre + "U_" + gname] = dU[sl]
        grads[pre + "b_" + gname] = db[sl]
    if film:
        fp = params.film(k)
        dout = np.concatenate([dgam, dbet], axis=-1).reshape(B * T, 2 * H)
        fhid = tr["fhid"].reshape(B * T, -1)
        grads[pre + "film.w2"] = dout.T @ fhid
        grads[pre + "film.b2"] = dout.sum(axis=0)
        dpre = (dout @ fp.w2) * (1 - fhid ** 2)
        grads[pre + "film.w1"] = (dpre * a.reshape(-1, 1)).sum(axis=0)[:, None]
        grads[pre + "film.b1"] = dpre.sum(axis=0)
    return dz @ W


def backward_from_cache(params: NetworkParams, cache: dict, dy) -> dict[str, np.ndarray]:
    spec = params.spec
    grads: dict[str, np.ndarray] = {}
    B, T, _ = dy.shape
    dyf = dy.reshape(-1, 2)
    if not spec.recurrent:
        hid = cache["hid"].reshape(B * T, -1)
        feats = cache["feats"].reshape(B * T, -1)
        grads["out_w"] = dyf.T @ hid
        grads["out_b"] = dyf.sum(axis=0)
        dpre = (dyf @ params["out_w"]) * (1 - hid ** 2)
        grads["hid_w"] = dpre.T @ feats
        grads["hid_b"] = dpre.sum(axis=0)
        return {n: grads[n] for n in params.arrays}
    r = cache["r"].reshape(B * T, -1)
    top = cache["top"].reshape(B * T, -1)
    grads["out_w"] = dyf.T @ r
    grads["out_b"] = dyf.sum(axis=0)
    du = (dyf @ params["out_w"]) * (cache["u"].reshape(B * T, -1) > 0)
    grads["fc_w"] = du.T @ top
    grads["fc_b"] = du.sum(axis=0)
    dtop = (du @ params["fc_w"]).reshape(B, T, -1)
    for k in range(spec.layers - 1, -1, -1):
        dtop = _layer_backward(params, k, cache["layers"][k], dtop, cache["a"], grads)
    return {n: grads[n] for n in params.arrays}


def backward(params: NetworkParams, x_window, target_window, a_window):
    """Loss and exact gradients of ``mse_loss`` over one window or a batch of windows.

    Shapes: x/target (T, 2) or (B, T, 2); a (T,) or (B, T).  Each window starts
    from a zero recurrent state, which is treated as a constant.
    """
    x = np.asarray(x_window)
    tgt = np.asarray(target_window)
    a = np.asarray(a_window)
    if x.ndim == 2:
        x, tgt, a = x[None], tgt[None], a[None]
    if x.shape[1] == 0:
        raise ConfigError("empty window")
    if tgt.shape != x.shape:
        raise ConfigError(f"target shape {tgt.shape} != input shape {x.shape}")
    y, _, cache = forward_batch(params, x, a, record=True)
    err = y - tgt.astype(y.dtype)
    loss = float(np.mean(err ** 2))
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}; |y|max={np.nanmax(np.abs(y)):.3g}")
    dy = (2.0 / err.size) * err
    return loss, backward_from_cache(params, cache, dy)


# -- Adam -----------------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """In-place Adam update of ``params`` (name -> array) with bias correction."""
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ConfigError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name not in state.m:
            state.m[name], state.v[name] = np.zeros_like(p), np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def _flatten(params: NetworkParams):
    """Copy of ``params`` whose arrays are views into one contiguous buffer."""
    buf = np.concatenate([v.ravel() for v in params.arrays.values()])
    arrays, pos = {}, 0
    for name, v in params.arrays.items():
        arrays[name] = buf[pos:pos + v.size].reshape(v.shape)
        pos += v.size
    return NetworkParams(params.spec, arrays), buf


# -- data plumbing ------------------------------------------------------------------

def model_inputs(spec: ModelSpec, ds: Dataset, part: str, tail: int | None = None):
    """(x_iq, a, y_iq) for one split in the normalized domain."""
    xn, yn, xraw = normalized_blocks(ds, part, tail)
    a = np.abs(xraw if spec.amp_source == "raw" else xn)
    return to_iq(xn), a, to_iq(yn)


def _context(values, n, shape_tail, dtype):
    out = np.zeros((n,) + shape_tail, dtype)
    if values is not None and n:
        v = np.asarray(values, dtype)[-n:]
        out[n - len(v):] = v
    return out


def predict_sequence(params: NetworkParams, x_iq, a, window_len: int = 64, burn_in: int = 16,
                     context_iq=None, context_a=None):
    """Predict a long sequence.

    Recurrent models run independent zero-state windows of ``window_len``, each
    emitting ``window_len - burn_in`` outputs; the first ``burn_in`` steps only
    warm the state up on the preceding samples (``context_*`` before the
    sequence start, zeros otherwise).  All windows run as one batch.
    ARVTDNN runs in one pass with ``context_*`` as its tap history.
    """
    dtype = params.dtype
    x_iq = np.asarray(x_iq, dtype=dtype)
    a = np.asarray(a, dtype=dtype)
    n = len(x_iq)
    if not params.spec.recurrent:
        M = params.spec.memory_depth
        fx = np.concatenate([_context(context_iq, M, (2,), dtype), x_iq])
        fa = np.concatenate([_context(context_a, M, (), dtype), a])
        y, _, _ = forward_batch(params, fx[None], fa[None])
        return y[0, M:]
    step = window_len - burn_in
    nwin = -(-n // step)
    pad = nwin * step - n
    full_x = np.concatenate([_context(context_iq, burn_in, (2,), dtype), x_iq, np.zeros((pad, 2), dtype)])
    full_a = np.concatenate([_context(context_a, burn_in, (), dtype), a, np.zeros(pad, dtype)])
    idx = np.arange(nwin)[:, None] * step + np.arange(window_len)[None, :]
    y, _, _ = forward_batch(params, full_x[idx], full_a[idx])
    return y[:, burn_in:].reshape(-1, 2)[:n]


def evaluate_split(params: NetworkParams, ds: Dataset, part: str, cfg: TrainConfig):
    """Normalized-domain (prediction, target) over a split, warmed on the preceding split's tail."""
    x, a, y = model_inputs(params.spec, ds, part)
    prev = {"val": "train", "test": "val"}.get(part)
    cx = ca = None
    if prev is not None:
        cx, ca, _ = model_inputs(params.spec, ds, prev, tail=max(cfg.burn_in, params.spec.memory_depth))
    pred = predict_sequence(params, x, a, cfg.window_len, cfg.burn_in, cx, ca)
    return pred, y


# -- training loop ---------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    lr: float


def train(spec: ModelSpec, ds: Dataset, cfg: TrainConfig, params: NetworkParams | None = None,
          callback=None):
    """Windowed TBPTT training with Adam and reduce-on-plateau.

    Returns ``(best_params, history)`` where ``best_params`` attains the lowest
    validation MSE in ``history``.  Only the train and val blocks are read.
    """
    dtype = cfg.dtype
    if params is None:
        params = init_params(spec, cfg.seed, dtype)
    params, flat = _flatten(params.astype(dtype))
    history: list[EpochRecord] = []
    if cfg.epochs == 0:
        return params, history

    x, a, y = model_inputs(spec, ds, "train")
    L = cfg.window_len
    if L > len(x):
        raise ConfigError(f"window_len {L} exceeds train block length {len(x)}")
    x, a, y = x.astype(dtype), a.astype(dtype), y.astype(dtype)
    rng = np.random.default_rng([cfg.seed, 3])
    opt = AdamState(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    lr = cfg.lr0
    best_val, best_params, stale = math.inf, params.copy(), 0
    plateau_ref = math.inf

    for epoch in range(1, cfg.epochs + 1):
        offset = int(rng.integers(0, L)) if len(x) >= 2 * L else 0
        starts = np.arange(offset, len(x) - L + 1, L)
        starts = starts[rng.permutation(len(starts))]
        losses = []
        for b0 in range(0, len(starts), cfg.batch_size):
            idx = starts[b0:b0 + cfg.batch_size, None] + np.arange(L)[None, :]
            try:
                loss, grads = backward(params, x[idx], y[idx], a[idx])
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", best_params, history) from exc
            # one update over the concatenated buffer is elementwise identical
            # to updating each array separately
            gflat = np.concatenate([grads[n].ravel() for n in params.arrays])
            adam_step({"all": flat}, {"all": gflat}, opt, lr)
            losses.append(loss * len(idx))
        train_mse = float(np.sum(losses) / len(starts))
        pred, yv = evaluate_split(params, ds, "val", cfg)
        val_mse = mse_loss(pred, yv.astype(dtype))
        if not math.isfinite(val_mse):
            raise TrainingDiverged(f"epoch {epoch}: non-finite validation loss", best_params, history)
        history.append(EpochRecord(epoch, train_mse, val_mse, lr))
        log.debug("epoch %d train %.3e val %.3e lr %.1e", epoch, train_mse, val_mse, lr)
        if val_mse < best_val:
            best_val, best_params = val_mse, params.copy()
        if val_mse < plateau_ref - cfg.plateau_threshold:
            plateau_ref, stale = val_mse, 0
        else:
            stale += 1
            if stale >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                stale = 0
        if callback is not None:
            callback(epoch, params, history)
    return best_params, history


def history_csv(history) -> str:
    lines = ["epoch,train_mse,val_mse,lr"]
    lines += [f"{r.epoch},{r.train_mse:.9e},{r.val_mse:.9e},{r.lr:.9e}" for r in history]
    return "\n".join(lines) + "\n"


# -- gradient checking ---------------------------------------------------------------

@dataclass
class GradCheckReport:
    family: str
    film_site: str
    seed: int
    max_rel_error: float
    worst_param: str
    passed: bool
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        name = f"{self.family}/{self.film_site}" if self.family == "aclstm" else self.family
        return (f"{tag} {name} seed={self.seed} "
                f"max_rel_err={self.max_rel_error:.3e} worst={self.worst_param}")


def _random_params(spec: ModelSpec, rng) -> NetworkParams:
    p = init_params(spec, int(rng.integers(2 ** 31)))
    for v in p.arrays.values():
        v += 0.3 * rng.standard_normal(v.shape)
    return p


def grad_check(spec: ModelSpec, seed: int = 0, tolerance: float = 1e-6, window: int = 8,
               batch: int = 2, h: float = 1e-5, corrupt: bool = False) -> GradCheckReport:
    """Analytic gradients vs central differences on a tiny f64 model.

    Relative error per entry is ``|g - fd| / max(|g|, 1e-8)``.  ``corrupt``
    adds 1e-3 to one analytic entry (fault injection).
    """
    if window < 1:
        raise ConfigError("gradient check needs a window of at least one step")
    if spec.hidden > 4:
        raise ConfigError("gradient check runs on tiny models (hidden <= 4)")
    rng = np.random.default_rng([seed, 7])
    params = _random_params(spec, rng)
    x = rng.standard_normal((batch, window, 2))
    tgt = rng.standard_normal((batch, window, 2))
    a = np.hypot(x[..., 0], x[..., 1])
    _, grads = backward(params, x, tgt, a)
    if corrupt:
        name = next(iter(grads))
        grads[name] = grads[name].copy()
        grads[name].flat[0] += 1e-3

    # The finite-difference oracle runs in extended precision so roundoff
    # (~1e-16 / h in f64) does not swamp gradient entries near 1e-8.
    fd_params = params.astype(np.longdouble)
    xl, tl, al = (v.astype(np.longdouble) for v in (x, tgt, a))

    def loss_at():
        y, _, _ = forward_batch(fd_params, xl, al)
        return np.mean((y - tl) ** 2)

    worst, worst_name = 0.0, ""
    for name, p in fd_params.arrays.items():
        g = grads[name]
        for j in range(p.size):
            old = p.flat[j]
            p.flat[j] = old + h
            lp = loss_at()
            p.flat[j] = old - h
            lm = loss_at()
            p.flat[j] = old
            fd = float((lp - lm) / (2 * h))
            rel = abs(g.flat[j] - fd) / max(abs(g.flat[j]), 1e-8)
            if rel > worst:
                worst, worst_name = rel, f"{name}[{j}]"
    return GradCheckReport(spec.family, spec.film_site, seed, worst, worst_name, worst < tolerance, tolerance)
