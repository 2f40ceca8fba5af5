"""Forward computations for AC-LSTM, plain LSTM and ARVTDNN behavioral models.

Parameters live in a flat, ordered ``dict[str, ndarray]`` (see ``param_shapes``);
the dataclasses below are zero-copy views used by the step functions.
Sequences are real arrays shaped ``(T, 2)`` or batched ``(B, T, 2)`` holding
normalized (I, Q); amplitudes are ``(T,)`` / ``(B, T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import ConfigError

FAMILIES = ("aclstm", "lstm", "arvtdnn")
GATES = ("f", "i", "o", "c")


@dataclass(frozen=True)
class ModelSpec:
    family: str = "aclstm"
    hidden: int = 8
    layers: int = 1
    film_hidden: int = 4
    film_site: str = "candidate"  # candidate | forget
    amp_source: str = "raw"  # raw | normalized
    memory_depth: int = 4  # ARVTDNN only
    poly_order: int = 3  # ARVTDNN only

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.film_site not in ("candidate", "forget"):
            raise ConfigError(f"film_site must be candidate|forget, got {self.film_site!r}")
        if self.amp_source not in ("raw", "normalized"):
            raise ConfigError(f"amp_source must be raw|normalized, got {self.amp_source!r}")
        if self.hidden < 1 or self.layers < 0 or self.film_hidden < 1:
            raise ConfigError("hidden >= 1, layers >= 0 and film_hidden >= 1 required")
        if self.memory_depth < 0 or self.poly_order < 1:
            raise ConfigError("memory_depth >= 0 and poly_order >= 1 required")

    @property
    def recurrent(self) -> bool:
        return self.family != "arvtdnn"

    @property
    def conditioned(self) -> bool:
        return self.family == "aclstm"

    @property
    def arvtdnn_features(self) -> int:
        return (self.memory_depth + 1) * (2 + self.poly_order)


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Fixed layout order of every trainable array."""
    H = spec.hidden
    shapes: dict[str, tuple[int, ...]] = {}
    if not spec.recurrent:
        shapes["hid_w"] = (H, spec.arvtdnn_features)
        shapes["hid_b"] = (H,)
        shapes["out_w"] = (2, H)
        shapes["out_b"] = (2,)
        return shapes
    width = 2
    for k in range(spec.layers):
        for g in GATES:
            shapes[f"layer{k}.W_{g}"] = (H, width)
        for g in GATES:
            shapes[f"layer{k}.U_{g}"] = (H, H)
        for g in GATES:
            shapes[f"layer{k}.b_{g}"] = (H,)
        if spec.conditioned:
            fh = spec.film_hidden
            shapes[f"layer{k}.film.w1"] = (fh, 1)
            shapes[f"layer{k}.film.b1"] = (fh,)
            shapes[f"layer{k}.film.w2"] = (2 * H, fh)
            shapes[f"layer{k}.film.b2"] = (2 * H,)
        width = H
    shapes["fc_w"] = (H, width)
    shapes["fc_b"] = (H,)
    shapes["out_w"] = (2, H)
    shapes["out_b"] = (2,)
    return shapes


def param_count(spec: ModelSpec) -> int:
    return int(sum(np.prod(s) for s in param_shapes(spec).values()))


# -- typed views ----------------------------------------------------------

@dataclass
class LstmCellParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def stacked(self):
        """Gate blocks stacked in (f, i, o, c) order."""
        W = np.concatenate([self.W_f, self.W_i, self.W_o, self.W_c])
        U = np.concatenate([self.U_f, self.U_i, self.U_o, self.U_c])
        b = np.concatenate([self.b_f, self.b_i, self.b_o, self.b_c])
        return W, U, b


@dataclass
class FilmParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class AcLstmLayerParams:
    lstm: LstmCellParams
    film: FilmParams


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray


class NetworkParams:
    """Model spec plus its flat parameter store."""

    def __init__(self, spec: ModelSpec, arrays: dict[str, np.ndarray]):
        expected = param_shapes(spec)
        if list(arrays) != list(expected):
            raise ConfigError("parameter names do not match the model layout")
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ConfigError(f"{name}: shape {arrays[name].shape} != {shape}")
        self.spec = spec
        self.arrays = arrays

    def __getitem__(self, name):
        return self.arrays[name]

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.spec, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def cell(self, k: int) -> LstmCellParams:
        pre = f"layer{k}."
        return LstmCellParams(**{f.name: self.arrays[pre + f.name] for f in fields(LstmCellParams)})

    def film(self, k: int) -> FilmParams | None:
        if not self.spec.conditioned:
            return None
        pre = f"layer{k}.film."
        return FilmParams(*(self.arrays[pre + n] for n in ("w1", "b1", "w2", "b2")))

    def layer(self, k: int):
        film = self.film(k)
        return self.cell(k) if film is None else AcLstmLayerParams(self.cell(k), film)


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float64) -> NetworkParams:
    """Uniform(+-1/sqrt(fan)) weights, forget bias 1, neutral FiLM (gamma=1, beta=0).

    Gate, FiLM and head draws come from separate streams so an AC-LSTM and an
    LSTM built from the same seed share identical gate weights.
    """
    gates = np.random.default_rng([seed, 0])
    film = np.random.default_rng([seed, 1])
    head = np.random.default_rng([seed, 2])
    H = spec.hidden
    arrays = {}
    for name, shape in param_shapes(spec).items():
        tail = name.split(".")[-1]
        if ".film." in name:
            if tail == "w2":
                v = np.zeros(shape)
            elif tail == "b2":
                v = np.concatenate([np.ones(H), np.zeros(H)])
            else:
                v = film.uniform(-1.0, 1.0, shape)
        elif name.startswith("layer"):
            v = np.ones(shape) if tail == "b_f" else gates.uniform(-1, 1, shape) / np.sqrt(H)
        else:
            fan = param_shapes(spec)[name.replace("_b", "_w")][1]
            v = head.uniform(-1, 1, shape) / np.sqrt(fan)
        arrays[name] = v.astype(dtype)
    return NetworkParams(spec, arrays)


# -- single-step operations -----------------------------------------------

def amplitude(x) -> np.ndarray:
    """Envelope |x| of complex samples, or of real (..., 2) I/Q pairs."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.abs(x)
    return np.hypot(x[..., 0], x[..., 1])


def film_eval(p: FilmParams, a):
    """Amplitude -> (gamma, beta); tanh hidden layer, linear output."""
    a = np.asarray(a, dtype=p.w1.dtype)
    hid = np.tanh(a[..., None] * p.w1[:, 0] + p.b1)
    out = hid @ p.w2.T + p.b2
    H = p.b2.shape[0] // 2
    return out[..., :H], out[..., H:]


def _gates(p: LstmCellParams, x, h):
    W, U, b = p.stacked()
    z = x @ W.T + h @ U.T + b
    H = p.b_f.shape[0]
    return expit(z[..., :H]), expit(z[..., H:2 * H]), expit(z[..., 2 * H:3 * H]), np.tanh(z[..., 3 * H:])


def lstm_step(p: LstmCellParams, x, state: CellState) -> CellState:
    f, i, o, g = _gates(p, np.asarray(x), state.h)
    c = f * state.c + i * g
    return CellState(o * np.tanh(c), c)


def aclstm_step(p: AcLstmLayerParams, x, state: CellState, a, film_site: str = "candidate") -> CellState:
    """One AC-LSTM update; ``a`` is the network-input envelope at this step."""
    f, i, o, g = _gates(p.lstm, np.asarray(x), state.h)
    gamma, beta = film_eval(p.film, a)
    if film_site == "candidate":
        c = f * state.c + i * (gamma * g + beta)
    else:
        c = np.clip(gamma * f + beta, 0.0, 1.0) * state.c + i * g
    return CellState(o * np.tanh(c), c)


# -- sequence forward -------------------------------------------------------

def zero_states(params: NetworkParams, batch_shape=()) -> list[CellState]:
    H = params.spec.hidden
    z = np.zeros(batch_shape + (H,), dtype=params.dtype)
    return [CellState(z.copy(), z.copy()) for _ in range(params.spec.layers)]


def _layer_seq(cell: LstmCellParams, film: FilmParams | None, site: str, x, a, state: CellState, record: bool):
    """Run one recurrent layer over (B, T, in).  Returns h sequence, final state, trace."""
    W, U, b = cell.stacked()
    B, T, _ = x.shape
    H = cell.b_f.shape[0]
    xw = x @ W.T + b
    UT = U.T
    if film is not None:
        fhid = np.tanh(a[..., None] * film.w1[:, 0] + film.b1)
        fout = fhid @ film.w2.T + film.b2
        gam, bet = fout[..., :H], fout[..., H:]
    h, c = state.h, state.c
    if _kernels.available(xw.dtype.type):
        return _layer_seq_jit(film, site, xw, U, gam if film is not None else None,
                              bet if film is not None else None, fhid if film is not None else None,
                              h, c, record)
    hs = np.empty((B, T, H), dtype=xw.dtype)
    if record:
        tr = {k: np.empty((B, T, H), dtype=xw.dtype) for k in ("f", "i", "o", "g", "c", "tc")}
        tr["h0"], tr["c0"] = h, c
        if film is not None:
            tr["fhid"], tr["gamma"], tr["beta"] = fhid, gam, bet
            if site == "forget":
                tr["fm"] = np.empty((B, T, H), dtype=xw.dtype)
    for t in range(T):
        z = xw[:, t] + h @ UT
        s = expit(z[:, :3 * H])
        f, i, o = s[:, :H], s[:, H:2 * H], s[:, 2 * H:]
        g = np.tanh(z[:, 3 * H:])
        if film is None:
            c = f * c + i * g
        elif site == "candidate":
            c = f * c + i * (gam[:, t] * g + bet[:, t])
        else:
            fm = np.clip(gam[:, t] * f + bet[:, t], 0.0, 1.0)
            c = fm * c + i * g
            if record:
                tr["fm"][:, t] = fm
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        if record:
            tr["f"][:, t], tr["i"][:, t], tr["o"][:, t], tr["g"][:, t] = f, i, o, g
            tr["c"][:, t], tr["tc"][:, t] = c, tc
    return hs, CellState(h, c), (tr if record else None)


def _layer_seq_jit(film, site, xw, U, gam, bet, fhid, h0, c0, record):
    B, T, H4 = xw.shape
    H = H4 // 4
    dt = xw.dtype
    code = _kernels.SITES[site if film is not None else None]
    h0 = np.ascontiguousarray(np.broadcast_to(h0, (B, H)), dtype=dt)
    c0 = np.ascontiguousarray(np.broadcast_to(c0, (B, H)), dtype=dt)
    tr = {k: np.empty((B, T, H), dtype=dt) for k in ("f", "i", "o", "g", "c", "tc")}
    dummy = np.zeros((1, 1, 1), dtype=dt)
    fm = np.empty((B, T, H), dtype=dt) if code == 2 else dummy
    hs = np.empty((B, T, H), dtype=dt)
    g_, b_ = (np.ascontiguousarray(gam), np.ascontiguousarray(bet)) if code else (dummy, dummy)
    _kernels.layer_forward(np.ascontiguousarray(xw), np.ascontiguousarray(U), g_, b_, code, h0, c0,
                           tr["f"], tr["i"], tr["o"], tr["g"], tr["c"], tr["tc"], fm, hs)
    final = CellState(hs[:, -1].copy(), tr["c"][:, -1].copy())
    if not record:
        return hs, final, None
    tr["h0"], tr["c0"] = h0, c0
    if code:
        tr["fhid"], tr["gamma"], tr["beta"] = fhid, g_, b_
    if code == 2:
        tr["fm"] = fm
    return hs, final, tr


def forward_batch(params: NetworkParams, x, a, states=None, record: bool = False):
    """Batched forward.  x: (B, T, 2), a: (B, T).  Returns (y, final_states, cache)."""
    spec = params.spec
    x = np.asarray(x, dtype=params.dtype)
    a = np.asarray(a, dtype=params.dtype)
    if x.ndim != 3 or x.shape[-1] != 2 or a.shape != x.shape[:2]:
        raise ConfigError(f"expected x (B, T, 2) and a (B, T), got {x.shape} and {a.shape}")
    if not spec.recurrent:
        return _arvtdnn_batch(params, x, a, record)
    B = x.shape[0]
    if states is None:
        states = zero_states(params, (B,))
    cache = {"x": x, "a": a, "layers": []} if record else None
    inp, finals = x, []
    for k in range(spec.layers):
        inp_k = inp
        inp, st, tr = _layer_seq(params.cell(k), params.film(k), spec.film_site, inp, a, states[k], record)
        finals.append(st)
        if record:
            tr["x"] = inp_k
            tr["h"] = inp
            cache["layers"].append(tr)
    u = inp @ params["fc_w"].T + params["fc_b"]
    r = np.maximum(u, 0)
    y = r @ params["out_w"].T + params["out_b"]
    if record:
        cache.update(top=inp, u=u, r=r)
    return y, finals, cache


def network_forward(params: NetworkParams, x_seq, a_seq, initial_states=None):
    """Single-sequence forward: x_seq (T, 2), a_seq (T,) -> (pred (T, 2), final states)."""
    x = np.asarray(x_seq)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigError("x_seq must be a nonempty (T, 2) array")
    states = None
    if initial_states is not None:
        states = [CellState(s.h[None], s.c[None]) for s in initial_states]
    y, finals, _ = forward_batch(params, x[None], np.asarray(a_seq)[None], states)
    return y[0], [CellState(s.h[0], s.c[0]) for s in finals]


# -- ARVTDNN ---------------------------------------------------------------

def arvtdnn_features(x, a, memory_depth: int, poly_order: int):
    """[I, Q at lags 0..M] + [a^k at lags 0..M, k=1..P], zero-padded history.  x: (B, T, 2)."""
    B, T, _ = x.shape
    M = memory_depth
    xp = np.concatenate([np.zeros((B, M, 2), x.dtype), x], axis=1)
    ap = np.concatenate([np.zeros((B, M), a.dtype), a], axis=1)
    cols = [xp[:, M - m:M - m + T] for m in range(M + 1)]
    for m in range(M + 1):
        am = ap[:, M - m:M - m + T]
        cols.append(np.stack([am ** k for k in range(1, poly_order + 1)], axis=-1))
    return np.concatenate(cols, axis=-1)


def _arvtdnn_batch(params: NetworkParams, x, a, record):
    spec = params.spec
    feats = arvtdnn_features(x, a, spec.memory_depth, spec.poly_order)
    hid = np.tanh(feats @ params["hid_w"].T + params["hid_b"])
    y = hid @ params["out_w"].T + params["out_b"]
    cache = {"feats": feats, "hid": hid} if record else None
    return y, [], cache


def arvtdnn_forward(params: NetworkParams, x_seq, a_seq):
    x = np.asarray(x_seq)
    if len(x) <= params.spec.memory_depth:
        raise ConfigError("sequence must be longer than the memory depth")
    y, _, _ = forward_batch(params, x[None], np.asarray(a_seq)[None])
    return y[0]
