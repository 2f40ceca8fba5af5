"""Compiled inner loops for the recurrent layers.

The numpy implementations in ``nn_core`` / ``train`` are the reference; these
kernels compute the same per-step recurrence one scalar at a time, which for
the small hidden sizes used here is far cheaper than numpy's per-call
overhead.  Set ``ACLSTM_NO_JIT=1`` to force the reference path.

Site codes: 0 plain LSTM, 1 FiLM on the candidate state, 2 FiLM on the
forget gate.
"""

import math
import os

import numpy as np

try:
    if os.environ.get("ACLSTM_NO_JIT"):
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

SITES = {None: 0, "candidate": 1, "forget": 2}
ENABLED = njit is not None


def available(dtype) -> bool:
    return ENABLED and dtype in (np.float32, np.float64)


if njit is not None:

    @njit(cache=True)
    def _sig(z):
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    @njit(cache=True)
    def layer_forward(xw, U, gam, bet, site, h0, c0, f, i, o, g, c, tc, fm, hs):
        B, T, H4 = xw.shape
        H = H4 // 4
        z = np.empty(H4, dtype=np.float64)
        h = np.empty(H, dtype=np.float64)
        cc = np.empty(H, dtype=np.float64)
        for b in range(B):
            for j in range(H):
                h[j] = h0[b, j]
                cc[j] = c0[b, j]
            for t in range(T):
                for r in range(H4):
                    acc = xw[b, t, r]
                    for k in range(H):
                        acc += U[r, k] * h[k]
                    z[r] = acc
                for j in range(H):
                    fj = _sig(z[j])
                    ij = _sig(z[H + j])
                    oj = _sig(z[2 * H + j])
                    gj = math.tanh(z[3 * H + j])
                    if site == 0:
                        cj = fj * cc[j] + ij * gj
                    elif site == 1:
                        cj = fj * cc[j] + ij * (gam[b, t, j] * gj + bet[b, t, j])
                    else:
                        m = gam[b, t, j] * fj + bet[b, t, j]
                        m = min(max(m, 0.0), 1.0)
                        fm[b, t, j] = m
                        cj = m * cc[j] + ij * gj
                    tj = math.tanh(cj)
                    hj = oj * tj
                    f[b, t, j] = fj
                    i[b, t, j] = ij
                    o[b, t, j] = oj
                    g[b, t, j] = gj
                    c[b, t, j] = cj
                    tc[b, t, j] = tj
                    hs[b, t, j] = hj
                    cc[j] = cj
                for j in range(H):
                    h[j] = hs[b, t, j]

    @njit(cache=True)
    def layer_backward(dh_ext, U, gam, bet, site, c0, f, i, o, g, c, tc, fm, dz, dgam, dbet):
        B, T, H = dh_ext.shape
        dh_next = np.empty(H, dtype=np.float64)
        dc_next = np.empty(H, dtype=np.float64)
        for b in range(B):
            for j in range(H):
                dh_next[j] = 0.0
                dc_next[j] = 0.0
            for t in range(T - 1, -1, -1):
                for j in range(H):
                    cp = c[b, t - 1, j] if t > 0 else c0[b, j]
                    dh = dh_ext[b, t, j] + dh_next[j]
                    fj, ij, oj, gj, tj = f[b, t, j], i[b, t, j], o[b, t, j], g[b, t, j], tc[b, t, j]
                    do = dh * tj
                    dc = dc_next[j] + dh * oj * (1.0 - tj * tj)
                    if site == 0:
                        df = dc * cp
                        di = dc * gj
                        dg = dc * ij
                        dc_next[j] = dc * fj
                    elif site == 1:
                        dgm = dc * ij
                        df = dc * cp
                        di = dc * (gam[b, t, j] * gj + bet[b, t, j])
                        dg = dgm * gam[b, t, j]
                        dgam[b, t, j] = dgm * gj
                        dbet[b, t, j] = dgm
                        dc_next[j] = dc * fj
                    else:
                        raw = gam[b, t, j] * fj + bet[b, t, j]
                        dfm = dc * cp if (raw > 0.0 and raw < 1.0) else 0.0
                        df = dfm * gam[b, t, j]
                        dgam[b, t, j] = dfm * fj
                        dbet[b, t, j] = dfm
                        di = dc * gj
                        dg = dc * ij
                        dc_next[j] = dc * fm[b, t, j]
                    dz[b, t, j] = df * fj * (1.0 - fj)
                    dz[b, t, H + j] = di * ij * (1.0 - ij)
                    dz[b, t, 2 * H + j] = do * oj * (1.0 - oj)
                    dz[b, t, 3 * H + j] = dg * (1.0 - gj * gj)
                for k in range(H):
                    acc = 0.0
                    for r in range(4 * H):
                        acc += dz[b, t, r] * U[r, k]
                    dh_next[k] = acc
