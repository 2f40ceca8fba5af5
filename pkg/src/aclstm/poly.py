"""Memory-polynomial (MP) and generalized-memory-polynomial (GMP) baselines.

Both are linear in their coefficients and identified by least squares.
Pre-history samples are zero-padded so the prediction length equals the input
length.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MpSpec:
    memory_depth: int = 4
    order: int = 9
    odd_only: bool = False
    # GMP cross terms x[n-m] |x[n-m-l]|^(k-1); empty lag tuples give a plain MP.
    lagging: tuple = ()
    leading: tuple = ()
    cross_memory: int = 0
    cross_orders: tuple = ()

    def __post_init__(self):
        if self.memory_depth < 0 or self.order < 1:
            raise ConfigError("memory_depth >= 0 and order >= 1 required")
        if any(k < 2 for k in self.cross_orders):
            raise ConfigError("cross-term orders start at 2")

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(k for k in range(1, self.order + 1) if not self.odd_only or k % 2)

    @property
    def kind(self) -> str:
        return "gmp" if self.lagging or self.leading else "mp"

    def columns(self) -> list[tuple[int, int, int]]:
        """(m, k, envelope offset) per column; the main branch has offset 0."""
        cols = [(m, k, 0) for m in range(self.memory_depth + 1) for k in self.orders]
        for shifts in (tuple(self.lagging), tuple(-l for l in self.leading)):
            for l in shifts:
                for m in range(self.cross_memory + 1):
                    for k in self.cross_orders:
                        cols.append((m, k, l))
        return cols

    @property
    def n_coeffs(self) -> int:
        return len(self.columns())


def gmp_default() -> MpSpec:
    """M=4, K=9 main branch plus 18 causal lagging cross terms: 63 coefficients."""
    return MpSpec(4, 9, lagging=(1, 2), cross_memory=2, cross_orders=(3, 5, 7))


def _delayed(x: np.ndarray, d: int) -> np.ndarray:
    """x[n - d] with zeros outside [0, N).  Negative d looks ahead."""
    out = np.zeros_like(x)
    n = len(x)
    if 0 <= d < n:
        out[d:] = x[:n - d]
    elif -n < d < 0:
        out[:n + d] = x[-d:]
    return out


def mp_basis(x, spec: MpSpec) -> np.ndarray:
    x = np.asarray(getattr(x, "samples", x), dtype=complex)
    if len(x) <= spec.memory_depth:
        raise ConfigError("signal must be longer than the memory depth")
    cols = spec.columns()
    phi = np.empty((len(x), len(cols)), dtype=complex)
    for j, (m, k, l) in enumerate(cols):
        xm = _delayed(x, m)
        env = np.abs(_delayed(x, m + l))
        phi[:, j] = xm * env ** (k - 1)
    return phi


@dataclass
class MpFit:
    coeffs: np.ndarray
    residual_nmse_db: float
    rank: int


def mp_fit(x, y, spec: MpSpec) -> MpFit:
    """Least squares via SVD (orthogonal factorization; minimum-norm if rank deficient)."""
    y = np.asarray(getattr(y, "samples", y), dtype=complex)
    phi = mp_basis(x, spec)
    if len(y) != len(phi):
        raise ConfigError(f"length mismatch {len(phi)} vs {len(y)}")
    coeffs, _, rank, _ = np.linalg.lstsq(phi, y, rcond=None)
    if rank < phi.shape[1]:
        warnings.warn(f"design matrix rank {rank} < {phi.shape[1]} columns; minimum-norm solution",
                      RuntimeWarning)
    err = np.sum(np.abs(y - phi @ coeffs) ** 2)
    nmse = 10 * np.log10(err / np.sum(np.abs(y) ** 2)) if err > 0 else -200.0
    return MpFit(coeffs, float(max(nmse, -200.0)), int(rank))


def mp_predict(x, spec: MpSpec, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (spec.n_coeffs,):
        raise ConfigError(f"expected {spec.n_coeffs} coefficients, got {coeffs.shape}")
    return mp_basis(x, spec) @ coeffs
