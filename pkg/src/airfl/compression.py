"""Top-k sparsification, error-feedback memory, norm clipping, linear projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import STREAM_PROJECTION, keyed_rng

PROJECTION_KINDS = ("subsampled-random-orthonormal", "subsampled-dct", "subsampled-hadamard", "identity")

# Shade saturated clip factors by one part in 1e13: keeps the output norm
# strictly under the budget after rounding, which makes clip exactly
# idempotent. Well below every test tolerance in use (>= 1e-12).
_CLIP_SHADE = 1.0 - 1e-13


def top_k(x: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries of x, zero elsewhere.

    Ties are broken toward the lowest index (stable sort) so runs are
    reproducible across platforms.
    """
    d = len(x)
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range [1, {d}]")
    if k == d:
        return x.copy()
    order = np.argsort(-np.abs(x), kind="stable")
    out = np.zeros_like(x)
    keep = order[:k]
    out[keep] = x[keep]
    return out


def memory_update(m: np.ndarray, delta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Accumulate the sparsification residual: m' = m + delta - g."""
    if not (m.shape == delta.shape == g.shape):
        raise ValueError("memory/difference/sparsified dimension mismatch")
    return m + delta - g


def clip(x: np.ndarray, sqrt_p: float) -> np.ndarray:
    """Rescale x to norm at most sqrt_p: min{1, sqrt_p/||x||} * x.

    The zero vector maps to zero (the scale factor is taken as 1 there).
    """
    if sqrt_p <= 0:
        raise ValueError("sqrt_p must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("clip input must be finite")
    norm = float(np.linalg.norm(x))
    if norm <= sqrt_p:
        return x.copy()
    return x * (sqrt_p / norm * _CLIP_SHADE)


def clip_factor(g: np.ndarray, eta: float, sqrt_p: float) -> float:
    """Clipping factor alpha = min{1, sqrt_p / ||g/eta||}, in (0, 1]."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    norm = float(np.linalg.norm(g)) / eta
    if norm <= sqrt_p:
        return 1.0
    return sqrt_p / norm


@dataclass(frozen=True)
class ProjectionMatrix:
    """M rows of an orthonormal d x d transform, so A A^T = I_M and ||A||_2 <= 1.

    Only (kind, M, d, seed) is persisted in manifests; the matrix is
    regenerated on demand.
    """

    kind: str
    M: int
    d: int
    seed: int
    matrix: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape != (self.d,):
            raise ValueError(f"projection input has shape {x.shape}, expected ({self.d},)")
        return self.matrix @ x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        if y.shape != (self.M,):
            raise ValueError(f"adjoint input has shape {y.shape}, expected ({self.M},)")
        return self.matrix.T @ y

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def spectral_norm_estimate(self, iterations: int = 50) -> float:
        """Power iteration on A^T A; enough to certify ||A||_2 <= 1 + 1e-9."""
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.d)
        v /= np.linalg.norm(v)
        for _ in range(iterations):
            w = self.matrix.T @ (self.matrix @ v)
            n = np.linalg.norm(w)
            if n == 0:
                return 0.0
            v = w / n
        return float(np.sqrt(np.linalg.norm(self.matrix.T @ (self.matrix @ v))))


def _dct_rows(rows: np.ndarray, d: int) -> np.ndarray:
    """Selected rows of the orthonormal DCT-II matrix, by direct formula."""
    j = np.arange(d)
    scale = np.where(rows == 0, np.sqrt(1.0 / d), np.sqrt(2.0 / d))
    return scale[:, None] * np.cos(np.pi * rows[:, None] * (2 * j + 1) / (2.0 * d))


def gen_projection(M: int, d: int, kind: str, seed: int) -> ProjectionMatrix:
    """Generate an M x d compression matrix by row-subsampling an orthonormal basis.

    Kinds: subsampled-random-orthonormal (QR of a seeded Gaussian; no constraint
    on d), subsampled-dct, subsampled-hadamard (d must be a power of two), and
    identity (requires M = d; used by the uncompressed schemes).
    """
    if not 1 <= M <= d:
        raise ValueError(f"M={M} out of range [1, {d}]")
    if kind not in PROJECTION_KINDS:
        raise ValueError(f"unknown projection kind '{kind}'; choose from {PROJECTION_KINDS}")
    if kind == "identity":
        if M != d:
            raise ValueError("identity projection requires M = d")
        return ProjectionMatrix(kind, M, d, seed, np.eye(d))
    rng = keyed_rng(seed, STREAM_PROJECTION)
    rows = rng.choice(d, size=M, replace=False)
    if kind == "subsampled-random-orthonormal":
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        Q *= np.sign(np.diag(R))  # fix the QR sign ambiguity for determinism
        A = Q[rows, :]
    elif kind == "subsampled-dct":
        A = _dct_rows(rows, d)
    else:  # subsampled-hadamard
        if d & (d - 1) != 0:
            raise ValueError("hadamard projection requires d to be a power of two; "
                             "use subsampled-dct or subsampled-random-orthonormal instead")
        from scipy.linalg import hadamard

        A = hadamard(d).astype(np.float64)[rows, :] / np.sqrt(d)
    proj = ProjectionMatrix(kind, M, d, seed, A)
    gram_err = float(np.abs(A @ A.T - np.eye(M)).max())
    if gram_err > 1e-9:
        raise AssertionError(f"projection rows not orthonormal (max |AA^T - I| = {gram_err:g})")
    return proj


def project(A: ProjectionMatrix, x_tilde: np.ndarray) -> np.ndarray:
    """Compress a clipped vector; ||A x|| <= ||x|| keeps the power budget intact."""
    return A.apply(x_tilde)
