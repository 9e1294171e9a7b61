"""Sparse recovery of the aggregated update and its offline error prediction.

Estimators take the received vector y = A x + n with a row-orthonormal
compression matrix (A A^T = I_M) and return an estimate of x together with a
predicted per-entry error variance. The iterative estimator is an orthogonal
AMP: a de-correlated linear stage, which for row-orthonormal A collapses to
the scaled matched filter (1/delta) A^T, alternating with a divergence-free
Bernoulli-Gaussian MMSE denoiser. Its per-iteration error variance follows
the deterministic recursion

    tau^2 = (1/delta - 1) v^2 + sigma^2 / delta             (linear stage)
    v'^2  = mmse(tau^2) * tau^2 / (tau^2 - mmse(tau^2))     (divergence-free denoiser)

which is exactly what state_evolution() iterates, so prediction and estimation
share one source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_TINY = 1e-30
_GH_NODES = 61  # fixed Gauss-Hermite order keeps the scalar MMSE map deterministic

ESTIMATOR_KINDS = ("identity", "lmmse", "oamp")


@dataclass(frozen=True)
class SignalPrior:
    """i.i.d. Bernoulli-Gaussian prior: p(x) = (1 - rho) delta(x) + rho N(0, sigma_x2)."""

    rho: float = 0.1
    sigma_x2: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if self.sigma_x2 <= 0:
            raise ValueError("sigma_x2 must be positive")

    @property
    def variance(self) -> float:
        return self.rho * self.sigma_x2

    def sample(self, d: int, rng: np.random.Generator) -> np.ndarray:
        mask = rng.random(d) < self.rho
        return np.where(mask, np.sqrt(self.sigma_x2) * rng.standard_normal(d), 0.0)


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "oamp"
    prior: SignalPrior = field(default_factory=SignalPrior)
    iterations: int = 20
    damping: float = 1.0

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind '{self.kind}'; choose from {ESTIMATOR_KINDS}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")


@dataclass(frozen=True)
class RecoveryResult:
    x_hat: np.ndarray
    v_hat: float          # predicted per-entry error variance
    v_trace: np.ndarray   # predicted variance after each iteration


@dataclass(frozen=True)
class SETrace:
    """State-evolution prediction: vs[0] is the prior variance, vs[t] the
    per-entry MSE after t estimator iterations."""

    vs: np.ndarray
    delta: float
    sigma2: float
    prior: SignalPrior

    @property
    def final(self) -> float:
        return float(self.vs[-1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,v\n")
            for i, v in enumerate(self.vs):
                fh.write(f"{i},{v:.17g}\n")


def bg_mmse_denoiser(r, tau2: float, prior: SignalPrior):
    """Posterior mean and variance of x under the BG prior given r = x + N(0, tau2).

    Vectorized over r. The slab posterior weight is computed from the exponent
    difference of the two mixture likelihoods, which stays stable for tau2
    spanning many decades.
    """
    if tau2 <= 0:
        raise ValueError("tau2 must be positive")
    r = np.asarray(r, dtype=np.float64)
    sx2 = prior.sigma_x2
    # P(slab | r) = 1 / (1 + (1-rho)/rho * sqrt((sx2+tau2)/tau2) * exp(-r^2 sx2 / (2 tau2 (sx2+tau2))))
    odds = (1.0 - prior.rho) / prior.rho * np.sqrt((sx2 + tau2) / tau2)
    expo = -(r * r) * sx2 / (2.0 * tau2 * (sx2 + tau2))
    pi = 1.0 / (1.0 + odds * np.exp(expo))
    slab_mean = sx2 / (sx2 + tau2) * r
    slab_var = sx2 * tau2 / (sx2 + tau2)
    mean = pi * slab_mean
    var = pi * slab_var + pi * (1.0 - pi) * slab_mean ** 2
    return mean, var


@lru_cache(maxsize=None)
def _gh_nodes():
    u, w = np.polynomial.hermite.hermgauss(_GH_NODES)
    return np.sqrt(2.0) * u, w / np.sqrt(np.pi)


def mmse_scalar(tau2: float, prior: SignalPrior) -> float:
    """Scalar MMSE E[(x - E[x|x + N(0,tau2)])^2] for the BG prior.

    Gauss-Hermite quadrature over the two mixture components of the marginal
    law of r (spike: std sqrt(tau2); slab: std sqrt(sigma_x2 + tau2)).
    """
    z, w = _gh_nodes()
    _, var_spike = bg_mmse_denoiser(np.sqrt(tau2) * z, tau2, prior)
    _, var_slab = bg_mmse_denoiser(np.sqrt(prior.sigma_x2 + tau2) * z, tau2, prior)
    return float((1.0 - prior.rho) * (w @ var_spike) + prior.rho * (w @ var_slab))


def _se_step(v2: float, delta: float, sigma2: float, prior: SignalPrior) -> float:
    """One OAMP state-evolution update: linear stage then divergence-free denoiser."""
    tau2 = (1.0 / delta - 1.0) * v2 + sigma2 / delta
    if tau2 <= _TINY:
        return 0.0
    m = mmse_scalar(tau2, prior)
    m = min(m, (1.0 - 1e-12) * tau2)  # mmse < tau2 strictly for any proper prior
    return m * tau2 / (tau2 - m)


def state_evolution(delta: float, sigma2: float, prior: SignalPrior, iterations: int = 20) -> SETrace:
    """Deterministic per-entry MSE trajectory of the OAMP estimator.

    Depends only on the sampling ratio delta = M/d, the noise power, and the
    prior; a fresh row-orthonormal matrix per round leaves it unchanged.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    vs = [prior.variance]
    for _ in range(iterations):
        vs.append(_se_step(vs[-1], delta, sigma2, prior))
        if not np.isfinite(vs[-1]):
            raise FloatingPointError("state evolution diverged")
    return SETrace(np.array(vs), delta, sigma2, prior)


@lru_cache(maxsize=None)
def _se_final_cached(delta: float, sigma2: float, rho: float, sigma_x2: float, iterations: int) -> float:
    return state_evolution(delta, sigma2, SignalPrior(rho, sigma_x2), iterations).final


def estimate(y: np.ndarray, A, cfg: EstimatorConfig, noise_var: float) -> RecoveryResult:
    """Recover the aggregated vector from y = A x + n.

    identity: A^T y for square-orthonormal A; the error is exactly the rotated
    channel noise, so v_hat = noise_var.
    lmmse: linear MMSE under the Gaussian prior matched to the BG second
    moment; v_hat is the error-covariance trace over d.
    oamp: the iterative estimator described in the module docstring; returns
    the final iterate with its state-evolution variance.
    """
    if y.shape != (A.M,):
        raise ValueError(f"received vector has shape {y.shape}, expected ({A.M},)")
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    delta = A.M / A.d

    if cfg.kind == "identity":
        if A.M != A.d:
            raise ValueError("identity estimator requires M = d (square orthonormal A)")
        return RecoveryResult(A.adjoint(y), noise_var, np.array([noise_var]))

    if cfg.kind == "lmmse":
        v_x = cfg.prior.variance
        x_hat = (v_x / (v_x + noise_var)) * A.adjoint(y)
        v_hat = v_x * (1.0 - delta * v_x / (v_x + noise_var))
        return RecoveryResult(x_hat, v_hat, np.array([v_hat]))

    # oamp
    prior = cfg.prior
    x = np.zeros(A.d)
    v2 = prior.variance
    trace = np.zeros(cfg.iterations)
    for it in range(cfg.iterations):
        tau2 = (1.0 / delta - 1.0) * v2 + noise_var / delta
        r = x + (1.0 / delta) * A.adjoint(y - A.apply(x))
        if tau2 <= _TINY:
            x, v2 = r, 0.0
            trace[it:] = 0.0
            break
        m = mmse_scalar(tau2, prior)
        m = min(m, (1.0 - 1e-12) * tau2)
        post_mean, _ = bg_mmse_denoiser(r, tau2, prior)
        x_next = (tau2 / (tau2 - m)) * (post_mean - (m / tau2) * r)
        x = (1.0 - cfg.damping) * x + cfg.damping * x_next
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"oamp produced non-finite values at iteration {it}")
        v2 = m * tau2 / (tau2 - m)
        trace[it] = v2
    return RecoveryResult(x, float(v2), trace)


def vseq_for_bound(T: int, d: int, channel_cfg, est_cfg: EstimatorConfig) -> np.ndarray:
    """Predicted per-round estimation-error variance v^(t), t = 0..T-1.

    identity keeps the channel noise power every round; lmmse and oamp are
    constant in t because the per-round compression matrices share one
    ensemble, so the prediction is evaluated once and replicated.
    """
    if est_cfg.kind == "identity":
        return np.full(T, channel_cfg.sigma2)
    delta = channel_cfg.M / d
    if est_cfg.kind == "lmmse":
        v_x = est_cfg.prior.variance
        v = v_x * (1.0 - delta * v_x / (v_x + channel_cfg.sigma2))
        return np.full(T, v)
    v = _se_final_cached(delta, channel_cfg.sigma2, est_cfg.prior.rho,
                         est_cfg.prior.sigma_x2, est_cfg.iterations)
    return np.full(T, v)
