"""Precoding, Monte-Carlo rates, and the closed-form average-rate chain.

The analytic chain approximates the Gram matrix of the effective channel by a
central complex Wishart whose scale matrix combines the per-user channel
covariance with the outer product of the channel means.  A Sherman-Morrison
step turns the scale matrix's diagonal-plus-rank-one structure into scalar
formulas, and the expected log-rate follows from the digamma identity for the
diagonal of an inverted Wishart.

Note on normalisation: channels here carry their total expected power in the
large-scale gain (unit-norm steering vectors), so the Wishart scale matrix of
the Gram is the covariance divided by the antenna count.  The rate formulas
below therefore divide the effective SNR by the antenna count; dropping that
factor overstates every rate by roughly the array size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .channel import (
    LosGeometry,
    SystemConfig,
    effective_channel,
    precompute_los,
    sample_channel_realization,
)
from .errors import SingularChannel, ValidationError
from .geometry import CellGeometry, RisPose, UserLocation

_COND_LIMIT = 1e12


def zf_precoder(h_eff: np.ndarray):
    """Zero-forcing precoder for a K x Nt effective channel.

    Returns (u, f, u_norm2): the unnormalised precoding matrix Nt x K, its
    unit-norm columns, and the squared column norms (the diagonal of the
    inverted Gram).  Raises SingularChannel when the Gram's condition number
    exceeds 1e12.
    """
    svals = np.linalg.svd(h_eff, compute_uv=False)
    if svals[-1] <= 0.0 or (svals[0] / svals[-1]) ** 2 > _COND_LIMIT:
        raise SingularChannel("effective channel Gram is numerically singular")
    gram = h_eff @ h_eff.conj().T
    inv_gram = np.linalg.inv(gram)
    u = h_eff.conj().T @ inv_gram
    u_norm2 = np.real(np.diag(inv_gram)).copy()
    f = u / np.sqrt(u_norm2)[None, :]
    return u, f, u_norm2


def mmse_precoder(h_eff: np.ndarray, alpha: float):
    """Regularised precoder u = H^H (H H^H + alpha I)^-1; well-defined for
    alpha > 0.  u_norm2 holds the true squared column norms."""
    if alpha <= 0.0:
        raise ValidationError("regulariser must be positive")
    k = h_eff.shape[0]
    gram = h_eff @ h_eff.conj().T
    inv_reg = np.linalg.inv(gram + alpha * np.eye(k))
    u = h_eff.conj().T @ inv_reg
    u_norm2 = np.real(np.einsum("ij,ij->j", np.conj(u), u)).copy()
    f = u / np.sqrt(np.maximum(u_norm2, 1e-300))[None, :]
    return u, f, u_norm2


def instantaneous_user_rate(p: float, sigma2: float, u_norm2: float) -> float:
    """Interference-free rate log2(1 + p / (sigma2 * u_norm2))."""
    return math.log2(1.0 + p / (sigma2 * u_norm2))


@dataclass
class RateSummary:
    """Monte-Carlo rate estimate with per-entry standard errors."""

    per_user_per_subcarrier: np.ndarray
    sum_rate: float
    trials: int
    std_error: np.ndarray


def monte_carlo_sum_rate(cfg: SystemConfig, geom: CellGeometry, pose: RisPose,
                         users: list[UserLocation], theta: np.ndarray, trials: int,
                         rng: np.random.Generator, los: LosGeometry = None) -> RateSummary:
    """Empirical mean of the per-user, per-subcarrier ZF rate over channel
    draws, with equal power per stream.

    Singular draws are skipped and counted; more than 1% skips is an error so
    the estimator cannot silently degrade.
    """
    if trials < 1:
        raise ValidationError("need at least one trial")
    if los is None:
        los = precompute_los(cfg, geom, pose, users)
    p = cfg.power_per_stream
    samples = []
    skipped = 0
    for _ in range(trials):
        real = sample_channel_realization(cfg, geom, pose, users, rng, los=los)
        h_all = effective_channel(real, theta, real.omega)
        trial = np.zeros((len(users), cfg.m))
        try:
            for mi in range(cfg.m):
                _, _, u_norm2 = zf_precoder(h_all[mi])
                trial[:, mi] = np.log2(1.0 + p / (cfg.sigma2 * u_norm2))
        except SingularChannel:
            skipped += 1
            continue
        samples.append(trial)
    if skipped > 0.01 * trials:
        raise SingularChannel(f"{skipped}/{trials} singular draws")
    stack = np.stack(samples)
    n = stack.shape[0]
    # Compensated per-entry summation keeps the aggregate reproducible to
    # 1e-9 regardless of how trials would be partitioned across workers.
    mean = np.apply_along_axis(math.fsum, 0, stack) / n
    std_error = stack.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return RateSummary(
        per_user_per_subcarrier=mean,
        sum_rate=math.fsum(mean.ravel()),
        trials=n,
        std_error=std_error,
    )


def rician_ratios(cfg: SystemConfig):
    """(cascade scattered weight, cascade deterministic weight, direct
    deterministic weight) in the covariance formulas; los_only takes the
    infinite-Rician limit."""
    if cfg.los_only:
        return 0.0, 1.0, 1.0
    denom = (cfg.k0 + 1.0) * (cfg.k2 + 1.0)
    return (cfg.k0 + cfg.k2 + 1.0) / denom, cfg.k0 * cfg.k2 / denom, cfg.k1 / (cfg.k1 + 1.0)


def _cascade_couplings(los: LosGeometry, theta: np.ndarray) -> np.ndarray:
    """Scalar panel couplings c[m, k] = h_bar_k^H Phi^H a_ris for every
    subcarrier and user (zero for unserved users)."""
    return np.einsum("kmr,r,mr->mk", np.conj(los.h_bar), np.conj(theta), los.a_ris)


def covariance_entry(i: int, j: int, m: int, cfg: SystemConfig, geom: CellGeometry,
                     pose: RisPose, users: list[UserLocation], theta: np.ndarray,
                     los: LosGeometry = None) -> complex:
    """(i, j) entry of the effective-channel covariance at subcarrier m.

    Diagonal entries combine the direct-link gain, the scattered cascade
    power, and the deterministic cascade power through the panel coupling;
    off-diagonal entries carry only the deterministic cross coupling.
    """
    if los is None:
        los = precompute_los(cfg, geom, pose, users)
    c = _cascade_couplings(los, theta)
    r_nlos, r_los, _ = rician_ratios(cfg)
    gamma_ij = c[m, i] * np.conj(c[m, j])
    if i == j:
        return complex(
            los.beta1[i]
            + los.omega[i] * r_nlos * los.beta0 * los.beta2[i]
            + los.omega[i] * r_los * los.beta0 * los.beta2[i] * gamma_ij.real
        )
    cross = los.omega[i] * los.omega[j] * r_los * los.beta0
    return complex(cross * math.sqrt(los.beta2[i] * los.beta2[j]) * gamma_ij)


def covariance_matrix(m: int, cfg: SystemConfig, geom: CellGeometry, pose: RisPose,
                      users: list[UserLocation], theta: np.ndarray,
                      los: LosGeometry = None) -> np.ndarray:
    """Dense K x K covariance at subcarrier m (Hermitian by construction)."""
    if los is None:
        los = precompute_los(cfg, geom, pose, users)
    k = len(users)
    out = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            out[i, j] = covariance_entry(i, j, m, cfg, geom, pose, users, theta, los=los)
    return out


@dataclass
class ClosedFormContext:
    """Scalars feeding the analytic rate formulas for a fixed layout/phases.

    kappa: per-user composite gain (K,); tau: deterministic-cascade weight
    over the antenna count; xi: (M, K) complex cascade amplitudes; mu: (M, K,
    Nt) channel-mean rows; sigma_hat: (M, K, K) Wishart scale matrices; pbar:
    per-stream power.
    """

    kappa: np.ndarray
    tau: float
    xi: np.ndarray
    mu: np.ndarray
    sigma_hat: np.ndarray
    pbar: float


def build_closed_form_context(cfg: SystemConfig, geom: CellGeometry, pose: RisPose,
                              users: list[UserLocation], theta: np.ndarray,
                              los: LosGeometry = None) -> ClosedFormContext:
    if los is None:
        los = precompute_los(cfg, geom, pose, users)
    k = len(users)
    r_nlos, r_los, r_direct = rician_ratios(cfg)
    c = _cascade_couplings(los, theta)

    kappa = los.beta1 * (1.0 + r_direct / cfg.nt) + los.omega * r_nlos * los.beta0 * los.beta2
    tau = r_los / cfg.nt
    xi = c * (los.omega * np.sqrt(los.beta0 * los.beta2))[None, :]

    mu = np.zeros((cfg.m, k, cfg.nt), dtype=complex)
    sigma_hat = np.zeros((cfg.m, k, k), dtype=complex)
    for mi in range(cfg.m):
        mean = (
            np.sqrt(los.beta1 * r_direct)[:, None] * los.d_bar[:, mi, :]
            + (los.omega * np.sqrt(los.beta0 * los.beta2 * r_los) * np.conj(c[mi]))[:, None]
            * los.b_ris[mi][None, :]
        )
        mu[mi] = np.conj(mean)
        sigma = covariance_matrix(mi, cfg, geom, pose, users, theta, los=los)
        sh = sigma + mean.conj() @ mean.T / cfg.nt
        sigma_hat[mi] = 0.5 * (sh + sh.conj().T)

    ctx = ClosedFormContext(kappa=kappa, tau=tau, xi=xi, mu=mu,
                            sigma_hat=sigma_hat, pbar=cfg.power_per_stream)
    if np.any(kappa <= 0.0):
        raise ValidationError("composite user gains must be positive")
    return ctx


def sigma_hat_inv_entry(k: int, m: int, ctx: ClosedFormContext) -> float:
    """(k, k) entry of the inverted Wishart scale matrix via the
    Sherman-Morrison identity (linear in tau)."""
    kap = ctx.kappa
    xi2 = np.abs(ctx.xi[m]) ** 2
    denom = 1.0 + ctx.tau * float(np.sum(xi2 / kap))
    return 1.0 / kap[k] - (ctx.tau * xi2[k] / kap[k] ** 2) / denom


def _snr_scale(cfg: SystemConfig, pbar: float) -> float:
    """Per-stream SNR factor exp(psi(Nt-K+1)) / (Nt * sigma2) times power."""
    return pbar * math.exp(digamma(cfg.nt - cfg.k + 1)) / (cfg.nt * cfg.sigma2)


def approx_rate(k: int, m: int, ctx: ClosedFormContext, cfg: SystemConfig) -> float:
    """Closed-form average user rate at subcarrier m, including the
    deterministic-cascade boost."""
    kap = ctx.kappa
    xi2 = np.abs(ctx.xi[m]) ** 2
    others = 1.0 + ctx.tau * float(np.sum(xi2 / kap) - xi2[k] / kap[k])
    boost = 1.0 + (ctx.tau * xi2[k] / kap[k]) / others
    return math.log2(1.0 + _snr_scale(cfg, ctx.pbar) * kap[k] * boost)


def lower_bound_rate(k: int, ctx: ClosedFormContext, cfg: SystemConfig) -> float:
    """Cascade-blind lower bound of the closed-form rate; identical across
    subcarriers under the equal power split."""
    return math.log2(1.0 + _snr_scale(cfg, ctx.pbar) * ctx.kappa[k])


def no_ris_rate(k: int, cfg: SystemConfig, beta1k: float) -> float:
    """Closed-form average rate with the panel absent."""
    _, _, r_direct = rician_ratios(cfg)
    kap = beta1k * (1.0 + r_direct / cfg.nt)
    return math.log2(1.0 + _snr_scale(cfg, cfg.power_per_stream) * kap)


def mmse_closed_form_rate(k: int, m: int, ctx: ClosedFormContext, cfg: SystemConfig,
                          alpha: float) -> float:
    """Closed-form average rate under the regularised precoder.

    Builds the expected inverted Gram from the Wishart scale matrix, then
    inverts the regularised sum through a second Sherman-Morrison step; only
    K-sized vector algebra is involved.
    """
    if alpha <= 0.0:
        raise ValidationError("regulariser must be positive")
    nt, k_users = cfg.nt, cfg.k
    kap = ctx.kappa
    xi = ctx.xi[m]
    xi_hat = xi / kap
    s = 1.0 + ctx.tau * float(np.sum(np.abs(xi) ** 2 / kap))
    b = -ctx.tau / s

    # Expected inverted Gram: diagonal plus rank one, scaled by Nt/(Nt-K).
    scale = nt / (nt - k_users)
    e_winv = scale * (np.diag(1.0 / kap) + b * np.outer(xi_hat, np.conj(xi_hat)))

    lam = scale / kap + 1.0 / alpha
    rho = scale * b
    denom = 1.0 + rho * float(np.sum(np.abs(xi_hat) ** 2 / lam))
    zinv_row = np.zeros(k_users, dtype=complex)
    zinv_row[k] = 1.0 / lam[k]
    zinv_row -= rho * (xi_hat[k] / lam[k]) * np.conj(xi_hat) / lam / denom

    varpi = float(np.real(zinv_row @ e_winv[:, k])) / alpha
    return math.log2(1.0 + ctx.pbar / (cfg.sigma2 * varpi))
