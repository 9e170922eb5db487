"""Large-scale fading: three-slope path loss, log-normal shadowing, SNR normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import NetworkDrop, wrap_distance_matrix

BOLTZMANN = 1.380649e-23  # J/K

SHADOWING_MODES = ("none", "iid", "correlated")


def cost231_fixed_loss(frequency_mhz: float, ap_height_m: float, user_height_m: float) -> float:
    """COST231-Hata fixed-loss constant L (dB) anchoring the far path-loss slope.

    Frequency in MHz, antenna heights in meters.
    """
    lf = np.log10(frequency_mhz)
    return float(46.3 + 33.9 * lf
                 - 13.82 * np.log10(ap_height_m)
                 - (1.1 * lf - 0.7) * user_height_m
                 + (1.56 * lf - 0.8))


@dataclass
class PathLossParams:
    d0: float = 10.0                     # near breakpoint, meters
    d1: float = 50.0                     # far breakpoint, meters
    carrier_frequency: float = 1900.0    # MHz
    ap_height: float = 15.0              # meters
    user_height: float = 1.65            # meters
    fixed_loss_db: float | None = None   # None -> COST231-Hata constant

    def __post_init__(self):
        if not 0 < self.d0 < self.d1:
            raise ValueError("breakpoints must satisfy 0 < d0 < d1")
        if self.fixed_loss_db is None:
            self.fixed_loss_db = cost231_fixed_loss(
                self.carrier_frequency, self.ap_height, self.user_height)


@dataclass
class ShadowingParams:
    sigma_sh: float = 8.0       # dB
    rho1: float = 0.5           # AP-side share of the shadowing variance
    d_decorr: float = 100.0     # decorrelation distance, meters
    mode: str = "iid"           # one of SHADOWING_MODES

    def __post_init__(self):
        if self.mode not in SHADOWING_MODES:
            raise ValueError(f"mode must be one of {SHADOWING_MODES}")
        if not 0.0 <= self.rho1 <= 1.0:
            raise ValueError("rho1 must lie in [0, 1]")
        if self.d_decorr <= 0:
            raise ValueError("d_decorr must be positive")
        if self.sigma_sh < 0:
            raise ValueError("sigma_sh must be non-negative")


@dataclass
class RadioConfig:
    ap_power: float = 0.2               # watts
    pilot_power: float = 0.1            # watts
    bandwidth: float = 20e6             # Hz
    noise_figure: float = 9.0           # dB
    noise_temperature: float = 290.0    # kelvin

    def __post_init__(self):
        for name in ("ap_power", "pilot_power", "bandwidth", "noise_figure",
                     "noise_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class LargeScale:
    beta: np.ndarray  # (M, K), linear-scale path gain including shadowing

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.ndim != 2:
            raise ValueError("beta must be a 2-D matrix")
        if not np.all(np.isfinite(self.beta)) or np.any(self.beta <= 0):
            raise ValueError("beta entries must be strictly positive and finite")


def beta_matrix(beta) -> np.ndarray:
    """Accept a LargeScale or a bare (M, K) array and return the array."""
    if isinstance(beta, LargeScale):
        return beta.beta
    return np.asarray(beta, dtype=float)


def path_loss_db(d, params: PathLossParams):
    """Three-slope path gain in dB (negative), continuous at both breakpoints.

    35 dB/decade beyond d1, 20 dB/decade between d0 and d1, flat below d0.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    loss = params.fixed_loss_db
    d1_km = params.d1 / 1000.0
    d0_km = params.d0 / 1000.0
    d_km = np.maximum(d, params.d0) / 1000.0  # clip keeps log10 finite; only d > d0 uses it
    far = -loss - 35.0 * np.log10(d_km)
    mid = -loss - 15.0 * np.log10(d1_km) - 20.0 * np.log10(d_km)
    near = -loss - 15.0 * np.log10(d1_km) - 20.0 * np.log10(d0_km)
    out = np.where(d > params.d1, far, np.where(d > params.d0, mid, near))
    if out.ndim == 0:
        return float(out)
    return out


def spatial_covariance(points, d_decorr: float, extent: float) -> np.ndarray:
    """Exponential spatial correlation 2^(-d/d_decorr) over wrapped distances."""
    d = wrap_distance_matrix(points, points, extent)
    return np.power(2.0, -d / d_decorr)


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of a nominally-PSD covariance, with bounded jitter retries."""
    eye = np.eye(cov.shape[0])
    for jitter in (0.0, 1e-12, 1e-10):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "shadowing covariance is not positive definite (jitter up to 1e-10 tried)")


def sample_shadowing(drop: NetworkDrop, params: ShadowingParams,
                     rng: np.random.Generator) -> np.ndarray:
    """Sample the (M, K) standard-normal shadowing field z.

    mode="iid" draws independent entries. mode="correlated" draws
    z_mk = sqrt(rho1) a_m + sqrt(1-rho1) b_k with exponentially correlated
    AP and user components (independent of each other), each sampled through
    a Cholesky factor of its wrap-around-distance covariance.
    """
    if params.mode == "none":
        raise ValueError("sample_shadowing requires mode 'iid' or 'correlated'")
    m, k = drop.n_aps, drop.n_users
    if params.mode == "iid":
        return rng.standard_normal((m, k))
    cov_ap = spatial_covariance(drop.ap_positions, params.d_decorr, drop.extent)
    cov_user = spatial_covariance(drop.user_positions, params.d_decorr, drop.extent)
    a = _covariance_factor(cov_ap) @ rng.standard_normal(m)
    b = _covariance_factor(cov_user) @ rng.standard_normal(k)
    return np.sqrt(params.rho1) * a[:, None] + np.sqrt(1.0 - params.rho1) * b[None, :]


def large_scale(drop: NetworkDrop, pl_params: PathLossParams,
                sh_params: ShadowingParams, rng: np.random.Generator) -> LargeScale:
    """Compute the (M, K) matrix of linear path gains: path loss times shadowing."""
    dist = wrap_distance_matrix(drop.ap_positions, drop.user_positions, drop.extent)
    gain_db = path_loss_db(dist, pl_params)
    if sh_params.mode != "none":
        gain_db = gain_db + sh_params.sigma_sh * sample_shadowing(drop, sh_params, rng)
    return LargeScale(np.power(10.0, gain_db / 10.0))


def normalized_snr(power: float, radio: RadioConfig) -> float:
    """Transmit power divided by the receiver noise power (dimensionless).

    Noise power is k_B * T * B * 10^(NF/10).
    """
    if power <= 0:
        raise ValueError("power must be positive")
    noise = (BOLTZMANN * radio.noise_temperature * radio.bandwidth
             * 10.0 ** (radio.noise_figure / 10.0))
    return power / noise


def save_beta_csv(beta, path) -> None:
    """Write a beta matrix as CSV, one row per AP, one column per user."""
    np.savetxt(path, beta_matrix(beta), delimiter=",", fmt="%.17g")
