"""Core value types, units, validation, and run-configuration parsing.

Every other module (channel generation, scattering algebra, the per-channel
link solver, the offline surface trainer, and the experiment harness) builds
on the small set of immutable types defined here. Arrays held by these types
are copied on construction and have their writeable flag cleared, so
instances are safe to share across threads.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class DimensionError(ValueError):
    """A structural constraint on dimensions or parameter ranges is violated."""


class ConfigError(ValueError):
    """Run-configuration file contains an unknown key or an unparsable value."""


class GenerationError(RuntimeError):
    """Channel generation could not produce a valid sample (degenerate model)."""


class FormatError(ValueError):
    """A persisted file has bad magic, version, declared sizes, or truncation."""


class ChecksumError(FormatError):
    """Payload checksum mismatch in a persisted file."""


class SingularResolventError(RuntimeError):
    """The port resolvent is numerically singular (resonant configuration)."""


class DegenerateChannelError(ValueError):
    """A channel (or effective channel) is rank deficient or exactly zero."""


class NoProgressError(RuntimeError):
    """Backtracking could not find any non-increasing step (bad scaling)."""


class EmptyBatchError(ValueError):
    """An aggregate operation received an empty collection."""


# ---------------------------------------------------------------------------
# Units
# ---------------------------------------------------------------------------

def derive_seed(base: int, tag: int, index: int) -> int:
    """Deterministic child seed from (base, tag, index).

    Used wherever a reproducible substream is needed (per-sample solver
    seeds, per-size ensemble seeds) so independent consumers can never
    collide by accident.
    """
    seq = np.random.SeedSequence([base, tag, index])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power level in dBm to linear watts: 10^((p_dbm - 30) / 10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _isqrt_exact(m: int) -> int:
    r = math.isqrt(m)
    if r * r != m:
        raise DimensionError(f"n_ris_elements must be a perfect square, got {m}")
    return r


# ---------------------------------------------------------------------------
# System parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Dimensions and radio-level settings of one downlink scenario."""

    n_bs_antennas: int          # N, BS antennas
    n_users: int                # K, single-antenna users
    n_ris_elements: int         # M, surface elements (perfect square)
    tx_power_dbm: float = 30.0  # P in dBm
    noise_variance: float = 1.0  # sigma_w^2, linear watts
    rng_seed: int = 0

    def __post_init__(self):
        _check_params(self)

    @property
    def tx_power_watts(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)


def _check_params(p: SystemParams) -> None:
    if p.n_bs_antennas < 1 or p.n_users < 1 or p.n_ris_elements < 1:
        raise DimensionError("n_bs_antennas, n_users, n_ris_elements must be positive")
    if not p.n_users < p.n_bs_antennas:
        raise DimensionError(
            f"need n_users < n_bs_antennas, got K={p.n_users}, N={p.n_bs_antennas}")
    if not p.n_ris_elements > p.n_users:
        raise DimensionError(
            f"need n_ris_elements > n_users, got M={p.n_ris_elements}, K={p.n_users}")
    _isqrt_exact(p.n_ris_elements)
    if not math.isfinite(p.tx_power_dbm):
        raise DimensionError("tx_power_dbm must be finite")
    if dbm_to_watts(p.tx_power_dbm) <= 0.0:
        raise DimensionError("linear transmit power must be positive")
    # zero noise is allowed (noiseless special cases); negative is not
    if not (math.isfinite(p.noise_variance) and p.noise_variance >= 0.0):
        raise DimensionError("noise_variance must be finite and >= 0")
    if p.rng_seed < 0:
        raise DimensionError("rng_seed must be unsigned")


def validate_params(p: SystemParams) -> SystemParams:
    """Re-check every SystemParams invariant and return p unchanged.

    Raises
    ------
    DimensionError
        Naming the violated constraint.
    """
    _check_params(p)
    return p


# ---------------------------------------------------------------------------
# Surface coupling design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringDesign:
    """Diagonal coupling factors plus the fixed DFT-Kronecker basis.

    The surface state is the pair of real diagonal vectors (sigma_aa,
    sigma_ab) in the basis U = V = D kron D. Feasible designs satisfy, per
    element i, sigma_aa[i]^2 + sigma_ab[i]^2 = 1 (lossless surface) and the
    mirror pairing sigma[i] = sigma[M-1-i].
    """

    sigma_aa: np.ndarray        # (M,) real, diagonal of the port-to-port factor
    sigma_ab: np.ndarray        # (M,) real, diagonal of the port-to-space factor
    dft_factor: np.ndarray      # (M, M) complex, U = V = D kron D
    skip_circle_check: bool = field(default=False, repr=False, compare=False)
    # skip_circle_check exists only for the deliberately lossy diagnostic
    # baseline (identity port-to-space coupling); every design produced by
    # the training pipeline keeps the default strict validation.

    def __post_init__(self):
        object.__setattr__(self, "sigma_aa", _frozen(self.sigma_aa, float))
        object.__setattr__(self, "sigma_ab", _frozen(self.sigma_ab, float))
        object.__setattr__(self, "dft_factor", _frozen(self.dft_factor, complex))
        m = self.sigma_aa.shape[0]
        if self.sigma_aa.ndim != 1 or self.sigma_ab.shape != (m,):
            raise DimensionError("sigma_aa and sigma_ab must be equal-length vectors")
        if self.dft_factor.shape != (m, m):
            raise DimensionError(f"dft_factor must be {m}x{m}")
        eye = np.eye(m)
        basis_residual = np.linalg.norm(
            self.dft_factor @ self.dft_factor.conj().T - eye)
        if basis_residual > 1e-10:
            raise DimensionError(
                f"dft_factor is not unitary (residual {basis_residual:.2e})")
        if not np.array_equal(self.sigma_aa, self.sigma_aa[::-1]):
            raise DimensionError("sigma_aa violates the mirror pairing")
        if not np.array_equal(self.sigma_ab, self.sigma_ab[::-1]):
            raise DimensionError("sigma_ab violates the mirror pairing")
        if not self.skip_circle_check and self.circle_residual() > 1e-12:
            raise DimensionError(
                "per-element coupling magnitudes leave the unit circle "
                f"(residual {self.circle_residual():.2e})")

    @property
    def n_elements(self) -> int:
        return self.sigma_aa.shape[0]

    def circle_residual(self) -> float:
        """max_i |sigma_aa[i]^2 + sigma_ab[i]^2 - 1|."""
        return float(np.max(np.abs(self.sigma_aa**2 + self.sigma_ab**2 - 1.0)))


# ---------------------------------------------------------------------------
# Tunable phase state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RisPhaseConfig:
    """Per-element load phases theta_m, stored in [0, 2*pi).

    The diagonal load entries are derived as exp(1j * theta), so their unit
    modulus holds by construction rather than by projection tolerance.
    """

    phases: np.ndarray          # (M,) real radians

    def __post_init__(self):
        arr = np.asarray(self.phases, dtype=float)
        if arr.ndim != 1:
            raise DimensionError("phases must be a vector")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("phases must be finite")
        object.__setattr__(self, "phases", _frozen(np.mod(arr, 2.0 * np.pi), float))

    @property
    def n_elements(self) -> int:
        return self.phases.shape[0]

    def load_diagonal(self) -> np.ndarray:
        """Unimodular diagonal entries v_m = exp(1j * theta_m), shape (M,)."""
        return np.exp(1j * self.phases)


# ---------------------------------------------------------------------------
# Precoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Precoder:
    """Transmit beamforming matrix F (N x K) with common receive scale rho."""

    matrix: np.ndarray          # (N, K) complex
    rx_scale: float             # rho > 0

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, complex))
        if self.matrix.ndim != 2:
            raise DimensionError("precoder matrix must be N x K")
        if not np.all(np.isfinite(self.matrix)):
            raise DimensionError("precoder matrix must be finite")
        if not (math.isfinite(self.rx_scale) and self.rx_scale > 0.0):
            raise ValueError("rx_scale must be positive and finite")


# ---------------------------------------------------------------------------
# Channel sample
# ---------------------------------------------------------------------------

RANK_THRESHOLD = 1e-10  # scale-free numerical rank: sv_K > threshold * sv_1


@dataclass(frozen=True)
class ChannelSample:
    """One draw of the BS-to-surface and surface-to-users channels."""

    h_bs_ris: np.ndarray        # (M, N) complex
    h_ris_users: np.ndarray     # (M, K) complex, column k serves user k

    def __post_init__(self):
        object.__setattr__(self, "h_bs_ris", _frozen(self.h_bs_ris, complex))
        object.__setattr__(self, "h_ris_users", _frozen(self.h_ris_users, complex))
        if self.h_bs_ris.ndim != 2 or self.h_ris_users.ndim != 2:
            raise DimensionError("channel blocks must be matrices")
        if self.h_bs_ris.shape[0] != self.h_ris_users.shape[0]:
            raise DimensionError(
                "h_bs_ris and h_ris_users must agree on the surface dimension M")
        if not (np.all(np.isfinite(self.h_bs_ris))
                and np.all(np.isfinite(self.h_ris_users))):
            raise DimensionError("channel entries must be finite")
        k = self.h_ris_users.shape[1]
        sv = np.linalg.svd(self.h_bs_ris, compute_uv=False)
        if sv.shape[0] < k or sv[k - 1] <= RANK_THRESHOLD * sv[0]:
            raise DegenerateChannelError(
                f"h_bs_ris is numerically rank deficient below K={k}")

    @property
    def n_elements(self) -> int:
        return self.h_bs_ris.shape[0]

    @property
    def n_bs_antennas(self) -> int:
        return self.h_bs_ris.shape[1]

    @property
    def n_users(self) -> int:
        return self.h_ris_users.shape[1]


# ---------------------------------------------------------------------------
# Run configuration file
# ---------------------------------------------------------------------------

CHANNEL_MODELS = ("iid_rayleigh", "rician")
PHASE_INITS = ("zeros", "uniform_random")
SCHEME_TAGS = ("proposed_mc_optimized", "fixed_mc_baseline", "conventional_no_mc")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat key=value run configuration with desk-scale defaults.

    Field names double as the documented config-file key set; unknown keys
    in a file are rejected so typos cannot silently fall back to defaults.
    """

    # system
    n_bs_antennas: int = 8
    n_users: int = 3
    n_ris_elements: int = 16
    tx_power_dbm: float = 30.0
    noise_variance: float = 1.0
    rng_seed: int = 0
    # channel ensemble
    channel_model: str = "iid_rayleigh"
    rician_k_factor: float = 0.0
    q_train: int = 4
    e_eval: int = 20
    channel_seed: int = 1234
    # offline surface training (outer loop)
    outer_iterations: int = 30
    outer_step_size: float = 0.05
    init_sigma_aa: float = 0.0
    resample_per_iteration: bool = False
    warm_start_inner: bool = False
    fd_check: bool = False
    # per-channel link solver (inner loop)
    inner_alternations: int = 40
    ris_gradient_steps: int = 4
    ris_step_size: float = 1.0
    rel_tolerance: float = 1e-6
    phase_init: str = "uniform_random"
    # harness
    fixed_mc_coupling: float = 0.5
    infeasible_baseline: bool = False
    power_grid_dbm: tuple = (30.0, 40.0, 50.0, 60.0)
    m_grid: tuple = (16, 36, 64)
    schemes: tuple = SCHEME_TAGS

    def __post_init__(self):
        if self.channel_model not in CHANNEL_MODELS:
            raise ConfigError(f"channel_model must be one of {CHANNEL_MODELS}")
        if self.phase_init not in PHASE_INITS:
            raise ConfigError(f"phase_init must be one of {PHASE_INITS}")
        for s in self.schemes:
            if s not in SCHEME_TAGS:
                raise ConfigError(f"unknown scheme tag {s!r}")
        if not 0.0 <= self.init_sigma_aa < 1.0:
            raise ConfigError("init_sigma_aa must lie in [0, 1)")
        if not 0.0 <= self.fixed_mc_coupling < 1.0:
            raise ConfigError("fixed_mc_coupling must lie in [0, 1)")
        if self.outer_step_size <= 0 or self.ris_step_size <= 0:
            raise ConfigError("step sizes must be positive")
        if self.rel_tolerance <= 0:
            raise ConfigError("rel_tolerance must be positive")
        if self.rician_k_factor < 0:
            raise ConfigError("rician_k_factor must be nonnegative")

    def system_params(self) -> SystemParams:
        return SystemParams(
            n_bs_antennas=self.n_bs_antennas,
            n_users=self.n_users,
            n_ris_elements=self.n_ris_elements,
            tx_power_dbm=self.tx_power_dbm,
            noise_variance=self.noise_variance,
            rng_seed=self.rng_seed,
        )


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(name: str, text: str, example):
    if isinstance(example, bool):
        return _parse_bool(text)
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    if isinstance(example, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        elem = example[0] if example else 0.0
        if isinstance(elem, str):
            return tuple(items)
        if isinstance(elem, int):
            return tuple(int(t) for t in items)
        return tuple(float(t) for t in items)
    return text.strip()


def load_config(path) -> ExperimentConfig:
    """Parse a key = value configuration file into an ExperimentConfig.

    Lines starting with '#' and blank lines are skipped; trailing '#'
    comments are stripped. Unknown keys raise ConfigError so that typos are
    caught instead of silently using defaults.
    """
    known = {f.name: getattr(ExperimentConfig(), f.name)
             for f in fields(ExperimentConfig)}
    overrides = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            overrides[key] = _parse_value(key, value, known[key])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return ExperimentConfig(**overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable 12-hex-digit digest of a configuration (order independent)."""
    parts = []
    for f in sorted(fields(ExperimentConfig), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            rendered = ",".join(repr(v) for v in value)
        else:
            rendered = repr(value)
        parts.append(f"{f.name}={rendered}")
    digest = hashlib.sha256("\n".join(parts).encode()).hexdigest()
    return digest[:12]
