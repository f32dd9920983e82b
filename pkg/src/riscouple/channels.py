"""Seeded channel ensembles for training and held-out evaluation.

Samples are drawn from independent per-sample substreams of one seed, so
changing the requested counts never perturbs earlier samples, and distinct
samples may be generated concurrently with identical results.

Binary ensemble file layout (all fields little endian):

    offset  field
    0       magic "RISC" (4 bytes)
    4       u32 format version (currently 1)
    8       u8  channel model tag (0 = iid_rayleigh, 1 = rician)
    9       u64 ensemble seed
    17      u32 N (BS antennas), u32 K (users), u32 M (surface elements),
            u32 Q (training samples), u32 E (evaluation samples)
    37      f64 rician K-factor
    45      f64 tx_power_dbm, f64 noise_variance, u64 params rng_seed
            (the extra parameter fields make load(save(e)) reproduce the
            embedded SystemParams exactly, not only the dimensions)
    69      payload: per sample, h_bs_ris then h_ris_users, each row major
            as (re, im) pairs of f64; samples ordered training then
            evaluation
    end-4   u32 CRC32 of the payload bytes

Read failures raise OSError (unreadable path), FormatError (bad magic,
version, model tag, declared sizes, or truncation), or ChecksumError.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ChannelSample,
    ChecksumError,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    FormatError,
    GenerationError,
    SystemParams,
    validate_params,
)

MODEL_TAG_CODES = {"iid_rayleigh": 0, "rician": 1}
_CODE_TO_TAG = {code: tag for tag, code in MODEL_TAG_CODES.items()}

_MAGIC = b"RISC"
_VERSION = 1
_HEADER = struct.Struct("<4sIBQIIIIIdddQ")
_TRAIN_STREAM = 0
_EVAL_STREAM = 1
_REDRAW_ATTEMPTS = 100


@dataclass(frozen=True)
class ChannelEnsemble:
    """A seeded collection of training and evaluation channel samples."""

    params: SystemParams
    training: tuple              # Q ChannelSample draws, the optimizer's view
    evaluation: tuple            # E held-out ChannelSample draws
    model_tag: str
    rician_k_factor: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "training", tuple(self.training))
        object.__setattr__(self, "evaluation", tuple(self.evaluation))
        if self.model_tag not in MODEL_TAG_CODES:
            raise ConfigError(f"unknown channel model {self.model_tag!r}")
        if len(self.training) < 1:
            raise DimensionError("an ensemble needs at least one training sample")
        p = self.params
        for sample in self.training + self.evaluation:
            if (sample.n_elements != p.n_ris_elements
                    or sample.n_bs_antennas != p.n_bs_antennas
                    or sample.n_users != p.n_users):
                raise DimensionError("sample dimensions disagree with params")

    @property
    def q_train(self) -> int:
        return len(self.training)

    @property
    def e_eval(self) -> int:
        return len(self.evaluation)


def sample_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Deterministic per-sample substream; identical regardless of draw order."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, index]))


def _crandn(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    # CN(0, 1) entries: unit variance split evenly between re and im parts
    return (rng.standard_normal((rows, cols))
            + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def _ula_vector(n: int, sine: float) -> np.ndarray:
    # half-wavelength uniform linear array response, unit-modulus entries
    return np.exp(1j * np.pi * np.arange(n) * sine)


def _upa_vector(side: int, sine_u: float, sine_v: float) -> np.ndarray:
    # square planar array flattened row major to match the Kronecker index grid
    p, q = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    return np.exp(1j * np.pi * (p * sine_u + q * sine_v)).ravel()


def _draw_sample(rng: np.random.Generator, params: SystemParams,
                 model: str, k_factor: float) -> ChannelSample:
    m = params.n_ris_elements
    n = params.n_bs_antennas
    k = params.n_users
    side = int(round(np.sqrt(m)))
    last_error = None
    for _ in range(_REDRAW_ATTEMPTS):
        # diffuse parts first, so the k_factor = 0 case consumes exactly the
        # draws of the pure Rayleigh path and stays bit-identical to it
        h_bs_ris = _crandn(rng, m, n)
        h_ris_users = _crandn(rng, m, k)
        if model == "rician":
            surf_u, surf_v = rng.uniform(-1.0, 1.0, 2)
            bs_sine = rng.uniform(-1.0, 1.0)
            user_sines = rng.uniform(-1.0, 1.0, (k, 2))
            if k_factor > 0.0:
                los_w = np.sqrt(k_factor / (1.0 + k_factor))
                nlos_w = np.sqrt(1.0 / (1.0 + k_factor))
                bs_los = np.outer(_upa_vector(side, surf_u, surf_v),
                                  _ula_vector(n, bs_sine).conj())
                user_los = np.stack(
                    [_upa_vector(side, su, sv) for su, sv in user_sines], axis=1)
                h_bs_ris = los_w * bs_los + nlos_w * h_bs_ris
                h_ris_users = los_w * user_los + nlos_w * h_ris_users
        try:
            return ChannelSample(h_bs_ris=h_bs_ris, h_ris_users=h_ris_users)
        except DegenerateChannelError as exc:
            last_error = exc
    raise GenerationError(
        f"no full-rank sample after {_REDRAW_ATTEMPTS} redraws: {last_error}")


def generate_ensemble(params: SystemParams, q_train: int, e_eval: int,
                      model: str = "iid_rayleigh", seed: int = 0,
                      rician_k_factor: float = 0.0) -> ChannelEnsemble:
    """Draw Q training and E evaluation samples, deterministic in seed.

    Parameters
    ----------
    params : SystemParams
        Validated system dimensions.
    q_train, e_eval : int
        Training samples (>= 1) and held-out evaluation samples (>= 0).
    model : str
        "iid_rayleigh" (CN(0,1) entries) or "rician" (line-of-sight steering
        outer product mixed with the same diffuse draw at the given factor).
    seed : int
        Base seed; sample i of each split uses substream (seed, split, i).
    rician_k_factor : float
        Power ratio of the line-of-sight part; ignored for iid_rayleigh.

    Raises
    ------
    GenerationError
        If q_train < 1, or a sample stays rank deficient after 100 redraws.
    """
    validate_params(params)
    if model not in MODEL_TAG_CODES:
        raise ConfigError(f"unknown channel model {model!r}")
    if q_train < 1:
        raise GenerationError("q_train must be at least 1")
    if e_eval < 0:
        raise DimensionError("e_eval must be nonnegative")
    if rician_k_factor < 0:
        raise ConfigError("rician_k_factor must be nonnegative")
    if seed < 0:
        raise ConfigError("seed must be unsigned")
    kappa = float(rician_k_factor) if model == "rician" else 0.0
    training = tuple(
        _draw_sample(sample_rng(seed, _TRAIN_STREAM, i), params, model, kappa)
        for i in range(q_train))
    evaluation = tuple(
        _draw_sample(sample_rng(seed, _EVAL_STREAM, i), params, model, kappa)
        for i in range(e_eval))
    return ChannelEnsemble(params=params, training=training, evaluation=evaluation,
                           model_tag=model, rician_k_factor=kappa, seed=int(seed))


def save_ensemble(e: ChannelEnsemble, path) -> None:
    """Write the ensemble with header, raw complex payload, and payload CRC32."""
    p = e.params
    header = _HEADER.pack(
        _MAGIC, _VERSION, MODEL_TAG_CODES[e.model_tag], e.seed,
        p.n_bs_antennas, p.n_users, p.n_ris_elements,
        e.q_train, e.e_eval, e.rician_k_factor,
        p.tx_power_dbm, p.noise_variance, p.rng_seed)
    chunks = []
    for sample in e.training + e.evaluation:
        chunks.append(np.ascontiguousarray(sample.h_bs_ris).astype("<c16").tobytes())
        chunks.append(np.ascontiguousarray(sample.h_ris_users).astype("<c16").tobytes())
    payload = b"".join(chunks)
    trailer = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(header + payload + trailer)


def load_ensemble(path) -> ChannelEnsemble:
    """Read an ensemble written by save_ensemble; exact inverse, bit for bit."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4:
        raise FormatError(f"{path}: truncated file ({len(data)} bytes)")
    (magic, version, tag_code, seed, n, k, m, q, e_count, kappa,
     tx_power_dbm, noise_variance, params_seed) = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if tag_code not in _CODE_TO_TAG:
        raise FormatError(f"{path}: unknown model tag {tag_code}")
    sample_bytes = (m * n + m * k) * 16
    expected = _HEADER.size + (q + e_count) * sample_bytes + 4
    if len(data) != expected:
        raise FormatError(
            f"{path}: declared sizes need {expected} bytes, file has {len(data)}")
    payload = data[_HEADER.size:-4]
    (crc_stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError(f"{path}: payload CRC32 mismatch")
    try:
        params = SystemParams(
            n_bs_antennas=n, n_users=k, n_ris_elements=m,
            tx_power_dbm=tx_power_dbm, noise_variance=noise_variance,
            rng_seed=params_seed)
    except DimensionError as exc:
        raise FormatError(f"{path}: header declares invalid dimensions: {exc}") from exc

    def read_sample(index: int) -> ChannelSample:
        start = index * sample_bytes
        split = start + m * n * 16
        h_bs_ris = np.frombuffer(payload[start:split], dtype="<c16").reshape(m, n)
        h_ris_users = np.frombuffer(
            payload[split:start + sample_bytes], dtype="<c16").reshape(m, k)
        return ChannelSample(h_bs_ris=h_bs_ris, h_ris_users=h_ris_users)

    training = tuple(read_sample(i) for i in range(q))
    evaluation = tuple(read_sample(q + i) for i in range(e_count))
    return ChannelEnsemble(params=params, training=training, evaluation=evaluation,
                           model_tag=_CODE_TO_TAG[tag_code],
                           rician_k_factor=kappa, seed=seed)
