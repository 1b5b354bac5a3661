"""Versioned binary container for fitted models and their calibration profiles.

Layout (little-endian)::

    4s   magic b"SHMM"
    u16  format version
    u8   model kind (1 pca, 2 hpca, 3 ae)
    u8   precision in bytes (4 or 8)
    u32  M
    u32  k
    u32  header length H
    H    JSON header: scalars, profiles and the name/shape of every array
    ...  raw arrays in header order
    u32  CRC32 of everything before it
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .detector import DetectorProfile
from .energy_filter import EnergyFilterProfile
from .errors import ChecksumError, FormatError, ParameterError, VersionMismatchError
from .reconstruct import AeModel, HpcaState, PcaModel, ReconModel, model_kind
from .signal import Frontend

MAGIC = b"SHMM"
FORMAT_VERSION = 1
PREFIX = struct.Struct("<4sHBBIII")
KIND_CODES = {"pca": 1, "hpca": 2, "ae": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


@dataclass
class ModelBundle:
    model: ReconModel
    energy_profile: EnergyFilterProfile | None
    detector_profile: DetectorProfile | None
    frontend: Frontend | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def _model_arrays(model: ReconModel) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if isinstance(model, PcaModel):
        return {"mean": model.mean, "components": model.components, "eigenvalues": model.eigenvalues}, {}
    if isinstance(model, HpcaState):
        arrays = {"components": model.components_estimate, "eigenvalues": model.eigenvalues, "mean": model.mean}
        scalars = {"samples_seen": model.samples_seen, "blocks_seen": model.blocks_seen,
                   "history_weight": model.history_weight, "rng_seed": model.rng_seed,
                   "zero_variance": model.zero_variance}
        return arrays, scalars
    arrays = {"enc_weights": model.enc_weights, "enc_bias": model.enc_bias,
              "dec_weights": model.dec_weights, "dec_bias": model.dec_bias, "mean": model.mean}
    meta = {k: (list(v) if isinstance(v, tuple) else v) for k, v in model.train_meta.items()}
    return arrays, {"activation": model.activation, "output_activation": model.output_activation,
                    "train_meta": meta}


def _energy_dict(p: EnergyFilterProfile | None):
    if p is None:
        return None
    d = asdict(p)
    d.pop("trajectory")
    return d


def save_model(
    model: ReconModel,
    energy_profile: EnergyFilterProfile | None = None,
    detector_profile: DetectorProfile | None = None,
    frontend: Frontend | None = None,
    precision: int = 8,
    meta: dict[str, Any] | None = None,
) -> bytes:
    """Serialise a model and its profiles. ``precision=4`` stores arrays as float32."""
    if precision not in (4, 8):
        raise ParameterError("precision must be 4 or 8 bytes")
    kind = model_kind(model)
    arrays, scalars = _model_arrays(model)
    dtype = "<f8" if precision == 8 else "<f4"
    header = {
        "scalars": scalars,
        "energy_profile": _energy_dict(energy_profile),
        "detector_profile": asdict(detector_profile) if detector_profile is not None else None,
        "frontend": asdict(frontend) if frontend is not None else None,
        "meta": meta or {},
        "arrays": [[name, list(a.shape)] for name, a in arrays.items()],
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [PREFIX.pack(MAGIC, FORMAT_VERSION, KIND_CODES[kind], precision, model.M, model.k, len(hjson)), hjson]
    parts += [np.ascontiguousarray(a, dtype=dtype).tobytes() for a in arrays.values()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def load_model(data: bytes) -> ModelBundle:
    data = bytes(data)
    if len(data) < PREFIX.size + 4:
        raise ChecksumError("file too short to hold a model")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("CRC32 mismatch; file is truncated or corrupted")
    magic, version, kind_code, precision, M, k, hlen = PREFIX.unpack_from(body, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
    if kind_code not in KIND_NAMES or precision not in (4, 8):
        raise FormatError("unknown model kind or precision")
    off = PREFIX.size
    header = json.loads(body[off:off + hlen].decode("utf-8"))
    off += hlen
    dtype = np.dtype("<f8" if precision == 8 else "<f4")
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64))
        a = np.frombuffer(body, dtype=dtype, count=n, offset=off).reshape(shape).astype(np.float64)
        off += n * dtype.itemsize
        arrays[name] = a
    if off != len(body):
        raise FormatError("trailing bytes after array payload")

    kind, sc = KIND_NAMES[kind_code], header["scalars"]
    if kind == "pca":
        model: ReconModel = PcaModel(arrays["mean"], arrays["components"], arrays["eigenvalues"])
    elif kind == "hpca":
        model = HpcaState(arrays["components"], arrays["eigenvalues"], arrays["mean"], sc["samples_seen"],
                          sc["blocks_seen"], sc["history_weight"], sc["rng_seed"], sc["zero_variance"])
    else:
        tm = {k: (tuple(v) if isinstance(v, list) else v) for k, v in sc["train_meta"].items()}
        model = AeModel(arrays["enc_weights"], arrays["enc_bias"], arrays["dec_weights"], arrays["dec_bias"],
                        sc["activation"], sc["output_activation"], arrays["mean"], tm)
    if (model.M, model.k) != (M, k):
        raise FormatError("header dimensions disagree with array shapes")
    ep = header["energy_profile"]
    dp = header["detector_profile"]
    fe = header["frontend"]
    return ModelBundle(
        model,
        EnergyFilterProfile(**ep) if ep is not None else None,
        DetectorProfile(**dp) if dp is not None else None,
        Frontend(**fe) if fe is not None else None,
        header["meta"],
    )
