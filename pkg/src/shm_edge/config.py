"""Run configuration: one YAML file per run, keys named exactly like the fields below."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ParseError, ValidationError
from .pipeline import PipelineConfig, resolve_components
from .synth import BridgeSimConfig


@dataclass(frozen=True)
class RunConfig:
    input_dim_s: float = 5.0
    output_dim_min: float = 60
    components: int | None = 16
    cf: float | None = None
    domain: str = "time"
    detector: str = "pca"
    normalize: str = "rms"
    energy_filter: bool = True
    qos_rsnr_db: float = 16.0
    hpca_block: int = 250
    hpca_passes: int = 10
    ae_epochs: int = 80
    ae_lr: float = 1e-3
    val_fraction: float = 1 / 3
    sample_rate_hz: float = 100.0
    traces: str = "data/train"
    model: str = "model.shm"
    reports: str = "reports"
    seed: int = 0
    sim: BridgeSimConfig = field(default_factory=BridgeSimConfig)
    # campaign lengths for `gen --campaign` and in-memory sweeps (hours)
    train_hours: float = 10.0
    val_hours: float = 5.0
    test_hours: float = 5.0
    sweep_input_dims: tuple[float, ...] = (1, 2, 5, 10)
    sweep_output_dims: tuple[float, ...] = (15, 30, 60, 120, 240)
    payload_bytes: int = 1300
    bytes_per_s_raw: int = 200
    verdict_bytes: int = 3
    header_overhead: float = 1.0
    radio_table: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.val_fraction < 1:
            raise ValidationError("val_fraction must lie in (0, 1)")
        if self.components is None and self.cf is None:
            raise ValidationError("set either components or cf")

    @property
    def window_length(self) -> int:
        return int(round(self.input_dim_s * self.sample_rate_hz))

    def resolved_k(self, input_dim_s: float | None = None) -> int:
        M = int(round((input_dim_s or self.input_dim_s) * self.sample_rate_hz))
        if self.cf is not None:
            return resolve_components(M, None, self.cf)
        return resolve_components(M, self.components, None)

    def pipeline(self, input_dim_s: float | None = None) -> PipelineConfig:
        """Pipeline settings with the latent size resolved to an explicit k."""
        dim = input_dim_s or self.input_dim_s
        return PipelineConfig(
            input_dim_s=dim, output_dim_min=self.output_dim_min, components=self.resolved_k(dim), cf=None,
            detector=self.detector, domain=self.domain, normalize=self.normalize,
            energy_filter=self.energy_filter, qos_rsnr_db=self.qos_rsnr_db, hpca_block=self.hpca_block,
            hpca_passes=self.hpca_passes, ae_epochs=self.ae_epochs, ae_lr=self.ae_lr, seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for key in ("sweep_input_dims", "sweep_output_dims"):
            d[key] = list(d[key])
        return d


_FIELDS = {f.name for f in fields(RunConfig)}
_SIM_FIELDS = {f.name for f in fields(BridgeSimConfig)}


def config_from_dict(data: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ParseError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = base or RunConfig()
    kw = dict(data)
    if "sim" in kw:
        sim = kw["sim"] or {}
        if not isinstance(sim, dict) or set(sim) - _SIM_FIELDS:
            raise ParseError(f"bad sim section: {sim!r}")
        kw["sim"] = replace(base.sim, **sim)
    for key in ("sweep_input_dims", "sweep_output_dims"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return replace(base, **kw)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as e:
        raise ParseError(f"cannot parse config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ParseError("config file must hold a mapping")
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
