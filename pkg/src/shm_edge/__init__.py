"""Edge anomaly detection for vibration-based structural health monitoring.

Energy-filtered windows are compressed and reconstructed (batch PCA,
streaming History-PCA or a small autoencoder); reconstruction errors are
averaged over time and compared against a mu + 3 sigma threshold. A cost
model and fleet simulator compare cloud, hybrid and edge deployments.
"""

from .detector import (
    ClassificationReport,
    DetectorProfile,
    ScorePoint,
    Verdict,
    average_scores,
    calibrate_threshold,
    classify,
    evaluate,
    score_windows,
)
from .energy_filter import EnergyFilterProfile, apply_energy_filter, calibrate_energy_threshold
from .pipeline import PipelineConfig, StreamingDetector, TrainedPipeline, train_pipeline
from .reconstruct import (
    AeModel,
    HpcaState,
    PcaModel,
    ae_reconstruct,
    fit_autoencoder,
    fit_pca_batch,
    fit_pca_streaming,
    pca_reconstruct,
)
from .signal import (
    AccelTrace,
    SpectralFrame,
    Window,
    dwt_frame,
    fft_frame,
    ingest_trace,
    rsnr_db,
    window_energy,
    windowize,
)
from .synth import BridgeSimConfig, SeverityLevel, generate_trace, inject_severity

__version__ = "0.1.0"
