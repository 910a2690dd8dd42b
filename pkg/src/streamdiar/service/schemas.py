"""Request and response models of the HTTP API."""

from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel, Field

from ..metrics import DerBreakdown
from ..pipeline import PipelineConfig, StepReport
from ..timebase import Segment

_DEFAULT = PipelineConfig()


class ConfigModel(BaseModel):
    frame_step: float = _DEFAULT.grid.frame_step
    window_duration: float = _DEFAULT.grid.window_duration
    hop: float = _DEFAULT.grid.hop
    k_max: int = _DEFAULT.k_max
    tau_active: float = _DEFAULT.tau_active
    delta_new: float = _DEFAULT.delta_new
    rho_update: float = _DEFAULT.rho_update
    beta: float = _DEFAULT.beta
    gamma: float = _DEFAULT.gamma
    latency: float = _DEFAULT.latency
    weighting_mode: str = _DEFAULT.weighting_mode
    pad_warmup: bool = _DEFAULT.pad_warmup
    seed: int = _DEFAULT.seed

    def to_config(self) -> PipelineConfig:
        return PipelineConfig.from_dict(self.model_dump())

    @classmethod
    def from_config(cls, config: PipelineConfig) -> ConfigModel:
        return cls(**config.to_dict())


class ProviderSpec(BaseModel):
    """Where segmentation and embeddings come from.

    Without ``segmentation_path`` the oracle segmenter is built from
    ``reference_rttm``. Paths are read by the server.
    """

    reference_rttm: Optional[str] = None
    segmentation_path: Optional[str] = None
    embeddings_path: Optional[str] = None


class SegmentModel(BaseModel):
    onset: float
    duration: float
    label: str

    @classmethod
    def of(cls, seg: Segment, label: str) -> SegmentModel:
        return cls(onset=seg.onset, duration=seg.duration, label=label)


class StepReportModel(BaseModel):
    window_index: int
    end_time: float
    k_buffer: int
    new_speakers: int
    num_centroids: int
    step_seconds: float
    provider_seconds: float
    frames_finalized: int

    @classmethod
    def of(cls, r: StepReport) -> StepReportModel:
        return cls(**{name: getattr(r, name) for name in cls.model_fields})


class RunRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    providers: ProviderSpec = Field(default_factory=ProviderSpec)
    features_path: Optional[str] = None
    audio_path: Optional[str] = Field(
        None, description="PCM WAV used only for duration/uri; features are then synthesized"
                          " noiselessly from the reference")
    uri: Optional[str] = None
    dump_centroids: Optional[str] = None


class RunResponse(BaseModel):
    uri: str
    rttm: str
    num_speakers: int
    segments: list[SegmentModel]
    steps: list[StepReportModel]


class SessionCreate(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    providers: ProviderSpec = Field(default_factory=ProviderSpec)
    uri: str = "stream"


class SessionInfo(BaseModel):
    session_id: str
    uri: str
    frames_received: int
    windows: int
    num_speakers: int
    finalized_until: float


class FramesRequest(BaseModel):
    frames: list[list[float]]


class FramesResponse(BaseModel):
    steps: list[StepReportModel]
    segments: list[SegmentModel]


class CloseResponse(BaseModel):
    uri: str
    rttm: str
    num_speakers: int
    segments: list[SegmentModel]  # turns closed by the final flush


class ScoreRequest(BaseModel):
    reference_rttm: str
    hypothesis_rttm: str
    bin: Optional[float] = Field(None, gt=0)


class DerModel(BaseModel):
    false_alarm: float
    missed: float
    confusion: float
    total: float
    der: float

    @classmethod
    def of(cls, d: DerBreakdown) -> DerModel:
        return cls(false_alarm=d.false_alarm, missed=d.missed, confusion=d.confusion,
                   total=d.total_reference, der=d.der)


class CurvePoint(BaseModel):
    time: float
    scores: DerModel


class FileScore(BaseModel):
    uri: str
    scores: DerModel
    curve: Optional[list[CurvePoint]] = None


class ScoreResponse(BaseModel):
    files: list[FileScore]
    aggregate: DerModel


class TuneRequest(BaseModel):
    grid: dict[str, list[Union[bool, int, float, str]]]
    dev_dir: str
    config: ConfigModel = Field(default_factory=ConfigModel)


class TunePoint(BaseModel):
    params: dict[str, Union[bool, int, float, str]]
    mean_der: float


class TuneResponse(BaseModel):
    best: ConfigModel
    best_der: float
    table: list[TunePoint]


class BenchRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    repetitions: int = Field(1, ge=1)
    features_path: Optional[str] = None
    reference_rttm: Optional[str] = None
    # synthetic stream, used when no features_path is given
    speakers: int = 4
    duration: float = 60.0
    dim: int = 256
    extra_centroids: int = 0


class BenchResponse(BaseModel):
    steps: int
    mean: float
    p95: float
    max: float
    engine_mean: float
    engine_p95: float


class FixtureRequest(BaseModel):
    speakers: int = Field(3, ge=1)
    duration: float = Field(300.0, gt=0)
    overlap: float = Field(0.1, ge=0, lt=1)
    noise: float = Field(0.0, ge=0)
    seed: int = 0
    dim: int = Field(32, ge=1)
    shared: float = Field(0.0, ge=0, lt=1)
    out_dir: str
    uri: Optional[str] = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class FixtureResponse(BaseModel):
    paths: dict[str, str]
    summary: dict[str, Union[str, float, int]]
