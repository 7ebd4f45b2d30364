"""Pipeline configuration schema.

YAML files are merged onto the dataclass schema with OmegaConf, so unknown keys
and mistyped values fail at load time. Command-line flags are applied last as
a dotlist (``train.batch_size=64``) and therefore win over the file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import yaml
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from kws.errors import ArgumentError, DecodeError, StorageError

PIPELINE_RATE = 8000
FRAME_LEN = 8000


@dataclass
class PathsConfig:
    corpus: Optional[str] = None
    manifest: Optional[str] = None
    audio_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    out_dir: str = "experiments/kws"


@dataclass
class AudioConfig:
    sample_rate: int = PIPELINE_RATE
    frame_len: int = FRAME_LEN
    bits: int = 16
    # invoked as: <decoder_cmd> <in> <out.wav>
    decoder_cmd: str = "ffmpeg -nostdin -loglevel error -y -i"


@dataclass
class SynthConfig:
    num_classes: int = 10
    per_class: int = 100
    snr_db: Optional[float] = 20.0
    burst_s: float = 0.3
    # onset moves up to this far either side of the frame centre
    onset_jitter_s: float = 0.35
    amplitude_jitter: float = 0.2
    # relative pitch spread, capped at a third of the class spacing
    pitch_jitter: float = 0.03
    envelope_jitter: bool = True
    background_class: bool = False


@dataclass
class TrainConfig:
    """Optimizer, early stopping and split settings for one training run.

    ``precision`` defaults to ``float32``: training and inference run in 32-bit
    for speed and checkpoints store 32-bit blocks. Set ``float64`` to train in
    64-bit; gradient checks and the model builders always use 64-bit.
    """

    arch: str = "kws-cnn"
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    dropout: float = 0.5
    # float32 | float64
    precision: str = "float32"
    split_ratios: List[float] = field(default_factory=lambda: [0.64, 0.16, 0.20])
    # by_utterance | by_speaker; unset picks by_speaker when speaker ids exist
    split_mode: Optional[str] = None
    report_to: str = "none"
    seed: int = 7

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ArgumentError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ArgumentError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.precision not in ("float32", "float64"):
            raise ArgumentError(f"precision must be float32 or float64, got {self.precision}")
        if self.report_to not in ("none", "tensorboard"):
            raise ArgumentError(f"report_to must be none or tensorboard, got {self.report_to}")


@dataclass
class DetectorConfig:
    window_s: float = 1.0
    hop_s: float = 0.25
    threshold: float = 0.7
    min_gap_s: float = 0.5
    # windows whose peak stays below this are not scored
    silence_floor: float = 1e-3
    jobs: int = 1


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    audio: AudioConfig = field(default_factory=AudioConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    seed: int = 7


def load_config(
    path: Optional[Path] = None, overrides: Sequence[str] = ()
) -> PipelineConfig:
    cfg = OmegaConf.structured(PipelineConfig)
    try:
        if path is not None:
            try:
                file_cfg = OmegaConf.load(path)
            except FileNotFoundError as e:
                raise StorageError(f"config file not found: {path}") from e
            except OSError as e:
                raise StorageError(f"cannot read config file {path}: {e}") from e
            except UnicodeDecodeError as e:
                raise DecodeError(f"config file {path} is not valid UTF-8", e.start) from e
            except yaml.YAMLError as e:
                raise ArgumentError(f"invalid configuration: {path}: {e}") from e
            cfg = OmegaConf.merge(cfg, file_cfg)
        if overrides:
            cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(overrides)))
        resolved: PipelineConfig = OmegaConf.to_object(cfg)
    except OmegaConfBaseException as e:
        raise ArgumentError(f"invalid configuration: {e}") from e

    resolved.train.validate()
    return resolved


def require(value: Optional[str], name: str) -> Path:
    if value is None:
        raise ArgumentError(f"missing required path: {name}")
    return Path(value)
