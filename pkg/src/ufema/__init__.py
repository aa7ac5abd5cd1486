"""Noise-robust speaker verification by fusing noisy and enhanced log-mel features.

A small UNet combines the noisy spectrogram with the outputs of frozen
speech enhancers. The speaker encoder it feeds is adapted jointly, and
evaluation uses an exponential moving average of its weights. Everything
runs at desk scale on a synthetic multi-speaker corpus.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AudioFormatError,
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    InvalidArgumentError,
    PoolViolationError,
    TrainingFailureError,
    UfemaError,
)
from .corpus import (  # noqa: E402
    NoiseBank,
    NoiseCondition,
    SynthCorpus,
    Utterance,
    Waveform,
    load_wav,
    mix_at_snr,
    parse_condition,
    synth_noise,
    truncate_segment,
    write_wav,
)
from .features import FeatureConfig, MelFeature, log_mel, mean_normalize, stack_channels  # noqa: E402
from .enhancement import Enhancer, MaskEnhancer, SpectralSubtraction, enhance  # noqa: E402
from .fusion import FusionUNet, UNetConfig, fuse, init_fusion  # noqa: E402
from .encoder import AAMHead, EncoderConfig, SpeakerEncoder, aam_loss, embed, init_encoder  # noqa: E402
from .ema import EMAState, ema_encoder_snapshot, ema_update  # noqa: E402
from .evaluation import Trial, compute_eer, cosine_score, evaluate, make_trials  # noqa: E402
from .config import ExperimentConfig, load_config, save_config  # noqa: E402
from .pipeline import FrontEnd, linear_interp_baseline  # noqa: E402


__all__ = [
    "__version__",
    "AudioFormatError",
    "CheckpointError",
    "ConfigError",
    "DegenerateInputError",
    "InvalidArgumentError",
    "PoolViolationError",
    "TrainingFailureError",
    "UfemaError",
    "NoiseBank",
    "NoiseCondition",
    "SynthCorpus",
    "Utterance",
    "Waveform",
    "load_wav",
    "mix_at_snr",
    "parse_condition",
    "synth_noise",
    "truncate_segment",
    "write_wav",
    "FeatureConfig",
    "MelFeature",
    "log_mel",
    "mean_normalize",
    "stack_channels",
    "Enhancer",
    "MaskEnhancer",
    "SpectralSubtraction",
    "enhance",
    "FusionUNet",
    "UNetConfig",
    "fuse",
    "init_fusion",
    "AAMHead",
    "EncoderConfig",
    "SpeakerEncoder",
    "aam_loss",
    "embed",
    "init_encoder",
    "EMAState",
    "ema_encoder_snapshot",
    "ema_update",
    "Trial",
    "compute_eer",
    "cosine_score",
    "evaluate",
    "make_trials",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "FrontEnd",
    "linear_interp_baseline",
]
