"""Python bindings for the ktts core library."""

from ._ktts import (
    KttsError,
    Synthesizer,
    compose,
    decompose,
    detect_pauses,
    encode_text,
    griffin_lim,
    init_checkpoint,
    lr_schedule,
    mark_text,
    mel_spectrogram,
    to_model_text,
)

__all__ = [
    "KttsError",
    "Synthesizer",
    "compose",
    "decompose",
    "detect_pauses",
    "encode_text",
    "griffin_lim",
    "init_checkpoint",
    "lr_schedule",
    "mark_text",
    "mel_spectrogram",
    "to_model_text",
]
