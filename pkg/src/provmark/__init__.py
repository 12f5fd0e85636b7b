"""Invisible image watermarking: codec, robustness benchmark and calibrated decisions."""
from .codec import CodecConfig, DecodeResult, PayloadCode, SecretKey, decode_logits, embed
from .imaging import RgbImage, load_image, save_image

__version__ = "0.1.0"

__all__ = [
    "CodecConfig", "DecodeResult", "PayloadCode", "RgbImage", "SecretKey",
    "decode_logits", "embed", "load_image", "save_image", "__version__",
]
