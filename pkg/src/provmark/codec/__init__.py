"""Keyed spread-spectrum watermark codec."""
from .carriers import derive_carriers
from .config import DEFAULT_BAND, CodecConfig
from .decoder import Decoder, decode_logits
from .encoder import embed, rescale_residual, should_watermark
from .keys import SecretKey
from .types import DecodeResult, PayloadCode, sign

__all__ = [
    "CodecConfig", "DEFAULT_BAND", "DecodeResult", "Decoder", "PayloadCode", "SecretKey",
    "decode_logits", "derive_carriers", "embed", "rescale_residual", "should_watermark", "sign",
]
