from __future__ import annotations

import base64
import json
import secrets
from dataclasses import dataclass
from pathlib import Path

from ..errors import CorruptFile

KEY_BYTES = 32
KEY_FILE_VERSION = 1


@dataclass(frozen=True, repr=False)
class SecretKey:
    material: bytes
    key_id: str

    def __post_init__(self):
        if not isinstance(self.material, (bytes, bytearray)) or len(self.material) != KEY_BYTES:
            raise ValueError(f"key material must be exactly {KEY_BYTES} bytes")
        if not self.key_id or len(self.key_id) > 64:
            raise ValueError("key_id must be a non-empty string of at most 64 chars")
        object.__setattr__(self, "material", bytes(self.material))

    def __repr__(self):
        # never leak key material into logs
        return f"SecretKey(key_id={self.key_id!r})"

    @classmethod
    def generate(cls, key_id: str) -> "SecretKey":
        return cls(secrets.token_bytes(KEY_BYTES), key_id)

    def to_json(self) -> str:
        return json.dumps({
            "version": KEY_FILE_VERSION,
            "key_id": self.key_id,
            "key": base64.b64encode(self.material).decode("ascii"),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SecretKey":
        try:
            doc = json.loads(text)
            if doc.get("version") != KEY_FILE_VERSION:
                raise CorruptFile(f"unsupported key file version {doc.get('version')!r}")
            material = base64.b64decode(doc["key"], validate=True)
            return cls(material, doc["key_id"])
        except CorruptFile:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptFile(f"invalid key file: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SecretKey":
        return cls.from_json(Path(path).read_text())
