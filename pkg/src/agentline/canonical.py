"""Canonical JSON encoding, content hashing, and deterministic seed derivation.

Every artifact that gets hashed or compared byte-for-byte goes through
``canonical_json`` so that two runs producing the same logical value also
produce the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(value: Any) -> str:
    """Serialize to JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def content_hash(value: Any) -> str:
    """Hash of the canonical JSON form of a JSON-like value."""
    return sha256_hex(canonical_json(value))


def derive_seed(*parts: object) -> int:
    """Deterministic 64-bit seed from arbitrary labeled parts.

    Used to split one run seed into independent per-example streams so that
    results do not depend on scheduling order. Never uses the builtin
    ``hash()``, which is salted per process.
    """
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
