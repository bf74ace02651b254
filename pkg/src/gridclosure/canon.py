"""Canonical serialization and hashing.

Every artifact that gets hashed (episodes, packs, traces, prompts) goes
through this module so digests are bit-identical across platforms and runs.
"""

import hashlib
import json
from typing import Any


def canon_dumps(obj: Any) -> str:
    """Serialize to canonical JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canon_bytes(obj: Any) -> bytes:
    return canon_dumps(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_obj(obj: Any) -> str:
    """Lowercase hex SHA-256 of the canonical serialization."""
    return sha256_hex(canon_bytes(obj))


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed derived from arbitrary parts.

    Used to fan a single run/pack seed out to per-episode generators and
    policies without pulling in OS entropy.
    """
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1
