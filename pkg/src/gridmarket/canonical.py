"""Deterministic byte encoding for everything that gets hashed or signed.

Every node must derive identical bytes from identical structured values,
otherwise signatures and state hashes diverge. The encoding is JSON-shaped
text (UTF-8) with the ambiguity removed:

- map keys sorted lexicographically by their UTF-8 bytes, no whitespace
- integers in minimal base-10 form (no leading zeros, ``-`` for negatives)
- byte strings rendered as lowercase hex strings
- only ``int``, ``str``, ``bytes``, ``list``/``tuple`` and ``dict`` with
  string keys are accepted; floats, None, booleans and anything else are
  rejected because they have no single canonical rendering
"""

from __future__ import annotations

import json
import re
from typing import Any

__all__ = ["CanonicalError", "canonical_serialize", "canonical_deserialize"]

# Strings of printable ASCII minus quote and backslash need no escaping;
# everything else goes through json.dumps escaping.
_PLAIN_RE = re.compile(r'[ !#-\[\]-~]*\Z')


class CanonicalError(ValueError):
    """Value cannot be canonically encoded."""


def _encode_str(s: str, out: list[str]) -> None:
    if _PLAIN_RE.match(s):
        out.append('"')
        out.append(s)
        out.append('"')
    else:
        out.append(json.dumps(s, ensure_ascii=True))


def _encode(value: Any, out: list[str]) -> None:
    # bool is an int subclass; reject it before the int branch.
    if isinstance(value, bool):
        raise CanonicalError("booleans are not canonically encodable")
    if isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, str):
        _encode_str(value, out)
    elif isinstance(value, (bytes, bytearray)):
        out.append('"')
        out.append(bytes(value).hex())
        out.append('"')
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise CanonicalError(f"map key {key!r} is not a string")
        out.append("{")
        first = True
        for key in sorted(value, key=lambda k: k.encode("utf-8")):
            if not first:
                out.append(",")
            first = False
            _encode_str(key, out)
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise CanonicalError(
            f"value of type {type(value).__name__!r} is not canonically encodable"
        )


def canonical_serialize(payload: Any) -> bytes:
    """Encode ``payload`` to its unique canonical byte sequence.

    Raises :class:`CanonicalError` for unsupported value kinds (floats,
    None, booleans, non-string map keys).
    """
    out: list[str] = []
    _encode(payload, out)
    return "".join(out).encode("utf-8")


def canonical_deserialize(data: bytes) -> Any:
    """Parse canonical bytes back into plain values.

    Byte strings come back as their hex renderings; callers that know the
    schema convert them with ``bytes.fromhex`` at the typed boundary.
    """
    value = json.loads(data.decode("utf-8"))
    _check_decoded(value)
    return value


def _check_decoded(value: Any) -> None:
    if isinstance(value, bool) or value is None or isinstance(value, float):
        raise CanonicalError(f"decoded value {value!r} is outside the canonical domain")
    if isinstance(value, list):
        for item in value:
            _check_decoded(item)
    elif isinstance(value, dict):
        for v in value.values():
            _check_decoded(v)
