"""Binary PPM (P6, maxval 255) codec for H×W×3 uint8 images"""
from pathlib import Path
from typing import Tuple

import numpy as np

from ..utils.errors import ImageFormatError

MAGIC = b"P6"
MAXVAL = 255


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"PPM needs an H×W×3 image, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ImageFormatError(f"PPM needs uint8 pixels, got {image.dtype}")
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n{MAXVAL}\n".encode('ascii')
    return header + np.ascontiguousarray(image).tobytes()


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Skip whitespace and # comments, return (token, position after it)"""
    n = len(data)
    while pos < n:
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError(f"unexpected end of header at offset {start}")
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> Tuple[int, int]:
    token, end = _next_token(data, pos)
    if not token.isdigit():
        raise ImageFormatError(f"bad {what} {token!r} at offset {end - len(token)}")
    return int(token), end


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != MAGIC:
        raise ImageFormatError(f"bad magic {data[:2]!r} at offset 0, expected {MAGIC!r}")
    width, pos = _header_int(data, 2, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if maxval != MAXVAL:
        raise ImageFormatError(f"unsupported maxval {maxval} at offset {pos - len(str(maxval))}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"empty image {width}x{height} in header ending at offset {pos}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError(f"missing whitespace after header at offset {pos}")
    pos += 1

    expected = width * height * 3
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise ImageFormatError(
            f"truncated payload at offset {pos + len(payload)}: {len(payload)} of {expected} bytes"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, image: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_ppm(image))
    return path


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())
