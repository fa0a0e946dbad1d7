"""Binary netpbm I/O: PGM (P5) for grayscale, PPM (P6) for RGB.

Maxval is fixed at 255 and round trips are bit-exact.
"""

import numpy as np

from .imaging import ImageBuffer


def write_netpbm(img: ImageBuffer, path) -> None:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.data.tobytes())


def read_netpbm(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r} in {path}")
    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    pixels = np.frombuffer(raw[pos:pos + n], np.uint8)
    if pixels.size != n:
        raise ValueError(f"truncated netpbm file {path}")
    shape = (height, width) if channels == 1 else (height, width, 3)
    return ImageBuffer(pixels.reshape(shape).copy())
