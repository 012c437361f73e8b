"""Tiny deterministic raster toolkit: PPM/PGM codecs, Bresenham lines, a 3x5
digit font, and a filled arrow. Everything is integer math so rendered bytes
are stable across platforms (golden-image testable)."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def encode_ppm(rgb: np.ndarray) -> bytes:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ConfigError("expected (h, w, 3) uint8 array")
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ConfigError("not a binary PPM produced by this package")
    w, h = (int(t) for t in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return pixels.reshape(h, w, 3).copy()


def decode_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ConfigError("not a binary PGM produced by this package")
    w, h = (int(t) for t in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w)
    return pixels.reshape(h, w).copy()


def draw_line(canvas: np.ndarray, r0: int, c0: int, r1: int, c1: int, color) -> None:
    """Bresenham segment, clipped to the canvas."""
    h, w = canvas.shape[:2]
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        if 0 <= r < h and 0 <= c < w:
            canvas[r, c] = color
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def draw_polyline(canvas: np.ndarray, points, color) -> None:
    for (r0, c0), (r1, c1) in zip(points[:-1], points[1:]):
        draw_line(canvas, r0, c0, r1, c1, color)


# 3x5 bitmaps, rows top to bottom, 3 bits each (MSB = left pixel)
DIGIT_FONT = {
    "0": (0b111, 0b101, 0b101, 0b101, 0b111),
    "1": (0b010, 0b110, 0b010, 0b010, 0b111),
    "2": (0b111, 0b001, 0b111, 0b100, 0b111),
    "3": (0b111, 0b001, 0b111, 0b001, 0b111),
    "4": (0b101, 0b101, 0b111, 0b001, 0b001),
    "5": (0b111, 0b100, 0b111, 0b001, 0b111),
    "6": (0b111, 0b100, 0b111, 0b101, 0b111),
    "7": (0b111, 0b001, 0b010, 0b010, 0b010),
    "8": (0b111, 0b101, 0b111, 0b101, 0b111),
    "9": (0b111, 0b101, 0b111, 0b001, 0b111),
}


def digit_mask(text: str, scale: int = 1) -> np.ndarray:
    """Boolean raster of a digit string with 1-pixel spacing, scaled up."""
    glyphs = []
    for ch in text:
        if ch not in DIGIT_FONT:
            raise ConfigError(f"no glyph for {ch!r}")
        rows = DIGIT_FONT[ch]
        g = np.array([[(row >> (2 - b)) & 1 for b in range(3)] for row in rows], dtype=bool)
        glyphs.append(g)
    total_w = 4 * len(glyphs) - 1
    mask = np.zeros((5, total_w), dtype=bool)
    for i, g in enumerate(glyphs):
        mask[:, 4 * i:4 * i + 3] = g
    if scale > 1:
        mask = np.kron(mask, np.ones((scale, scale), dtype=bool))
    return mask


def draw_digits(canvas: np.ndarray, text: str, center_r: int, center_c: int,
                color, scale: int = 1) -> None:
    mask = digit_mask(text, scale)
    mh, mw = mask.shape
    r0 = center_r - mh // 2
    c0 = center_c - mw // 2
    h, w = canvas.shape[:2]
    rr0, cc0 = max(r0, 0), max(c0, 0)
    rr1, cc1 = min(r0 + mh, h), min(c0 + mw, w)
    if rr0 >= rr1 or cc0 >= cc1:
        return
    sub = mask[rr0 - r0:rr1 - r0, cc0 - c0:cc1 - c0]
    canvas[rr0:rr1, cc0:cc1][sub] = color


def draw_filled_triangle(canvas: np.ndarray, pts, color) -> None:
    """Fill a triangle given as three (r, c) vertices using half-plane tests."""
    (r0, c0), (r1, c1), (r2, c2) = pts
    rmin = max(int(min(r0, r1, r2)), 0)
    rmax = min(int(max(r0, r1, r2)) + 1, canvas.shape[0])
    cmin = max(int(min(c0, c1, c2)), 0)
    cmax = min(int(max(c0, c1, c2)) + 1, canvas.shape[1])
    if rmin >= rmax or cmin >= cmax:
        return
    rr, cc = np.meshgrid(np.arange(rmin, rmax), np.arange(cmin, cmax), indexing="ij")

    def edge(ar, ac, br, bc):
        return (cc - ac) * (br - ar) - (rr - ar) * (bc - ac)

    e0 = edge(r0, c0, r1, c1)
    e1 = edge(r1, c1, r2, c2)
    e2 = edge(r2, c2, r0, c0)
    inside = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
    canvas[rmin:rmax, cmin:cmax][inside] = color
