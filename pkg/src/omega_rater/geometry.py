"""Placing a sentiment triple on three span lines and measuring the triangle.

Two direction schemes are supported. ``paper`` uses the rotation vectors at
90, -45 and 225 degrees (the third vector's mixed-sign form
``(cos(-5pi/4), sin(5pi/4))`` equals ``(cos(5pi/4), sin(5pi/4))`` because
cosine is even). ``equilateral`` spaces the lines 120 degrees apart
(90, -30, 210 degrees).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sentiment import SentimentTriple

ANGLE_MODES = ("paper", "equilateral")

Point = tuple[float, float]

_H = math.sqrt(0.5)  # cos(pi/4)
_S3 = math.sqrt(3.0) / 2.0

# unit direction vectors, in (pos, neg, neu) order
DIRECTIONS: dict[str, tuple[Point, Point, Point]] = {
    "paper": ((0.0, 1.0), (_H, -_H), (-_H, -_H)),
    "equilateral": ((0.0, 1.0), (_S3, -0.5), (-_S3, -0.5)),
}


@dataclass(frozen=True)
class TriangleEmbedding:
    p_pos: Point
    p_neg: Point
    p_neu: Point
    angle_mode: str = "paper"


@dataclass(frozen=True)
class SideLengths:
    a: float  # |Neu - Pos|
    b: float  # |Neu - Neg|
    c: float  # |Pos - Neg|

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


def directions(angle_mode: str = "paper", rotation: float = 0.0) -> tuple[Point, Point, Point]:
    """Unit span directions for ``angle_mode``, optionally rotated rigidly by ``rotation`` radians."""
    try:
        dirs = DIRECTIONS[angle_mode]
    except KeyError:
        raise ValueError(f"unknown angle mode {angle_mode!r}; expected one of {ANGLE_MODES}") from None
    if rotation == 0.0:
        return dirs
    cr, sr = math.cos(rotation), math.sin(rotation)
    return tuple((cr * x - sr * y, sr * x + cr * y) for x, y in dirs)


def place(triple: SentimentTriple, dirs: tuple[Point, Point, Point], angle_mode: str = "custom") -> TriangleEmbedding:
    (px, py), (nx, ny), (ux, uy) = dirs
    return TriangleEmbedding(
        p_pos=(triple.pos * px, triple.pos * py),
        p_neg=(triple.neg * nx, triple.neg * ny),
        p_neu=(triple.neu * ux, triple.neu * uy),
        angle_mode=angle_mode,
    )


def embed(triple: SentimentTriple, angle_mode: str = "paper") -> TriangleEmbedding:
    """Scale each fixed unit direction by its proportion."""
    return place(triple, directions(angle_mode), angle_mode)


def side_lengths(emb: TriangleEmbedding) -> SideLengths:
    (px, py), (nx, ny), (ux, uy) = emb.p_pos, emb.p_neg, emb.p_neu
    return SideLengths(
        a=math.hypot(ux - px, uy - py),
        b=math.hypot(ux - nx, uy - ny),
        c=math.hypot(px - nx, py - ny),
    )
