"""Triangle-derived features: area, weighted angle, height and the Omega axis.

Per review we compute

* ``alpha``: triangle area from the side lengths (Heron),
* ``beta``: ``arccos((u . v) * |v| / |u|)`` with ``u = Neu - Pos``, ``v = Neu - Neg``,
* ``gamma``: the height onto the longest side, ``2 * alpha / max(a, b, c)``,
* ``omega``: ``ln(alpha**beta + epsilon)`` taken modulo ``exp(gamma)``,

and the clustering space is ``[a, c, omega]``. Every guard that replaces a
raw value (clamped arccos argument, zero-length vector, collapsed triangle,
zero area) records a flag on the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvariantError
from .geometry import SideLengths, TriangleEmbedding, embed, side_lengths
from .sentiment import SentimentTriple

DEFAULT_EPSILON = 1e-12

DEGENERATE = "degenerate_triangle"
CLAMPED = "arccos_clamped"
ZERO_U = "zero_u_vector"
ALPHA_ZERO = "alpha_zero"
FLAG_NAMES = (ALPHA_ZERO, CLAMPED, DEGENERATE, ZERO_U)

_TINY = 1e-12


@dataclass(frozen=True)
class FeatureRecord:
    id: str
    triple: SentimentTriple
    sides: SideLengths
    alpha: float
    beta: float
    gamma: float
    omega: float
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class FeatureVector:
    a: float
    c: float
    omega: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.c, self.omega)


def heron_area(sides: SideLengths, flags: set | None = None) -> float:
    """Triangle area from its sides.

    Uses the cancellation-free arrangement of Heron's product: with sides
    sorted ``x >= y >= z``, ``16 * area**2 = (x+(y+z)) (z-(x-y)) (z+(x-y)) (x+(y-z))``,
    which equals ``16 s(s-a)(s-b)(s-c)`` but keeps full precision on thin
    triangles.
    """
    x, y, z = sorted(sides.as_tuple(), reverse=True)
    prod = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z))
    if prod > 0.0:
        return 0.25 * math.sqrt(prod)
    radicand = prod / 16.0
    if radicand < -_TINY:
        raise InvariantError(f"Heron radicand {radicand!r} < 0 for sides {sides}")
    if flags is not None:
        flags.add(DEGENERATE)
    return 0.0


def shoelace_area(emb: TriangleEmbedding) -> float:
    """Area from vertex coordinates, ``|cross(Neg - Pos, Neu - Pos)| / 2``."""
    (px, py), (nx, ny), (ux, uy) = emb.p_pos, emb.p_neg, emb.p_neu
    return 0.5 * abs((nx - px) * (uy - py) - (ny - py) * (ux - px))


def beta_angle(emb: TriangleEmbedding, flags: set | None = None) -> float:
    (px, py), (nx, ny), (ux, uy) = emb.p_pos, emb.p_neg, emb.p_neu
    u = (ux - px, uy - py)
    v = (ux - nx, uy - ny)
    nu = math.hypot(*u)
    if nu < _TINY:
        if flags is not None:
            flags.add(ZERO_U)
        return math.pi / 2
    t = (u[0] * v[0] + u[1] * v[1]) * math.hypot(*v) / nu
    if t > 1.0 or t < -1.0:
        if flags is not None:
            flags.add(CLAMPED)
        t = 1.0 if t > 1.0 else -1.0
    return math.acos(t)


def gamma_height(sides: SideLengths, alpha: float, flags: set | None = None) -> float:
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    base = max(sides.as_tuple())
    if base < _TINY:
        if flags is not None:
            flags.add(DEGENERATE)
        return 0.0
    return 2.0 * alpha / base


def floored_mod(x: float, m: float) -> float:
    """``x mod m`` in ``[0, m)`` for ``m > 0``, including negative ``x``."""
    r = math.fmod(x, m)  # exact, sign of x
    if r < 0.0:
        r += m
        if r >= m:  # |fmod| below half an ulp of m
            r = math.nextafter(m, 0.0)
    return r


def omega(alpha: float, beta: float, gamma: float, epsilon: float = DEFAULT_EPSILON,
          flags: set | None = None) -> float:
    """``ln(alpha**beta + epsilon) mod exp(gamma)`` (floored modulus).

    ``alpha**beta`` is evaluated as ``exp(beta * ln(alpha))``; for ``alpha == 0``
    it is 0 when ``beta > 0`` and 1 when ``beta == 0``.
    """
    if not (alpha >= 0 and gamma >= 0 and 0 <= beta <= math.pi):
        raise ValueError(f"out-of-domain inputs alpha={alpha}, beta={beta}, gamma={gamma}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if alpha == 0.0:
        if flags is not None:
            flags.add(ALPHA_ZERO)
        power = 0.0 if beta > 0.0 else 1.0
    else:
        power = math.exp(beta * math.log(alpha))
    x = math.log(power + epsilon)
    m = math.exp(gamma)
    if not (math.isfinite(x) and math.isfinite(m)):
        raise InvariantError(f"non-finite omega intermediate x={x}, exp(gamma)={m}")
    return floored_mod(x, m)


def compute_features(rid: str, triple: SentimentTriple, epsilon: float = DEFAULT_EPSILON,
                     angle_mode: str = "paper") -> FeatureRecord:
    emb = embed(triple, angle_mode)
    sides = side_lengths(emb)
    flags: set[str] = set()
    alpha = heron_area(sides, flags)
    beta = beta_angle(emb, flags)
    gamma = gamma_height(sides, alpha, flags)
    om = omega(alpha, beta, gamma, epsilon, flags)
    return FeatureRecord(rid, triple, sides, alpha, beta, gamma, om, frozenset(flags))


def feature_vector(rec: FeatureRecord) -> FeatureVector:
    return FeatureVector(rec.sides.a, rec.sides.c, rec.omega)
