"""Compact sets with exact distance functions and closed-form parallel volumes.

Every shape is an immutable value object. ``distance`` is vectorised over an
``(n, d)`` array of points (a single point of shape ``(d,)`` returns a float).
``analytic_volume`` returns the polynomial ``V(r) = mu(B(S, r))`` together with
the radius up to which that polynomial is exact.

Shapes carry a sampling ``model``: ``"solid"`` sets have interior and are
observed from the outside only, ``"manifold"`` sets (curves) have zero area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, ClassVar

import numpy as np

from .errors import InvalidParamsError, UnsupportedVariantError

SOLID = "solid"
MANIFOLD = "manifold"

# Volume of the unit ball in R^d.
UNIT_BALL_VOLUME = {2: math.pi, 3: 4.0 * math.pi / 3.0}


@dataclass(frozen=True)
class VolumePolynomial:
    """Polynomial parallel volume ``V(r)`` valid on ``[0, r_max]``.

    2D: ``V(r) = mu + l0 r + phi0 pi r^2``.
    3D: ``V(r) = mu + l0 r + m r^2 + phi0 (4 pi / 3) r^3``.
    """

    dimension: int
    mu: float
    l0: float
    m: float
    phi0: float
    r_max: float

    def __post_init__(self) -> None:
        if self.dimension not in (2, 3):
            raise InvalidParamsError(f"dimension must be 2 or 3, got {self.dimension}")
        if not self.l0 > 0:
            raise InvalidParamsError(f"l0 must be positive, got {self.l0}")
        if not self.r_max > 0:
            raise InvalidParamsError(f"r_max must be positive, got {self.r_max}")
        if self.phi0 == 0:
            raise InvalidParamsError("phi0 must be nonzero")
        if self.dimension == 2 and self.m != 0:
            raise InvalidParamsError("m is identically zero in 2D")
        if not self._derivative_positive():
            raise InvalidParamsError("V(r) is not strictly increasing on [0, r_max]")

    def _derivative_positive(self) -> bool:
        # V' is at most quadratic: check its minimum over [0, r_max].
        c = self.derivative_coefficients
        lead = c[-1]
        if math.isinf(self.r_max) and (lead < 0 or (len(c) == 2 and c[1] < 0)):
            return False
        candidates = [0.0]
        if not math.isinf(self.r_max):
            candidates.append(self.r_max)
        if len(c) == 3 and lead > 0:
            vertex = -c[1] / (2 * lead)
            if 0 < vertex < self.r_max:
                candidates.append(vertex)
        return all(np.polyval(c[::-1], r) > 0 for r in candidates)

    @property
    def coefficients(self) -> np.ndarray:
        """Ascending coefficients ``[c0, c1, ..., cd]``."""
        lead = self.phi0 * UNIT_BALL_VOLUME[self.dimension]
        if self.dimension == 2:
            return np.array([self.mu, self.l0, lead])
        return np.array([self.mu, self.l0, self.m, lead])

    @property
    def derivative_coefficients(self) -> np.ndarray:
        c = self.coefficients
        return c[1:] * np.arange(1, len(c))

    def __call__(self, r):
        return np.polynomial.polynomial.polyval(r, self.coefficients)

    def derivative(self, r):
        return np.polynomial.polynomial.polyval(r, self.derivative_coefficients)


def _as_points(points, dim: int) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[-1] != dim:
        raise InvalidParamsError(f"expected points with {dim} coordinates, got shape {p.shape}")
    return p, single


def _segment_distance(p: np.ndarray, a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def _tuple2(x) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


class Shape:
    """Common interface of all shape variants."""

    dim: ClassVar[int]

    @property
    def model(self) -> str:
        return SOLID

    def distance(self, points):
        """Euclidean distance from each point to the set (0 inside it)."""
        p, single = _as_points(points, self.dim)
        d = self._distance(p)
        return float(d[0]) if single else d

    def _distance(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _extent(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def bounding_box(self, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing ``B(S, margin)``."""
        if margin < 0:
            raise InvalidParamsError(f"margin must be nonnegative, got {margin}")
        lo, hi = self._extent()
        return lo - margin, hi + margin

    def analytic_volume(self) -> VolumePolynomial:
        raise UnsupportedVariantError(f"no closed-form volume for {type(self).__name__}")

    def to_dict(self) -> dict[str, Any]:
        params = {}
        for f in fields(self):
            name = f.name
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            params[name] = value
        return {"variant": type(self).__name__, "params": params}


# --------------------------------------------------------------------------
# 2D variants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Disk(Shape):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    solid: bool = True
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _tuple2(self.center))
        if not self.radius > 0:
            raise InvalidParamsError("disk radius must be positive")

    @property
    def model(self) -> str:
        return SOLID if self.solid else MANIFOLD

    def _distance(self, p):
        rad = np.linalg.norm(p - np.asarray(self.center), axis=1) - self.radius
        return np.maximum(rad, 0.0) if self.solid else np.abs(rad)

    def _extent(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def analytic_volume(self):
        if not self.solid:
            raise UnsupportedVariantError("a circle curve has linear V(r) below its radius (phi0 = 0)")
        a = self.radius
        return VolumePolynomial(2, math.pi * a * a, 2 * math.pi * a, 0.0, 1.0, math.inf)


@dataclass(frozen=True)
class DiskUnion(Shape):
    """Union of pairwise disjoint disks (or of their boundary circles)."""

    centers: tuple[tuple[float, float], ...] = ()
    radii: tuple[float, ...] = ()
    solid: bool = True
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers", tuple(_tuple2(c) for c in self.centers))
        object.__setattr__(self, "radii", _tuple2(self.radii))
        if not self.centers or len(self.centers) != len(self.radii):
            raise InvalidParamsError("need one radius per center and at least one disk")
        if min(self.radii) <= 0:
            raise InvalidParamsError("disk radii must be positive")
        if len(self.centers) > 1 and self.min_gap() <= 0:
            raise InvalidParamsError("disks must be pairwise disjoint with positive gaps")

    @property
    def model(self) -> str:
        return SOLID if self.solid else MANIFOLD

    def min_gap(self) -> float:
        gaps = [
            math.dist(ci, cj) - ri - rj
            for i, (ci, ri) in enumerate(zip(self.centers, self.radii))
            for cj, rj in zip(self.centers[i + 1 :], self.radii[i + 1 :])
        ]
        return min(gaps) if gaps else math.inf

    def _distance(self, p):
        out = np.full(len(p), np.inf)
        for c, a in zip(self.centers, self.radii):
            rad = np.linalg.norm(p - np.asarray(c), axis=1) - a
            out = np.minimum(out, np.maximum(rad, 0.0) if self.solid else np.abs(rad))
        return out

    def _extent(self):
        c = np.asarray(self.centers)
        a = np.asarray(self.radii)[:, None]
        return (c - a).min(axis=0), (c + a).max(axis=0)

    def analytic_volume(self):
        if not self.solid:
            raise UnsupportedVariantError("circle curves have linear V(r) below their radius (phi0 = 0)")
        a = np.asarray(self.radii)
        # Each disk contributes its own Steiner polynomial until offsets meet.
        return VolumePolynomial(
            2,
            float(math.pi * np.sum(a * a)),
            float(2 * math.pi * np.sum(a)),
            0.0,
            float(len(a)),
            self.min_gap() / 2,
        )


@dataclass(frozen=True)
class Rectangle(Shape):
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", _tuple2(self.lo))
        object.__setattr__(self, "hi", _tuple2(self.hi))
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise InvalidParamsError("rectangle needs lo < hi in both coordinates")

    def _distance(self, p):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        return np.hypot(gap[:, 0], gap[:, 1])

    def _extent(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def analytic_volume(self):
        w, h = (b - a for a, b in zip(self.lo, self.hi))
        return VolumePolynomial(2, w * h, 2 * (w + h), 0.0, 1.0, math.inf)


@dataclass(frozen=True)
class ConvexPolygon(Shape):
    """Strictly convex polygon with counterclockwise vertices."""

    vertices: tuple[tuple[float, float], ...] = ()
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(_tuple2(v) for v in self.vertices))
        v = np.asarray(self.vertices)
        if len(v) < 3:
            raise InvalidParamsError("a polygon needs at least three vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if not np.all(cross > 0):
            raise InvalidParamsError("vertices must be strictly convex and counterclockwise")

    def _edges(self):
        v = np.asarray(self.vertices)
        return zip(v, np.roll(v, -1, axis=0))

    def _distance(self, p):
        inside = np.ones(len(p), dtype=bool)
        out = np.full(len(p), np.inf)
        for a, b in self._edges():
            e = b - a
            inside &= e[0] * (p[:, 1] - a[1]) - e[1] * (p[:, 0] - a[0]) >= 0
            out = np.minimum(out, _segment_distance(p, a, b))
        out[inside] = 0.0
        return out

    def _extent(self):
        v = np.asarray(self.vertices)
        return v.min(axis=0), v.max(axis=0)

    def analytic_volume(self):
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        perimeter = float(sum(np.linalg.norm(b - a) for a, b in self._edges()))
        return VolumePolynomial(2, area, perimeter, 0.0, 1.0, math.inf)


@dataclass(frozen=True)
class Polyline(Shape):
    """Open polygonal curve (manifold model)."""

    vertices: tuple[tuple[float, float], ...] = ()
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(_tuple2(v) for v in self.vertices))
        if len(self.vertices) < 2:
            raise InvalidParamsError("a polyline needs at least two vertices")

    @property
    def model(self) -> str:
        return MANIFOLD

    def _distance(self, p):
        v = np.asarray(self.vertices)
        out = np.full(len(p), np.inf)
        for a, b in zip(v[:-1], v[1:]):
            out = np.minimum(out, _segment_distance(p, a, b))
        return out

    def _extent(self):
        v = np.asarray(self.vertices)
        return v.min(axis=0), v.max(axis=0)

    def analytic_volume(self):
        v = np.asarray(self.vertices)
        lengths = np.linalg.norm(np.diff(v, axis=0), axis=1)
        # Tube 2*len*r plus the two end caps.
        l0 = 2 * float(lengths.sum())
        if len(v) == 2:
            return VolumePolynomial(2, 0.0, l0, 0.0, 1.0, math.inf)
        if len(v) != 3:
            raise UnsupportedVariantError("closed form registered for polylines with at most one bend")
        u, w = v[0] - v[1], v[2] - v[1]
        alpha = math.acos(float(np.clip(u @ w / (lengths[0] * lengths[1]), -1.0, 1.0)))
        if not 0 < alpha < math.pi:
            raise UnsupportedVariantError("degenerate bend angle")
        # Outer side gains a sector of angle pi - alpha; the inner strips overlap
        # in a kite of area r^2 / tan(alpha / 2).
        quad = math.pi + (math.pi - alpha) / 2 - 1 / math.tan(alpha / 2)
        r_max = min(
            float(np.linalg.norm(v[2] - v[0])) / 2,
            float(lengths.min()) * math.tan(alpha / 2),
        )
        return VolumePolynomial(2, 0.0, l0, 0.0, quad / math.pi, r_max)


@dataclass(frozen=True)
class WedgeCutDisk(Shape):
    """Unit disk minus the open wedge ``|angle| < rho / 2`` around the +x axis."""

    rho: float = math.pi / 3
    dim: ClassVar[int] = 2

    def __post_init__(self) -> None:
        if not 0 < self.rho < math.pi / 2:
            raise InvalidParamsError("wedge angle must lie in (0, pi/2)")

    def _corners(self):
        h = self.rho / 2
        return np.array([math.cos(h), math.sin(h)]), np.array([math.cos(h), -math.sin(h)])

    def _distance(self, p):
        c1, c2 = self._corners()
        rad = np.hypot(p[:, 0], p[:, 1])
        in_wedge = np.abs(np.arctan2(p[:, 1], p[:, 0])) < self.rho / 2
        to_corner = np.minimum(np.linalg.norm(p - c1, axis=1), np.linalg.norm(p - c2, axis=1))
        d = np.where(in_wedge, to_corner, np.abs(rad - 1.0))
        d = np.minimum(d, _segment_distance(p, (0.0, 0.0), c1))
        d = np.minimum(d, _segment_distance(p, (0.0, 0.0), c2))
        d[(rad <= 1.0) & ~in_wedge] = 0.0
        return d

    def _extent(self):
        return np.array([-1.0, -1.0]), np.array([1.0, 1.0])

    def analytic_volume(self):
        rho = self.rho
        phi0 = (3 * math.pi - rho) / (2 * math.pi) - 1 / (math.pi * math.tan(rho / 2))
        return VolumePolynomial(2, math.pi - rho / 2, 2 * math.pi - rho + 2, 0.0, phi0, math.tan(rho / 2))


# --------------------------------------------------------------------------
# 3D variants
# --------------------------------------------------------------------------


def _ball_polynomial(a: float) -> tuple[float, float, float]:
    return 4 * math.pi * a**3 / 3, 4 * math.pi * a * a, 4 * math.pi * a


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    dim: ClassVar[int] = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _tuple2(self.center))
        if not self.radius > 0:
            raise InvalidParamsError("ball radius must be positive")

    def _distance(self, p):
        return np.maximum(np.linalg.norm(p - np.asarray(self.center), axis=1) - self.radius, 0.0)

    def _extent(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def analytic_volume(self):
        return VolumePolynomial(3, *_ball_polynomial(self.radius), 1.0, math.inf)


@dataclass(frozen=True)
class BallUnion(Shape):
    """Union of balls with disjoint interiors; touching is allowed."""

    centers: tuple[tuple[float, float, float], ...] = ()
    radii: tuple[float, ...] = ()
    dim: ClassVar[int] = 3
    touch_tol: ClassVar[float] = 1e-12

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers", tuple(_tuple2(c) for c in self.centers))
        object.__setattr__(self, "radii", _tuple2(self.radii))
        if not self.centers or len(self.centers) != len(self.radii):
            raise InvalidParamsError("need one radius per center and at least one ball")
        if min(self.radii) <= 0:
            raise InvalidParamsError("ball radii must be positive")
        if self._gaps() and min(g for _, _, g in self._gaps()) < -self.touch_tol:
            raise InvalidParamsError("ball interiors must be disjoint")

    def _gaps(self) -> list[tuple[int, int, float]]:
        return [
            (i, j, math.dist(self.centers[i], self.centers[j]) - self.radii[i] - self.radii[j])
            for i in range(len(self.centers))
            for j in range(i + 1, len(self.centers))
        ]

    def _distance(self, p):
        out = np.full(len(p), np.inf)
        for c, a in zip(self.centers, self.radii):
            out = np.minimum(out, np.linalg.norm(p - np.asarray(c), axis=1) - a)
        return np.maximum(out, 0.0)

    def _extent(self):
        c = np.asarray(self.centers)
        a = np.asarray(self.radii)[:, None]
        return (c - a).min(axis=0), (c + a).max(axis=0)

    def analytic_volume(self):
        gaps = self._gaps()
        touching = [g for g in gaps if abs(g[2]) <= self.touch_tol]
        if not touching:
            parts = np.array([_ball_polynomial(a) for a in self.radii]).sum(axis=0)
            r_max = min(g for _, _, g in gaps) / 2 if gaps else math.inf
            return VolumePolynomial(3, *map(float, parts), float(len(self.radii)), r_max)
        if len(self.radii) != 2:
            raise UnsupportedVariantError("closed form registered for a single touching pair only")
        a, b = self.radii
        d = a + b
        # Two offset balls minus their lens; the lens volume is
        # pi r^2 (3 d^2 - 3 (a - b)^2 + 4 d r) / (3 d), a polynomial in r.
        mu, l0, m = (x + y for x, y in zip(_ball_polynomial(a), _ball_polynomial(b)))
        m -= math.pi * (d * d - (a - b) ** 2) / d
        return VolumePolynomial(3, mu, l0, m, 1.0, math.inf)


@dataclass(frozen=True)
class Cone(Shape):
    """Solid right circular cone: base disk on z = 0, apex at (0, 0, height).

    ``aperture`` is the full opening angle at the apex.
    """

    height: float = 1.0
    aperture: float = math.pi / 3
    dim: ClassVar[int] = 3

    def __post_init__(self) -> None:
        if not self.height > 0:
            raise InvalidParamsError("cone height must be positive")
        if not 0 < self.aperture < math.pi:
            raise InvalidParamsError("cone aperture must lie in (0, pi)")

    @property
    def base_radius(self) -> float:
        return self.height * math.tan(self.aperture / 2)

    def _distance(self, p):
        a, h = self.base_radius, self.height
        q = np.column_stack([np.hypot(p[:, 0], p[:, 1]), p[:, 2]])
        # Distance to the meridian cross-section triangle.
        d = np.minimum(
            _segment_distance(q, (0.0, 0.0), (a, 0.0)),
            _segment_distance(q, (a, 0.0), (0.0, h)),
        )
        d = np.minimum(d, _segment_distance(q, (0.0, 0.0), (0.0, h)))
        inside = (q[:, 1] >= 0) & (q[:, 1] <= h) & (q[:, 0] * h <= a * (h - q[:, 1]))
        d[inside] = 0.0
        return d

    def _extent(self):
        a = self.base_radius
        return np.array([-a, -a, 0.0]), np.array([a, a, self.height])

    def analytic_volume(self):
        a, h = self.base_radius, self.height
        half = self.aperture / 2
        slant = math.hypot(a, h)
        area = math.pi * a * a + math.pi * a * slant
        # Lateral mean curvature integrates to pi*h; the rim edge has exterior
        # dihedral angle pi/2 + half and contributes half of angle * length.
        m = math.pi * h + math.pi * a * (math.pi / 2 + half)
        return VolumePolynomial(3, math.pi * a * a * h / 3, area, m, 1.0, math.inf)


@dataclass(frozen=True)
class SegmentPointDilation(Shape):
    """``B(A, 1)`` with A the segment from (0,0,-1) to (0,0,-1/2) plus the point (0,0,1)."""

    dim: ClassVar[int] = 3
    seg_lo: ClassVar[float] = -1.0
    seg_hi: ClassVar[float] = -0.5
    point_z: ClassVar[float] = 1.0
    dilation: ClassVar[float] = 1.0

    def _distance(self, p):
        z = np.clip(p[:, 2], self.seg_lo, self.seg_hi)
        radial = np.hypot(p[:, 0], p[:, 1])
        to_seg = np.hypot(radial, p[:, 2] - z)
        to_point = np.hypot(radial, p[:, 2] - self.point_z)
        return np.maximum(np.minimum(to_seg, to_point) - self.dilation, 0.0)

    def _extent(self):
        s = self.dilation
        return np.array([-s, -s, self.seg_lo - s]), np.array([s, s, self.point_z + s])

    def analytic_volume(self):
        # With s = 1 + r the capsule and the ball around the point always
        # overlap (gap 3/2 < 2s), so
        # V = 4/3 pi s^3 + pi (len + gap) s^2 - pi gap^3 / 12.
        length = self.seg_hi - self.seg_lo
        gap = self.point_z - self.seg_hi
        k = math.pi * (length + gap)
        # Expand in r = s - 1.
        mu = 4 * math.pi / 3 + k - math.pi * gap**3 / 12
        return VolumePolynomial(3, mu, 4 * math.pi + 2 * k, 4 * math.pi + k, 1.0, math.inf)


VARIANTS: dict[str, type[Shape]] = {
    cls.__name__: cls
    for cls in (Disk, DiskUnion, Rectangle, ConvexPolygon, Polyline, WedgeCutDisk,
                Ball, BallUnion, Cone, SegmentPointDilation)
}


def shape_from_dict(doc: dict[str, Any]) -> Shape:
    """Inverse of ``Shape.to_dict``."""
    try:
        cls = VARIANTS[doc["variant"]]
    except KeyError as exc:
        raise InvalidParamsError(f"unknown shape variant {doc.get('variant')!r}") from exc
    params = doc.get("params", {})
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidParamsError(f"bad parameters for {cls.__name__}: {exc}") from exc


# --------------------------------------------------------------------------
# Fixtures
# --------------------------------------------------------------------------


def two_disk() -> DiskUnion:
    """Two solid disks of radius 1/4 centred at (+-2.75, 0); L0 = pi, reach 2.5."""
    return DiskUnion(centers=((-2.75, 0.0), (2.75, 0.0)), radii=(0.25, 0.25))


def two_circles() -> DiskUnion:
    """The same two disks read as boundary curves (manifold model)."""
    return DiskUnion(centers=((-2.75, 0.0), (2.75, 0.0)), radii=(0.25, 0.25), solid=False)


def cone() -> Cone:
    """Height 1, full aperture pi/3: L0 = pi, M = pi + 2 pi^2 / (3 sqrt 3)."""
    return Cone(height=1.0, aperture=math.pi / 3)


def touching_balls() -> BallUnion:
    return BallUnion(centers=((0.0, 0.0, 1.0), (0.0, 0.0, -1.0)), radii=(1.0, 1.0))


def v_polyline() -> Polyline:
    return Polyline(vertices=((-1.0, 1.0), (0.0, 0.0), (1.0, 1.0)))


FIXTURES = {
    "two_disk": two_disk,
    "two_circles": two_circles,
    "cone": cone,
    "touching_balls": touching_balls,
    "segment_point_dilation": SegmentPointDilation,
    "wedge_cut_disk": WedgeCutDisk,
    "v_polyline": v_polyline,
    "unit_disk": Disk,
    "unit_ball": Ball,
    "unit_square": Rectangle,
}
