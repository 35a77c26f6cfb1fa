"""Model domains with unit volume and their boundary-adapted frame.

Three analytic shapes are supported:

- slab:      [0,1] x unit torus; fields are uniform tangentially, the two
             walls carry unit tangential cross-section each
- rectangle: [0,Lx] x [0,Ly] with Lx*Ly = 1
- disk:      radius R with pi R^2 = 1

All carry exact distance / nearest-point projection / outward normal and
quadratures for interior and boundary integrals.
"""

from dataclasses import dataclass, field

import numpy as np

_KINDS = ("slab", "rectangle", "disk")


@dataclass(frozen=True)
class BoundaryPoint:
    """A point on the boundary with its local frame."""
    chart: int                 # wall / edge index (0 for the disk circle)
    param: float               # coordinate along the boundary piece
    position: np.ndarray       # (2,)
    normal: np.ndarray         # outward unit normal
    tangent: np.ndarray        # unit tangent

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float))
        object.__setattr__(self, "normal", np.asarray(self.normal, float))
        object.__setattr__(self, "tangent", np.asarray(self.tangent, float))


@dataclass(frozen=True)
class Domain:
    kind: str
    lx: float = 1.0            # rectangle only
    ly: float = 1.0
    radius: float = 0.0        # disk only

    @property
    def delta(self):
        """Width of the tubular neighborhood with unambiguous projection."""
        if self.kind == "slab":
            return 0.5
        if self.kind == "rectangle":
            return 0.5 * min(self.lx, self.ly)
        return 0.5 * self.radius

    @property
    def volume(self):
        if self.kind == "slab":
            return 1.0
        if self.kind == "rectangle":
            return self.lx * self.ly
        return np.pi * self.radius ** 2

    @property
    def boundary_measure(self):
        if self.kind == "slab":
            return 2.0
        if self.kind == "rectangle":
            return 2.0 * (self.lx + self.ly)
        return 2.0 * np.pi * self.radius


def make_domain(kind, lx=None, ly=None, radius=None, auto_normalize=True):
    """Build a unit-volume domain; sizes are rescaled if requested.

    With ``auto_normalize`` off, sizes that do not give volume 1 are an error
    (the whole construction assumes the unit-volume normalization).
    """
    if kind not in _KINDS:
        raise ValueError(f"unsupported domain kind: {kind!r}")
    if kind == "slab":
        return Domain("slab")
    if kind == "rectangle":
        lx = 1.0 if lx is None else float(lx)
        ly = (1.0 / lx) if ly is None else float(ly)
        if lx <= 0 or ly <= 0:
            raise ValueError("rectangle sides must be positive")
        area = lx * ly
        if abs(area - 1.0) > 1e-12:
            if not auto_normalize:
                raise ValueError(f"rectangle area {area} != 1 and auto_normalize is off")
            s = 1.0 / np.sqrt(area)
            lx, ly = lx * s, ly * s
        return Domain("rectangle", lx=lx, ly=ly)
    radius = (1.0 / np.sqrt(np.pi)) if radius is None else float(radius)
    if radius <= 0:
        raise ValueError("disk radius must be positive")
    if abs(np.pi * radius ** 2 - 1.0) > 1e-12:
        if not auto_normalize:
            raise ValueError("disk area != 1 and auto_normalize is off")
        radius = 1.0 / np.sqrt(np.pi)
    return Domain("disk", radius=radius)


def _inside(dom, x, tol=1e-12):
    x = np.asarray(x, float)
    if dom.kind == "slab":
        return -tol <= x[0] <= 1.0 + tol
    if dom.kind == "rectangle":
        return (-tol <= x[0] <= dom.lx + tol) and (-tol <= x[1] <= dom.ly + tol)
    return np.hypot(x[0], x[1]) <= dom.radius + tol


def distance(dom, x):
    """Distance from an interior point to the boundary."""
    x = np.asarray(x, float)
    if not _inside(dom, x):
        raise ValueError(f"point {x} lies outside {dom.kind}")
    if dom.kind == "slab":
        return min(x[0], 1.0 - x[0])
    if dom.kind == "rectangle":
        return min(x[0], dom.lx - x[0], x[1], dom.ly - x[1])
    return dom.radius - np.hypot(x[0], x[1])


def grad_distance(dom, x):
    """Gradient of the distance function (the inward normal direction)."""
    x = np.asarray(x, float)
    if dom.kind == "slab":
        return np.array([1.0, 0.0]) if x[0] <= 0.5 else np.array([-1.0, 0.0])
    if dom.kind == "rectangle":
        d = [x[0], dom.lx - x[0], x[1], dom.ly - x[1]]
        i = int(np.argmin(d))
        return [np.array([1.0, 0.0]), np.array([-1.0, 0.0]),
                np.array([0.0, 1.0]), np.array([0.0, -1.0])][i]
    r = np.hypot(x[0], x[1])
    if r == 0:
        raise ValueError("gradient of distance undefined at the disk center")
    return -x / r


# Per-chart boundary frames.  Chart numbering:
#   slab:       0 = wall x=0, 1 = wall x=1           (param = tangential coord)
#   rectangle:  0: x=0, 1: x=lx, 2: y=0, 3: y=ly     (param = coord along edge)
#   disk:       0 = circle                           (param = polar angle)

def boundary_point(dom, chart, param):
    if dom.kind == "slab":
        if chart == 0:
            return BoundaryPoint(0, param, [0.0, param], [-1.0, 0.0], [0.0, 1.0])
        return BoundaryPoint(1, param, [1.0, param], [1.0, 0.0], [0.0, 1.0])
    if dom.kind == "rectangle":
        frames = {
            0: ([0.0, param], [-1.0, 0.0], [0.0, 1.0]),
            1: ([dom.lx, param], [1.0, 0.0], [0.0, 1.0]),
            2: ([param, 0.0], [0.0, -1.0], [1.0, 0.0]),
            3: ([param, dom.ly], [0.0, 1.0], [1.0, 0.0]),
        }
        pos, n, t = frames[chart]
        return BoundaryPoint(chart, param, pos, n, t)
    c, s = np.cos(param), np.sin(param)
    return BoundaryPoint(0, param, [dom.radius * c, dom.radius * s],
                         [c, s], [-s, c])


def project_boundary(dom, x):
    """Nearest boundary point; only defined inside the tubular neighborhood."""
    x = np.asarray(x, float)
    d = distance(dom, x)
    if d >= dom.delta:
        raise ValueError(f"point {x} outside the tubular neighborhood "
                         f"(d={d:.4g} >= delta={dom.delta:.4g})")
    if dom.kind == "slab":
        return boundary_point(dom, 0 if x[0] <= 0.5 else 1, x[1])
    if dom.kind == "rectangle":
        dists = [x[0], dom.lx - x[0], x[1], dom.ly - x[1]]
        order = np.argsort(dists)
        if abs(dists[order[0]] - dists[order[1]]) < 1e-14:
            raise ValueError(f"ambiguous nearest boundary point at {x}")
        chart = int(order[0])
        param = x[1] if chart in (0, 1) else x[0]
        return boundary_point(dom, chart, param)
    r = np.hypot(x[0], x[1])
    return boundary_point(dom, 0, np.arctan2(x[1], x[0]))


def boundary_quadrature(dom, order=8):
    """Quadrature on the boundary: list of (BoundaryPoint, weight).

    The weights sum to |dOmega| and the rule is polynomially exact of at
    least the stated order on each smooth boundary piece.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    pts = []
    if dom.kind == "slab":
        # unit tangential cross-section per wall
        return [(boundary_point(dom, 0, 0.5), 1.0),
                (boundary_point(dom, 1, 0.5), 1.0)]
    if dom.kind == "rectangle":
        npts = max((order + 2) // 2, 2)
        xg, wg = np.polynomial.legendre.leggauss(npts)
        for chart, length in ((0, dom.ly), (1, dom.ly), (2, dom.lx), (3, dom.lx)):
            s = 0.5 * length * (xg + 1.0)
            w = 0.5 * length * wg
            pts.extend((boundary_point(dom, chart, si), wi) for si, wi in zip(s, w))
        return pts
    nphi = max(order + 1, 32)
    dphi = 2.0 * np.pi / nphi
    phis = dphi * np.arange(nphi)
    return [(boundary_point(dom, 0, p), dom.radius * dphi) for p in phis]


def tangential_gradient(dom, grad_fn, bp):
    """Tangential part of a field gradient at a boundary point.

    ``grad_fn(x) -> (2,) array`` is the ambient gradient of the scalar field.
    """
    g = np.asarray(grad_fn(bp.position), float)
    return g - np.dot(g, bp.normal) * bp.normal


def interior_quadrature(dom, level=24):
    """Interior quadrature (points (N,2), weights (N,)); weights sum to 1."""
    if dom.kind == "slab":
        x, w = _composite_gauss(0.0, 1.0, panels=max(level // 6, 3), npts=6)
        pts = np.column_stack([x, np.full_like(x, 0.5)])
        return pts, w
    if dom.kind == "rectangle":
        nx = max(level, 8)
        xg, wx = _composite_gauss(0.0, dom.lx, panels=max(nx // 8, 2), npts=8)
        yg, wy = _composite_gauss(0.0, dom.ly, panels=max(nx // 8, 2), npts=8)
        X, Y = np.meshgrid(xg, yg, indexing="ij")
        W = np.outer(wx, wy)
        return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()
    nr = max(level, 16)
    nphi = max(2 * level, 32)
    rg, wr = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * dom.radius * (rg + 1.0)
    wr = 0.5 * dom.radius * wr * r          # polar Jacobian
    dphi = 2.0 * np.pi / nphi
    phi = dphi * np.arange(nphi)
    R, P = np.meshgrid(r, phi, indexing="ij")
    W = np.outer(wr, np.full(nphi, dphi))
    pts = np.column_stack([(R * np.cos(P)).ravel(), (R * np.sin(P)).ravel()])
    return pts, W.ravel()


def _composite_gauss(a, b, panels, npts):
    xg, wg = np.polynomial.legendre.leggauss(npts)
    edges = np.linspace(a, b, panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * (xg + 1.0) + lo)
        ws.append(0.5 * (hi - lo) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def layered_quadrature_slab(eps, zeta_max=14.0, xi_max=30.0, npts=10):
    """1-D quadrature on [0,1] resolving eps- and sqrt(eps)-wide wall layers.

    Panels are graded from the Knudsen scale through the viscous scale into
    the interior, mirrored at both walls.  Returns (x, w) with sum(w) = 1.
    """
    se = np.sqrt(eps)
    cuts = [0.0]
    for c in (0.25 * eps, eps, 4 * eps, min(xi_max * eps, 0.2 * se)):
        if c > cuts[-1]:
            cuts.append(c)
    for c in (0.25 * se, se, 3 * se, min(zeta_max * se, 0.5)):
        if cuts[-1] < c <= 0.5:
            cuts.append(c)
    if cuts[-1] < 0.5:
        cuts.append(0.5)
    xs, ws = [], []
    xg, wg = np.polynomial.legendre.leggauss(npts)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        xs.append(0.5 * (hi - lo) * (xg + 1.0) + lo)
        ws.append(0.5 * (hi - lo) * wg)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    x = np.concatenate([x, 1.0 - x])        # mirror at the right wall
    w = np.concatenate([w, w])
    return x, w
