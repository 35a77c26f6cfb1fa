"""Neumann Laplacian eigenmodes on the model domains, in closed form.

Modes are L2(Omega)-orthonormal under the unit-volume convention and satisfy
the eigenvalue equation and the no-flux condition pointwise.  The acoustic
frequency lambda0 = sqrt((D+2)/D * mu) is attached per velocity dimension D.
"""

import numpy as np
from scipy.special import jv, jvp, jnp_zeros


class NeumannMode:
    """One eigenmode: -Laplace(psi) = mu * psi, d(psi)/dn = 0 on the boundary."""

    def __init__(self, index, mu, D, group=0, degeneracy=1):
        self.index = index
        self.mu = float(mu)
        self.D = int(D)
        self.lambda0 = np.sqrt((D + 2.0) / D * mu)
        self.group = group
        self.degeneracy = degeneracy

    # evaluators take (..., 2) arrays and broadcast
    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def laplacian(self, x):
        return -self.mu * self.value(x)

    def surface_values(self, bp, order=3):
        """[psi, d_t psi, d_t^2 psi, ...] along the boundary at bp, order+1 terms."""
        raise NotImplementedError


class SlabMode(NeumannMode):
    """psi_k = sqrt(2) cos(k pi x1) on [0,1] x torus."""

    def __init__(self, k, D, **kw):
        super().__init__(k, (k * np.pi) ** 2, D, **kw)
        self.k = k

    def value(self, x):
        x = np.asarray(x, float)
        return np.sqrt(2.0) * np.cos(self.k * np.pi * x[..., 0])

    def gradient(self, x):
        x = np.asarray(x, float)
        g = np.zeros(x.shape)
        g[..., 0] = -np.sqrt(2.0) * self.k * np.pi * np.sin(self.k * np.pi * x[..., 0])
        return g

    def hessian(self, x):
        x = np.asarray(x, float)
        h = np.zeros(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = -self.mu * self.value(x)
        return h

    def surface_values(self, bp, order=3):
        out = [float(self.value(bp.position))]
        out.extend(0.0 for _ in range(order))
        return out


class RectangleMode(NeumannMode):
    """Separable cosine mode on [0,lx] x [0,ly]."""

    def __init__(self, mn, lx, ly, D, **kw):
        m, n = mn
        mu = (m * np.pi / lx) ** 2 + (n * np.pi / ly) ** 2
        super().__init__((m, n), mu, D, **kw)
        self.m, self.n, self.lx, self.ly = m, n, lx, ly
        self.cm = np.sqrt(2.0) if m > 0 else 1.0
        self.cn = np.sqrt(2.0) if n > 0 else 1.0
        self.km = m * np.pi / lx
        self.kn = n * np.pi / ly

    def _fx(self, x, d=0):
        k = self.km
        t = k * x
        return self.cm * k ** d * [np.cos, lambda z: -np.sin(z),
                                   lambda z: -np.cos(z), np.sin][d % 4](t)

    def _fy(self, y, d=0):
        k = self.kn
        t = k * y
        return self.cn * k ** d * [np.cos, lambda z: -np.sin(z),
                                   lambda z: -np.cos(z), np.sin][d % 4](t)

    def value(self, x):
        x = np.asarray(x, float)
        return self._fx(x[..., 0]) * self._fy(x[..., 1])

    def gradient(self, x):
        x = np.asarray(x, float)
        g = np.empty(x.shape)
        g[..., 0] = self._fx(x[..., 0], 1) * self._fy(x[..., 1])
        g[..., 1] = self._fx(x[..., 0]) * self._fy(x[..., 1], 1)
        return g

    def hessian(self, x):
        x = np.asarray(x, float)
        h = np.empty(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = self._fx(x[..., 0], 2) * self._fy(x[..., 1])
        h[..., 1, 1] = self._fx(x[..., 0]) * self._fy(x[..., 1], 2)
        h[..., 0, 1] = h[..., 1, 0] = self._fx(x[..., 0], 1) * self._fy(x[..., 1], 1)
        return h

    def surface_values(self, bp, order=3):
        # tangential profile along the edge is a 1-D cosine
        if bp.chart in (0, 1):
            x0 = 0.0 if bp.chart == 0 else self.lx
            amp = self._fx(x0)
            return [amp * self._fy(bp.param, d) for d in range(order + 1)]
        y0 = 0.0 if bp.chart == 2 else self.ly
        amp = self._fy(y0)
        return [amp * self._fx(bp.param, d) for d in range(order + 1)]


class DiskMode(NeumannMode):
    """J_m(sqrt(mu) r) {cos,sin}(m phi) on the unit-area disk."""

    def __init__(self, m, s, parity, radius, D, **kw):
        alpha = jnp_zeros(m, s)[s - 1]
        mu = (alpha / radius) ** 2
        super().__init__((m, s, parity), mu, D, **kw)
        self.m, self.s, self.parity, self.radius = m, s, parity, radius
        self.kr = np.sqrt(mu)
        radial_sq = 0.5 * radius ** 2 * (1.0 - (m / alpha) ** 2 if m > 0 else 1.0) \
            * jv(m, alpha) ** 2
        angular = 2.0 * np.pi if m == 0 else np.pi
        self.norm = 1.0 / np.sqrt(radial_sq * angular)

    def _ang(self, phi, d=0):
        m = self.m
        if m == 0:
            return np.ones_like(phi) if d == 0 else np.zeros_like(phi)
        t = m * phi
        if self.parity == "cos":
            f = [np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z), np.sin][d % 4]
        else:
            f = [np.sin, np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z)][d % 4]
        return m ** d * f(t)

    def _rad(self, r, d=0):
        return self.kr ** d * jvp(self.m, self.kr * r, d) if d else jv(self.m, self.kr * r)

    def value(self, x):
        x = np.asarray(x, float)
        r = np.hypot(x[..., 0], x[..., 1])
        phi = np.arctan2(x[..., 1], x[..., 0])
        return self.norm * self._rad(r) * self._ang(phi)

    def gradient(self, x):
        x = np.asarray(x, float)
        r = np.hypot(x[..., 0], x[..., 1])
        phi = np.arctan2(x[..., 1], x[..., 0])
        rs = np.where(r < 1e-300, 1.0, r)
        fr = self.norm * self._rad(r, 1) * self._ang(phi)
        fp = self.norm * self._rad(r) * self._ang(phi, 1)
        c, s = np.cos(phi), np.sin(phi)
        g = np.empty(x.shape)
        g[..., 0] = c * fr - s * fp / rs
        g[..., 1] = s * fr + c * fp / rs
        if self.m != 1:
            g[..., 0] = np.where(r < 1e-300, 0.0, g[..., 0])
            g[..., 1] = np.where(r < 1e-300, 0.0, g[..., 1])
        return g

    def hessian(self, x):
        x = np.asarray(x, float)
        r = np.hypot(x[..., 0], x[..., 1])
        r = np.where(r < 1e-9, 1e-9, r)      # polar formulas; keep off the center
        phi = np.arctan2(x[..., 1], x[..., 0])
        N = self.norm
        frr = N * self._rad(r, 2) * self._ang(phi)
        fr = N * self._rad(r, 1) * self._ang(phi)
        fpp = N * self._rad(r) * self._ang(phi, 2)
        frp = N * self._rad(r, 1) * self._ang(phi, 1)
        fp = N * self._rad(r) * self._ang(phi, 1)
        c, s = np.cos(phi), np.sin(phi)
        h = np.empty(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = (c * c * frr - 2 * c * s / r * frp + s * s / r ** 2 * fpp
                        + s * s / r * fr + 2 * c * s / r ** 2 * fp)
        h[..., 1, 1] = (s * s * frr + 2 * c * s / r * frp + c * c / r ** 2 * fpp
                        + c * c / r * fr - 2 * c * s / r ** 2 * fp)
        h[..., 0, 1] = (c * s * frr + (c * c - s * s) / r * frp - c * s / r ** 2 * fpp
                        - c * s / r * fr - (c * c - s * s) / r ** 2 * fp)
        h[..., 1, 0] = h[..., 0, 1]
        return h

    def surface_values(self, bp, order=3):
        amp = self.norm * self._rad(np.asarray(self.radius))
        # tangential derivative along the circle is (1/R) d/dphi
        return [float(amp * self._ang(np.asarray(bp.param), d)) / self.radius ** d
                for d in range(order + 1)]


class CompositeMode(NeumannMode):
    """Real linear combination of same-eigenvalue modes (multiplicity rotation)."""

    def __init__(self, modes, coeffs, index=None):
        mus = [m.mu for m in modes]
        if max(mus) - min(mus) > 1e-8 * max(1.0, mus[0]):
            raise ValueError("composite mode requires a single eigenvalue")
        super().__init__(index or modes[0].index, mus[0], modes[0].D,
                         group=modes[0].group, degeneracy=modes[0].degeneracy)
        self.modes = list(modes)
        self.coeffs = np.asarray(coeffs, float)

    def value(self, x):
        return sum(c * m.value(x) for c, m in zip(self.coeffs, self.modes))

    def gradient(self, x):
        return sum(c * m.gradient(x) for c, m in zip(self.coeffs, self.modes))

    def hessian(self, x):
        return sum(c * m.hessian(x) for c, m in zip(self.coeffs, self.modes))

    def surface_values(self, bp, order=3):
        vals = [m.surface_values(bp, order) for m in self.modes]
        return [sum(c * v[d] for c, v in zip(self.coeffs, vals))
                for d in range(order + 1)]


def compute_modes(dom, count, group_tol=1e-9, D=2):
    """First ``count`` nonconstant Neumann modes, sorted by eigenvalue.

    Modes whose eigenvalues agree within group_tol*max(1,mu) share a group id;
    a group is never split at the count boundary.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if dom.kind == "slab":
        modes = [SlabMode(k, D) for k in range(1, count + 1)]
    elif dom.kind == "rectangle":
        M = int(np.ceil(np.sqrt(count) * 4 + 4))
        cands = [(m, n) for m in range(M) for n in range(M) if m or n]
        cands.sort(key=lambda mn: (mn[0] * np.pi / dom.lx) ** 2
                   + (mn[1] * np.pi / dom.ly) ** 2)
        modes = [RectangleMode(mn, dom.lx, dom.ly, D) for mn in cands[:count + 8]]
    else:
        S = count + 4
        cands = []
        for m in range(0, count + 6):
            zeros = jnp_zeros(m, S)
            for s in range(1, S + 1):
                mu = (zeros[s - 1] / dom.radius) ** 2
                cands.append((mu, m, s))
        cands.sort()
        modes = []
        for mu, m, s in cands:
            if m == 0:
                modes.append(DiskMode(0, s, "cos", dom.radius, D))
            else:
                modes.append(DiskMode(m, s, "cos", dom.radius, D))
                modes.append(DiskMode(m, s, "sin", dom.radius, D))
            if len(modes) >= count + 8:
                break
        modes.sort(key=lambda md: md.mu)

    modes = modes[:count + 8] if dom.kind != "slab" else modes
    # group by eigenvalue, then cut at a group boundary
    groups = []
    for md in modes:
        if groups and abs(md.mu - groups[-1][0].mu) <= group_tol * max(1.0, md.mu):
            groups[-1].append(md)
        else:
            groups.append([md])
    out = []
    for gid, grp in enumerate(groups):
        for md in grp:
            md.group = gid
            md.degeneracy = len(grp)
            out.append(md)
        if len(out) >= count:
            break
    return out


def evaluate_mode(mode, x):
    """(psi value, gradient) at x."""
    return mode.value(x), mode.gradient(x)
