"""Velocity-space quadrature of the Maxwellian and relaxation collision models.

The grid approximates integrals against M(v) = (2pi)^{-D/2} exp(-|v|^2/2).
Two node families:

- "hermite": per-axis Gauss-Hermite (the public VelocityGrid contract)
- "wall":    axis 0 uses mirrored half-range Gauss nodes, so both full-range
             and half-range polynomial moments are exact; used by the
             half-space solver and the boundary-layer assembly

Collision models act spectrally: L g = sum_s sigma_s P_s g with orthogonal
projectors P_s on Null(L)^perp, so Null(L) = span{1, v, |v|^2} holds exactly
in the discrete inner product, L is symmetric PSD, and the pseudo-inverse is
the reciprocal spectral action.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


# ---------------------------------------------------------------------------
# quadrature construction

@lru_cache(maxsize=32)
def _half_range_gauss(n):
    """Gauss nodes/weights for the measure e^{-x^2/2}/sqrt(2pi) dx on (0, inf).

    Built by the Stieltjes procedure on an accurate panel discretization of
    the half-line; exact for polynomials up to degree 2n-1.
    """
    xg, wg = np.polynomial.legendre.leggauss(48)
    edges = np.concatenate([np.linspace(0, 4, 17), np.linspace(4.5, 14, 20)])
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * (xg + 1.0) + lo)
        ws.append(0.5 * (hi - lo) * wg)
    x = np.concatenate(xs)
    w = np.concatenate(ws) * np.exp(-0.5 * x ** 2) / np.sqrt(2.0 * np.pi)
    # three-term recurrence via Stieltjes
    alpha = np.empty(n)
    beta = np.empty(n)
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    nrm = np.sum(w)
    for k in range(n):
        alpha[k] = np.sum(w * x * p * p) / nrm
        if k == 0:
            beta[k] = np.sum(w)
        else:
            beta[k] = nrm / nrm_prev
        p_next = (x - alpha[k]) * p - (beta[k] if k else 0.0) * p_prev
        p_prev, p = p, p_next
        nrm_prev, nrm = nrm, np.sum(w * p * p)
    # Golub-Welsch
    J = np.diag(alpha) + np.diag(np.sqrt(beta[1:]), 1) + np.diag(np.sqrt(beta[1:]), -1)
    nodes, vecs = np.linalg.eigh(J)
    weights = beta[0] * vecs[0] ** 2
    return nodes, weights


def _axis_rule(Q, family):
    if family == "hermite":
        x, w = np.polynomial.hermite.hermgauss(Q)
        return np.sqrt(2.0) * x, w / np.sqrt(np.pi)
    if family == "wall":
        nh = Q // 2
        xh, wh = _half_range_gauss(nh)
        return np.concatenate([-xh[::-1], xh]), np.concatenate([wh[::-1], wh])
    raise ValueError(f"unknown node family {family!r}")


@dataclass(frozen=True)
class VelocityGrid:
    D: int
    Q: int
    family: str
    nodes: np.ndarray       # (n, D)
    weights: np.ndarray     # (n,)
    invariants: np.ndarray  # (D+2, n) orthonormal basis of Null(L)

    @property
    def n(self):
        return self.nodes.shape[0]

    def bracket(self, f):
        """<f> = integral of f against M dv (last axis = nodes)."""
        return np.asarray(f) @ self.weights

    def inner(self, f, g):
        return np.sum(self.weights * f * np.conj(g), axis=-1)

    def boundary_average(self, n_vec, f):
        """<f>_dOmega = sqrt(2pi) * <f (n.v)> (signed boundary average)."""
        vn = self.nodes @ np.asarray(n_vec, float)
        return np.sqrt(2.0 * np.pi) * ((np.asarray(f) * vn) @ self.weights)

    def half_flux(self, n_vec):
        """Discrete outgoing half-range flux sum_{v.n>0} w (v.n); ~ 1/sqrt(2pi)."""
        vn = self.nodes @ np.asarray(n_vec, float)
        mask = vn > 0
        return float(np.sum(self.weights[mask] * vn[mask]))

    def project_hydro(self, g):
        """Orthogonal projection onto span{1, v, |v|^2} (exact discrete null space)."""
        coef = (np.asarray(g) * self.weights) @ self.invariants.T
        return coef @ self.invariants

    def moments(self, g):
        """(rho, u, theta) fluid moments: <g>, <v g>, <(|v|^2/D - 1) g>."""
        g = np.asarray(g)
        rho = self.bracket(g)
        u = (g * self.weights) @ self.nodes
        vsq = np.sum(self.nodes ** 2, axis=1)
        theta = self.bracket(g * (vsq / self.D - 1.0))
        return rho, u, theta

    def reflect_index(self, axis=0):
        """Permutation q -> q' with v_{q'} = v_q mirrored in the given axis."""
        flipped = self.nodes.copy()
        flipped[:, axis] = -flipped[:, axis]
        order = np.lexsort(self.nodes.T[::-1])
        forder = np.lexsort(flipped.T[::-1])
        perm = np.empty(self.n, dtype=int)
        perm[order] = forder
        # verify exact closure of the node set
        if not np.allclose(self.nodes[perm], flipped, atol=1e-12):
            raise ValueError("node set is not mirror-symmetric in that axis")
        return perm


def make_velocity_grid(D, Q, family="hermite"):
    """Tensor velocity grid of per-axis order Q for the Maxwellian measure."""
    if D not in (2, 3):
        raise ValueError("velocity dimension D must be 2 or 3")
    if Q < 4:
        raise ValueError("per-axis order Q must be >= 4")
    x1, w1 = _axis_rule(Q, family)
    grids = np.meshgrid(*([x1] * D), indexing="ij")
    wgrids = np.meshgrid(*([w1] * D), indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    w = np.ones(nodes.shape[0])
    for wg in wgrids:
        w *= wg.ravel()
    vsq = np.sum(nodes ** 2, axis=1)
    raw = np.vstack([np.ones_like(vsq), nodes.T, vsq])
    inv = _orthonormalize(raw, w)
    return VelocityGrid(D, Q, family, nodes, w, inv)


def _orthonormalize(rows, w):
    """Gram-Schmidt in the discrete L2(M dv) inner product, fixed row order."""
    out = []
    for r in rows:
        v = r.astype(float).copy()
        for e in out:
            v -= np.sum(w * v * e) * e
        nrm = np.sqrt(np.sum(w * v * v))
        out.append(v / nrm)
    return np.array(out)


# ---------------------------------------------------------------------------
# the functions A, B, C

def a_func(v):
    """A(v) = v (x) v - |v|^2 I / D, shape (..., D, D)."""
    v = np.asarray(v, float)
    D = v.shape[-1]
    vsq = np.sum(v ** 2, axis=-1)
    out = v[..., :, None] * v[..., None, :]
    out -= np.eye(D) * (vsq / D)[..., None, None]
    return out


def b_func(v):
    """B(v) = |v|^2 v / 2 - (D+2) v / 2, shape (..., D)."""
    v = np.asarray(v, float)
    D = v.shape[-1]
    vsq = np.sum(v ** 2, axis=-1)
    return 0.5 * (vsq[..., None] - (D + 2.0)) * v


def c_func(v):
    """C(v) = |v|^4/4 - (D+2)|v|^2/2 + D(D+2)/4."""
    v = np.asarray(v, float)
    D = v.shape[-1]
    vsq = np.sum(v ** 2, axis=-1)
    return 0.25 * vsq ** 2 - 0.5 * (D + 2.0) * vsq + 0.25 * D * (D + 2.0)


def build_ABC(grid):
    """(A, B, C) sampled on the grid: shapes (D,D,n), (D,n), (n,)."""
    A = np.moveaxis(a_func(grid.nodes), 0, -1)
    B = np.moveaxis(b_func(grid.nodes), 0, -1)
    C = c_func(grid.nodes)
    return A, B, C


# ---------------------------------------------------------------------------
# collision models

class CollisionModel:
    """Spectral relaxation model L g = sum_s sigma_s P_s g on Null(L)^perp."""

    def __init__(self, grid, kind, rates, projectors, attenuation):
        self.grid = grid
        self.kind = kind
        self.rates = rates                    # per spectral block
        self._proj = projectors               # list of orthonormal bases (k_s, n)
        self.attenuation = attenuation        # scale a0 used in weighted norms

    def _block_coeffs(self, g):
        w = self.grid.weights
        return [(np.asarray(g) * w) @ P.T for P in self._proj]

    def apply(self, g):
        """L g."""
        g = np.asarray(g)
        out = np.zeros_like(g, dtype=np.result_type(g, float))
        for sig, P, c in zip(self.rates, self._proj, self._block_coeffs(g)):
            out += sig * (c @ P)
        return out

    def pinv(self, f, tol=1e-8):
        """L^{-1} f for f in Null(L)^perp; errors on hydrodynamic input."""
        f = np.asarray(f)
        hyd = self.grid.project_hydro(f)
        scale = np.sqrt(np.max(np.abs(self.grid.inner(f, f)))) + 1e-300
        if np.sqrt(np.max(np.abs(self.grid.inner(hyd, hyd)))) > tol * max(1.0, scale):
            raise ValueError("pseudo-inverse input has a hydrodynamic component")
        out = np.zeros_like(f, dtype=np.result_type(f, float))
        for sig, P, c in zip(self.rates, self._proj, self._block_coeffs(f)):
            out += (c / sig) @ P
        return out

    def perp(self, g):
        return np.asarray(g) - self.grid.project_hydro(g)

    def relax(self, g, t):
        """exp(-t L) g, exact per spectral block (moments invariant)."""
        g = np.asarray(g)
        out = self.grid.project_hydro(g).astype(np.result_type(g, float))
        for sig, P, c in zip(self.rates, self._proj, self._block_coeffs(g)):
            out += np.exp(-sig * t) * (c @ P)
        return out

    def matrix(self):
        """Dense matrix of L in the weighted inner product (diagnostics)."""
        n = self.grid.n
        M = np.zeros((n, n))
        for sig, P in zip(self.rates, self._proj):
            M += sig * (P.T @ (P * self.grid.weights))
        return M

    def nullspace_condition(self):
        """Condition number of L restricted to Null^perp (Fredholm check)."""
        lam = np.concatenate([[r] * P.shape[0] for r, P in zip(self.rates, self._proj)])
        return float(np.max(lam) / np.min(lam))


def _perp_basis(grid, funcs):
    """Orthonormal basis of span{funcs} projected into Null(L)^perp."""
    w = grid.weights
    rows = []
    for f in funcs:
        g = f - grid.project_hydro(f)
        rows.append(g)
    A = np.array(rows) * np.sqrt(w)
    # SVD keeps only the numerically independent directions
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > 1e-10 * s[0]
    return Vt[keep] / np.sqrt(w)


def make_bgk(grid, a0=1.0):
    """BGK relaxation: L g = a0 (g - P g)."""
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    # single block = all of Null^perp; represent via complement action
    model = CollisionModel(grid, "bgk", [a0], [None], a0)

    def _apply(g):
        return a0 * model.perp(g)

    def _pinv(f, tol=1e-8):
        f = np.asarray(f)
        hyd = grid.project_hydro(f)
        scale = np.sqrt(np.max(np.abs(grid.inner(f, f)))) + 1e-300
        if np.sqrt(np.max(np.abs(grid.inner(hyd, hyd)))) > tol * max(1.0, scale):
            raise ValueError("pseudo-inverse input has a hydrodynamic component")
        return f / a0 - hyd / a0

    def _relax(g, t):
        g = np.asarray(g)
        hyd = grid.project_hydro(g)
        return hyd + np.exp(-a0 * t) * (g - hyd)

    def _matrix():
        n = grid.n
        E = grid.invariants
        P = E.T @ (E * grid.weights)
        return a0 * (np.eye(n) - P)

    model.apply = _apply
    model.pinv = _pinv
    model.relax = _relax
    model.matrix = _matrix
    model.nullspace_condition = lambda: 1.0
    return model


def make_multirate(grid, sigma_a, sigma_b, sigma_0):
    """Three-rate spectral model: separate rates on span{A}, span{B}, rest.

    Exercises nu != kappa while keeping symmetry, positivity, and the exact
    five (D=3) / four (D=2) dimensional null space.
    """
    if min(sigma_a, sigma_b, sigma_0) <= 0:
        raise ValueError("all rates must be positive")
    A, B, _ = build_ABC(grid)
    D = grid.D
    afuncs = [A[i, j] for i in range(D) for j in range(i, D)]
    bfuncs = [B[i] for i in range(D)]
    PA = _perp_basis(grid, afuncs)
    PB = _perp_basis(grid, bfuncs)

    model = CollisionModel(grid, "multirate", [sigma_a, sigma_b, sigma_0],
                           [PA, PB, None], sigma_0)
    w = grid.weights

    def _parts(g):
        g = np.asarray(g)
        gp = model.perp(g)
        ca = (gp * w) @ PA.T
        cb = (gp * w) @ PB.T
        ga = ca @ PA
        gb = cb @ PB
        return gp, ga, gb, gp - ga - gb

    def _apply(g):
        _, ga, gb, rest = _parts(g)
        return sigma_a * ga + sigma_b * gb + sigma_0 * rest

    def _pinv(f, tol=1e-8):
        f = np.asarray(f)
        hyd = grid.project_hydro(f)
        scale = np.sqrt(np.max(np.abs(grid.inner(f, f)))) + 1e-300
        if np.sqrt(np.max(np.abs(grid.inner(hyd, hyd)))) > tol * max(1.0, scale):
            raise ValueError("pseudo-inverse input has a hydrodynamic component")
        _, ga, gb, rest = _parts(f)
        return ga / sigma_a + gb / sigma_b + rest / sigma_0

    def _relax(g, t):
        g = np.asarray(g)
        hyd = grid.project_hydro(g)
        _, ga, gb, rest = _parts(g)
        return (hyd + np.exp(-sigma_a * t) * ga + np.exp(-sigma_b * t) * gb
                + np.exp(-sigma_0 * t) * rest)

    def _matrix():
        n = grid.n
        E = grid.invariants
        P = E.T @ (E * w)
        MA = PA.T @ (PA * w)
        MB = PB.T @ (PB * w)
        rest = np.eye(n) - P - MA - MB
        return sigma_a * MA + sigma_b * MB + sigma_0 * rest

    model.apply = _apply
    model.pinv = _pinv
    model.relax = _relax
    model.matrix = _matrix
    model.nullspace_condition = lambda: max(sigma_a, sigma_b, sigma_0) / min(
        sigma_a, sigma_b, sigma_0)
    return model


def make_collision_model(grid, kind="bgk", a0=1.0, sigma_a=1.0, sigma_b=1.0,
                         sigma_0=1.0):
    if kind == "bgk":
        return make_bgk(grid, a0)
    if kind == "multirate":
        return make_multirate(grid, sigma_a, sigma_b, sigma_0)
    raise ValueError(f"unknown collision kind {kind!r}")


# ---------------------------------------------------------------------------
# transport coefficients and flux identities

def ahat_bhat(model):
    """A_hat = L^{-1} A and B_hat = L^{-1} B on the model's grid."""
    A, B, _ = build_ABC(model.grid)
    D = model.grid.D
    Ah = np.empty_like(A)
    Bh = np.empty_like(B)
    for i in range(D):
        Bh[i] = model.pinv(B[i])
        for j in range(D):
            Ah[i, j] = model.pinv(A[i, j])
    return Ah, Bh


def transport_coefficients(model):
    """Kinematic viscosity and thermal conductivity of the model.

    nu    = <A_hat : L A_hat> / ((D-1)(D+2))
    kappa = 2 <B_hat . L B_hat> / (D(D+2))

    The kappa normalization is the one that makes the flux identities
    <B_i B_hat_j> = ((D+2)/2) kappa delta_ij hold (BGK a0=1 gives nu=kappa=1).
    """
    grid = model.grid
    D = grid.D
    Ah, Bh = ahat_bhat(model)
    A, B, _ = build_ABC(grid)
    num_a = sum(grid.bracket(Ah[i, j] * A[i, j]) for i in range(D) for j in range(D))
    num_b = sum(grid.bracket(Bh[i] * B[i]) for i in range(D))
    nu = num_a / ((D - 1.0) * (D + 2.0))
    kappa = 2.0 * num_b / (D * (D + 2.0))
    return float(nu), float(kappa)


@dataclass
class FluxIdentityReport:
    nu: float
    kappa: float
    max_dev_a: float
    max_dev_b: float

    @property
    def max_deviation(self):
        return max(self.max_dev_a, self.max_dev_b)


def verify_flux_identities(model):
    """Entrywise check of the viscous/thermal flux identities."""
    grid = model.grid
    D = grid.D
    nu, kappa = transport_coefficients(model)
    A, B, _ = build_ABC(grid)
    Ah, Bh = ahat_bhat(model)
    dev_a = 0.0
    for i in range(D):
        for j in range(D):
            for k in range(D):
                for L in range(D):
                    val = grid.bracket(A[i, j] * Ah[k, L])
                    ref = nu * ((i == k) * (j == L) + (i == L) * (j == k)
                                - 2.0 / D * (i == j) * (k == L))
                    dev_a = max(dev_a, abs(val - ref))
    dev_b = 0.0
    for i in range(D):
        for j in range(D):
            val = grid.bracket(B[i] * Bh[j])
            ref = 0.5 * (D + 2.0) * kappa * (i == j)
            dev_b = max(dev_b, abs(val - ref))
    return FluxIdentityReport(nu, kappa, dev_a, dev_b)
