"""The eps-thick kinetic half-space layer at a wall.

Everything works in the wall-local frame: the outward normal is the +e1
axis of the velocity grid and xi is the scaled distance into the gas, so
the layer equation is  (v.n) d_xi g + L g = S  with the reflection relation
gamma_+ g - L gamma_- g = H at xi = 0 and zero inflow at xi_max.

The grid must be wall-adapted (family="wall"): the node set is closed under
the normal reflection and half-range polynomial moments are exact, so the
three solvability residuals of consistently built data vanish to machine
precision.

The transport discretization is the conservative box (trapezoidal) scheme
along xi; at convergence the discrete moment identity
(F_{i+1} - F_i)/dx = <S eta> - <L g eta> holds exactly, which makes the
divergence-form conservation check exact for collision invariants.
"""

from dataclasses import dataclass, field

import numpy as np


def default_xi_grid(xi_max=25.0, dx0=4e-3, growth=1.06, dx_max=0.35):
    """Geometrically stretched xi nodes from 0 to xi_max."""
    xs = [0.0]
    dx = dx0
    while xs[-1] < xi_max:
        xs.append(min(xs[-1] + dx, xi_max))
        dx = min(dx * growth, dx_max)
    return np.array(xs)


class ExpSource:
    """Separable source S(xi, v) = sum_j P_j(xi) * F_j(v) with layer profiles P_j."""

    def __init__(self, terms=()):
        self.terms = list(terms)      # (LayerProfile, node array)

    def sample(self, xi, n_nodes):
        out = np.zeros((len(xi), n_nodes), complex)
        for prof, fv in self.terms:
            out += np.outer(prof.value(xi), fv)
        return out

    def moment_integral(self, grid, eta):
        """integral_0^inf <S eta> dxi, exact in xi via the profile tails."""
        total = 0.0 + 0.0j
        for prof, fv in self.terms:
            total += prof.tail_integral(0.0) * grid.bracket(np.asarray(fv) * eta)
        return total


@dataclass
class HalfSpaceProblem:
    grid: object                  # wall-family VelocityGrid
    model: object                 # CollisionModel on the same grid
    H: np.ndarray                 # boundary datum on all nodes (used on v.n > 0)
    S: object = None              # ExpSource or None
    xi: np.ndarray = field(default_factory=default_xi_grid)

    def __post_init__(self):
        if self.grid.family != "wall":
            raise ValueError("half-space problems need a wall-adapted grid")
        self.H = np.asarray(self.H, complex)


def tangential_invariants(grid):
    """Collision invariants even under the wall reflection: 1, a.v (a perp n), |v|^2."""
    etas = [("mass", np.ones(grid.n))]
    for ax in range(1, grid.D):
        etas.append((f"momentum_t{ax}", grid.nodes[:, ax].copy()))
    etas.append(("energy", np.sum(grid.nodes ** 2, axis=1)))
    return etas


def solvability_residual(problem):
    """Residuals int_{v.n>0} H eta (v.n) M dv + int_0^inf <S eta> dxi per invariant."""
    grid = problem.grid
    vn = grid.nodes[:, 0]
    out = vn > 0
    res = {}
    for name, eta in tangential_invariants(grid):
        bterm = np.sum(grid.weights[out] * problem.H[out] * eta[out] * vn[out])
        sterm = problem.S.moment_integral(grid, eta) if problem.S is not None else 0.0
        res[name] = complex(bterm + sterm)
    return res


@dataclass
class HalfSpaceSolution:
    problem: HalfSpaceProblem
    g: np.ndarray                 # (n_xi, n_nodes)
    iterations: int
    converged: bool
    history: np.ndarray
    decay_rate: float
    tail_norm: float
    tail_moments: dict

    def norm_profile(self):
        grid = self.problem.grid
        return np.sqrt(np.abs(np.einsum("iq,q,iq->i", self.g, grid.weights,
                                        np.conj(self.g))).real)

    def mass_flux(self):
        grid = self.problem.grid
        return (self.g * grid.nodes[:, 0]) @ grid.weights

    def heat_flux(self):
        grid = self.problem.grid
        vsq = np.sum(grid.nodes ** 2, axis=1)
        return (self.g * grid.nodes[:, 0] * 0.5 * (vsq - grid.D - 2.0)) @ grid.weights

    def conservation_defect(self):
        """max over cells/invariants of |(F_{i+1}-F_i)/dx - <(S - L g) eta>_mid|."""
        grid = self.problem.grid
        vn = grid.nodes[:, 0]
        xi = self.problem.xi
        dx = np.diff(xi)
        S = (self.problem.S.sample(xi, grid.n) if self.problem.S is not None
             else np.zeros_like(self.g))
        Lg = np.array([self.problem.model.apply(gi) for gi in self.g])
        rhs = S - Lg
        worst = 0.0
        for name, eta in tangential_invariants(grid):
            F = (self.g * vn * eta) @ grid.weights
            mid = 0.5 * ((rhs[1:] + rhs[:-1]) * eta) @ grid.weights
            worst = max(worst, np.max(np.abs((F[1:] - F[:-1]) / dx - mid)))
        return float(worst)

    def interpolant(self):
        """Cubic-spline evaluator (xi_values) -> (len, n_nodes), zero beyond range."""
        from scipy.interpolate import CubicSpline
        xi = self.problem.xi
        sp_re = CubicSpline(xi, self.g.real, axis=0)
        sp_im = CubicSpline(xi, self.g.imag, axis=0)
        ximax = xi[-1]

        def ev(z, nu=0):
            z = np.asarray(z, float)
            inside = np.clip(z, 0.0, ximax)
            vals = sp_re(inside, nu) + 1j * sp_im(inside, nu)
            vals[z > ximax] = 0.0
            return vals

        return ev


def solve_halfspace(problem, tol=1e-9, max_iter=4000, verbose=False,
                    anderson_depth=5):
    """Iterative transport-sweep solution of the half-space problem.

    Down-sweeps (v.n < 0) start from zero inflow at xi_max, the wall relation
    sets the outgoing values, up-sweeps (v.n > 0) finish the transport; the
    collision coupling is lagged and the fixed point is Anderson-accelerated
    until the sup-norm of the iterate difference falls below tol * max(1,|g|).
    """
    grid, model = problem.grid, problem.model
    xi = problem.xi
    nxi, n = len(xi), grid.n
    dx = np.diff(xi)
    vn = grid.nodes[:, 0]
    out = vn > 0
    inc = ~out
    perm = grid.reflect_index(0)
    a = _shift_rate(model)

    S = (problem.S.sample(xi, n) if problem.S is not None
         else np.zeros((nxi, n), complex))
    H = problem.H

    lam_dn = (-vn[inc])[None, :] / dx[:, None]          # (nxi-1, n_inc)
    lam_up = vn[out][None, :] / dx[:, None]

    def sweep(g):
        """One transport sweep with the collision term lagged at g."""
        Kg = a * g - model.apply(g)
        rhs = S + Kg
        rbar = 0.5 * (rhs[1:] + rhs[:-1])
        new = g.copy()
        new[-1, inc] = 0.0
        for i in range(nxi - 2, -1, -1):
            new[i, inc] = ((lam_dn[i] - 0.5 * a) * new[i + 1, inc]
                           + rbar[i, inc]) / (lam_dn[i] + 0.5 * a)
        new[0, out] = new[0, perm[out]] + H[out]
        for i in range(nxi - 1):
            new[i + 1, out] = ((lam_up[i] - 0.5 * a) * new[i, out]
                               + rbar[i, out]) / (lam_up[i] + 0.5 * a)
        return new

    g = np.zeros((nxi, n), complex)
    hist = []
    converged = False
    it = 0
    Gk, Fk = [], []                      # Anderson history: iterates, residuals
    for it in range(1, max_iter + 1):
        gn = sweep(g)
        f = (gn - g).ravel()
        diff = np.max(np.abs(f))
        hist.append(diff)
        scale = max(1.0, np.max(np.abs(gn)))
        if diff < tol * scale:
            g = gn
            converged = True
            break
        Gk.append(gn.ravel())
        Fk.append(f)
        if len(Gk) > anderson_depth:
            Gk.pop(0)
            Fk.pop(0)
        m = len(Fk)
        if m > 1:
            F = np.column_stack(Fk)
            # min || F alpha ||, sum alpha = 1  (regularized least squares)
            FtF = F.conj().T @ F
            FtF += 1e-12 * np.trace(FtF).real / m * np.eye(m)
            try:
                w = np.linalg.solve(FtF, np.ones(m))
                alpha = w / np.sum(w)
                g = (np.column_stack(Gk) @ alpha).reshape(nxi, n)
            except np.linalg.LinAlgError:
                g = gn
        else:
            g = gn

    norm = np.sqrt(np.abs(np.einsum("iq,q,iq->i", g, grid.weights, np.conj(g))).real)
    rate, tail = _tail_decay(xi, norm)
    rho, u, theta = grid.moments(g[-1])
    moments = {"rho": complex(rho), "u_n": complex(u[0]),
               "theta": complex(theta),
               "mass_flux": complex((g[-1] * vn) @ grid.weights)}
    sol = HalfSpaceSolution(problem, g, it, converged, np.array(hist),
                            rate, float(norm[-1]), moments)
    if verbose:
        print(f"half-space solve: {it} iterations, converged={converged}, "
              f"decay={rate:.3f}, tail={norm[-1]:.2e}")
    return sol


def _shift_rate(model):
    if model.kind == "bgk":
        return model.attenuation
    return max(model.rates)


def _tail_decay(xi, norm):
    """Log-slope of the norm profile over the last clean decade before any plateau."""
    top = norm.max()
    if top <= 0:
        return 0.0, 0.0
    # exclude a plateau: find where the profile stops decreasing
    lo = np.log(np.maximum(norm, 1e-300))
    end = len(xi) - 1
    plateau = norm[-1]
    mask = (norm > max(plateau * 3.0, top * 1e-12)) & (norm < top * 0.5)
    if np.count_nonzero(mask) < 4:
        mask = norm > top * 1e-8
    if np.count_nonzero(mask) < 4:
        return 0.0, float(norm[-1])
    A = np.vstack([xi[mask], np.ones(mask.sum())]).T
    slope = np.linalg.lstsq(A, lo[mask], rcond=None)[0][0]
    return float(-slope), float(norm[-1])


# ---------------------------------------------------------------------------
# dual-reflection operators and the fluid boundary conditions of the layer

def reflect(grid, f):
    return np.asarray(f)[grid.reflect_index(0)]


def lr_apply(grid, f):
    """L^R f = f(v) - f(R v): outgoing-minus-reflected (meaningful on v.n > 0)."""
    return np.asarray(f) - reflect(grid, f)


def incoming_flux_average(grid, f):
    """m_-[f] = sqrt(2pi) int_{v.n<0} f |v.n| M dv  (positively weighted)."""
    vn = grid.nodes[:, 0]
    m = vn < 0
    return np.sqrt(2.0 * np.pi) * np.sum(grid.weights[m] * np.asarray(f)[m]
                                         * (-vn[m]))


def ld_apply(grid, chi, f):
    """Dual diffuse operator L^D f = sqrt(2pi) chi (m_-[f] - f(R v))."""
    return np.sqrt(2.0 * np.pi) * chi * (incoming_flux_average(grid, f)
                                         - reflect(grid, f))


@dataclass
class GForm:
    """The interior+layer trace entering the reflection part of the wall datum.

    All tensors are given in the wall frame (normal = axis 0).  grad_u has
    components grad_u[i, j] = d u_i / d x_j.
    """
    rho: complex = 0.0
    u: np.ndarray = None               # (D,)
    theta: complex = 0.0
    dz_ub: np.ndarray = None           # d_zeta u^b (D,)
    dz_thetab: complex = 0.0
    dpi_ub: np.ndarray = None          # (D-1, D): d_{pi_alpha} u~^b
    dpi_thetab: np.ndarray = None      # (D-1,)
    grad_uint: np.ndarray = None       # (D, D)
    grad_thetaint: np.ndarray = None   # (D,)
    S_g: np.ndarray = None             # extra Null(L)^perp source on nodes

    def on_nodes(self, grid, Ahat, Bhat):
        D = grid.D
        v = grid.nodes
        vsq = np.sum(v ** 2, axis=1)
        u = np.zeros(D) if self.u is None else np.asarray(self.u)
        g = (self.rho + v @ u + self.theta * (0.5 * vsq - 0.5 * D)).astype(complex)
        n = np.zeros(D)
        n[0] = 1.0
        if self.dz_ub is not None:
            for i in range(D):
                for j in range(D):
                    g -= np.asarray(self.dz_ub)[i] * n[j] * Ahat[i, j]
        if self.dz_thetab:
            g -= self.dz_thetab * Bhat[0]
        if self.dpi_ub is not None:
            for al in range(D - 1):
                t = np.zeros(D)
                t[al + 1] = 1.0
                for i in range(D):
                    for j in range(D):
                        g += self.dpi_ub[al][i] * t[j] * Ahat[i, j]
        if self.dpi_thetab is not None:
            for al in range(D - 1):
                g += self.dpi_thetab[al] * Bhat[al + 1]
        if self.grad_uint is not None:
            G = np.asarray(self.grad_uint)
            for i in range(D):
                for j in range(D):
                    g += G[i, j] * Ahat[i, j]
        if self.grad_thetaint is not None:
            gt = np.asarray(self.grad_thetaint)
            for i in range(D):
                g += gt[i] * Bhat[i]
        if self.S_g is not None:
            g += np.asarray(self.S_g)
        return g


@dataclass
class FForm:
    """The hydrodynamic trace entering the diffuse part of the wall datum."""
    rho: complex = 0.0
    u: np.ndarray = None
    theta: complex = 0.0
    S_f: np.ndarray = None

    def on_nodes(self, grid):
        D = grid.D
        v = grid.nodes
        vsq = np.sum(v ** 2, axis=1)
        u = np.zeros(D) if self.u is None else np.asarray(self.u)
        f = (self.rho + v @ u + self.theta * (0.5 * vsq - 0.5 * D)).astype(complex)
        if self.S_f is not None:
            f += np.asarray(self.S_f)
        return f


@dataclass
class BoundaryConditionReport:
    """Direct moment integrals of H^bb vs their closed forms, per invariant."""
    direct: dict
    closed: dict
    bc_residual: dict
    solved: dict

    @property
    def max_route_gap(self):
        return max(abs(self.direct[k] - self.closed[k]) for k in self.direct)


def fluid_boundary_conditions(grid, model, chi, gform, fform, S=None, nu_kappa=None):
    """Evaluate the layer solvability conditions for H = -L^R g + L^D f.

    Returns the direct half-range moments of H against {1, a.v, |v|^2}, the
    closed-form expressions of the same moments in terms of the fluid
    coefficients, the resulting boundary-condition residuals, and the solved
    Dirichlet-type values (u_f tangential, theta_f) implied by the data.
    """
    from .collision import ahat_bhat, transport_coefficients
    D = grid.D
    vn = grid.nodes[:, 0]
    out = vn > 0
    w = grid.weights
    Ahat, Bhat = ahat_bhat(model)
    nu, kappa = nu_kappa if nu_kappa is not None else transport_coefficients(model)

    gnod = gform.on_nodes(grid, Ahat, Bhat)
    fnod = fform.on_nodes(grid)
    H = -lr_apply(grid, gnod) + ld_apply(grid, chi, fnod)

    def half_moment(fld, eta):
        return complex(np.sum(w[out] * fld[out] * eta[out] * vn[out]))

    etas = dict(tangential_invariants(grid))
    direct = {k: half_moment(H, eta) for k, eta in etas.items()}

    # closed forms of the same moments (wall frame, n = e1)
    u_g = np.zeros(D, complex) if gform.u is None else np.asarray(gform.u, complex)
    u_f = np.zeros(D, complex) if fform.u is None else np.asarray(fform.u, complex)
    dz_ub = np.zeros(D, complex) if gform.dz_ub is None else np.asarray(gform.dz_ub, complex)
    G = np.zeros((D, D), complex) if gform.grad_uint is None else np.asarray(gform.grad_uint, complex)
    gt = np.zeros(D, complex) if gform.grad_thetaint is None else np.asarray(gform.grad_thetaint, complex)
    dpin = np.zeros(D - 1, complex)
    if gform.dpi_ub is not None:
        dpin = np.array([gform.dpi_ub[al][0] for al in range(D - 1)], complex)
    Sg = np.zeros(grid.n, complex) if gform.S_g is None else np.asarray(gform.S_g, complex)
    Sf = np.zeros(grid.n, complex) if fform.S_f is None else np.asarray(fform.S_f, complex)
    ldSf = ld_apply(grid, chi, Sf)
    sq2pi = np.sqrt(2.0 * np.pi)

    closed = {}
    closed["mass"] = -u_g[0]
    for al in range(1, D):
        a_dot = lambda vec: vec[al]
        lr_mom = (nu * (-dz_ub[al])                      # d_zeta u^b (x) (-n) : Ahat
                  + nu * (G[al, 0] + G[0, al])           # 2 d(u_int) n, tangential
                  + nu * dpin[al - 1]                    # grad_pi (u~^b . n)
                  + half_moment(lr_apply(grid, Sg), grid.nodes[:, al]))
        ld_mom = -chi * u_f[al] + half_moment(ldSf, grid.nodes[:, al])
        closed[f"momentum_t{al}"] = -lr_mom + ld_mom
    vsq = np.sum(grid.nodes ** 2, axis=1)
    lr_e = ((D + 2.0) * kappa * (-gform.dz_thetab)
            + (D + 2.0) * kappa * gt[0]
            + (D + 2.0) * u_g[0]
            + half_moment(lr_apply(grid, Sg), vsq))
    ld_e = (sq2pi * chi * (0.5 * u_f[0] - (D + 1.0) / sq2pi * fform.theta)
            + half_moment(ldSf, vsq))
    closed["energy"] = -lr_e + ld_e

    sterm = {k: (S.moment_integral(grid, eta) if S is not None else 0.0)
             for k, eta in etas.items()}
    bc_res = {k: direct[k] + sterm[k] for k in direct}

    # solved Dirichlet-type values implied by the remaining data
    solved = {}
    for al in range(1, D):
        solved[f"u_f_t{al}"] = (nu / chi * dz_ub[al] - nu / chi * (G[al, 0] + G[0, al])
                                - nu / chi * dpin[al - 1]
                                - half_moment(lr_apply(grid, Sg), grid.nodes[:, al]) / chi
                                + half_moment(ldSf, grid.nodes[:, al]) / chi
                                + sterm[f"momentum_t{al}"] / chi)
    solved["theta_f"] = ((D + 2.0) / (D + 1.0) * kappa / chi * gform.dz_thetab
                         - (D + 2.0) / (D + 1.0) * kappa / chi * gt[0]
                         + sq2pi / (2.0 * (D + 1.0)) * u_f[0]
                         + half_moment(ldSf, vsq) / ((D + 1.0) * chi)
                         - half_moment(lr_apply(grid, Sg), vsq) / ((D + 1.0) * chi)
                         - (D + 2.0) / (D + 1.0) * u_g[0] / chi
                         + sterm["energy"] / ((D + 1.0) * chi))
    return BoundaryConditionReport(direct, closed, bc_res, solved)
