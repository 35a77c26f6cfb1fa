"""Acoustic operator, its eigenpairs, and the shifted spectral solver.

Fluid states live in the span of the first K Neumann modes (plus the
constant): rho and theta expand in {psi_l}, the velocity in {grad psi_l}.
On that span the acoustic operator, the H inner product, the incompressible
splitting, and the pseudo-inverse of (A - i lambda) are exact linear algebra.

Solvability of the shifted system is extracted per basis vector from the
Green identity  <A V|W> + <V|A W> = boundary_int (v.n)(rho_W + theta_W),
which for W = U^{delta,l} carries the boundary datum with the weight
sqrt((D+2)/(2D)) psi_l.  No boundary lifting is needed; lift-independence
is checked in the tests by solving with two explicit lifts.
"""

from dataclasses import dataclass, field

import numpy as np

from .domain import boundary_quadrature, interior_quadrature
from .spectrum import compute_modes


class ModeBasis:
    """Neumann-mode spectral basis for acoustic fluid states.

    Slot 0 is the constant mode (mu = 0, no velocity direction); slots
    1..K are the supplied eigenmodes.
    """

    def __init__(self, domain, D, modes, bquad_order=32):
        self.domain = domain
        self.D = int(D)
        self.modes = list(modes)
        self.K = len(self.modes)
        self.mu = np.array([0.0] + [m.mu for m in self.modes])
        self.lam = np.array([0.0] + [m.lambda0 for m in self.modes])
        bq = boundary_quadrature(domain, bquad_order)
        self.bpoints = [bp for bp, _ in bq]
        self.bweights = np.array([w for _, w in bq])
        pos = np.array([bp.position for bp in self.bpoints])
        self.psi_boundary = np.vstack(
            [np.ones(len(bq))] + [m.value(pos) for m in self.modes])

    def state(self, rho=None, u=None, theta=None):
        z = np.zeros(self.K + 1, complex)
        return FluidState(self,
                          z.copy() if rho is None else np.asarray(rho, complex),
                          z.copy() if u is None else np.asarray(u, complex),
                          z.copy() if theta is None else np.asarray(theta, complex))

    def eigenpair(self, tau, k):
        return AcousticEigenpair(self, tau, k)

    def boundary_integral(self, values):
        """Integral over the boundary of values given on the basis quadrature."""
        return np.sum(self.bweights * np.asarray(values), axis=-1)

    def boundary_coeffs(self, g_bc):
        """b_l = boundary integral of g_bc * psi_l for every slot l."""
        vals = self.eval_boundary_field(g_bc)
        return (self.psi_boundary * (self.bweights * vals)).sum(axis=1)

    def eval_boundary_field(self, g_bc):
        if callable(g_bc):
            return np.array([g_bc(bp) for bp in self.bpoints])
        g = np.asarray(g_bc)
        if g.shape != (len(self.bpoints),):
            raise ValueError("boundary datum shape mismatch")
        return g


@dataclass
class FluidState:
    """(rho, u, theta) with rho,theta in span{psi_l}, u in span{grad psi_l}.

    ``solenoidal`` optionally carries a divergence-free velocity with
    w.n = 0 (a Null(A) component outside the gradient span).
    """
    basis: ModeBasis
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    solenoidal: object = None     # callable x -> (...,2) or None

    def copy(self):
        return FluidState(self.basis, self.rho.copy(), self.u.copy(),
                          self.theta.copy(), self.solenoidal)

    def __add__(self, other):
        if other.solenoidal is not None and self.solenoidal is not None:
            sol = lambda x: self.solenoidal(x) + other.solenoidal(x)
        else:
            sol = self.solenoidal or other.solenoidal
        return FluidState(self.basis, self.rho + other.rho, self.u + other.u,
                          self.theta + other.theta, sol)

    def __mul__(self, c):
        sol = None
        if self.solenoidal is not None:
            sol = lambda x, f=self.solenoidal: c * f(x)
        return FluidState(self.basis, c * self.rho, c * self.u, c * self.theta, sol)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def evaluate(self, x):
        """(rho(x), u(x) as a D-vector, theta(x)) at points x (..., 2)."""
        b = self.basis
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        rho = np.full(shape, self.rho[0], complex)
        theta = np.full(shape, self.theta[0], complex)
        u = np.zeros(shape + (b.D,), complex)
        for l, m in enumerate(b.modes, start=1):
            psi = m.value(x)
            rho += self.rho[l] * psi
            theta += self.theta[l] * psi
            if self.u[l] != 0.0:
                g = m.gradient(x)
                u[..., :2] += self.u[l] * g
        if self.solenoidal is not None:
            u[..., :2] += np.asarray(self.solenoidal(x), complex)
        return rho, u, theta

    def gradients(self, x):
        """(grad rho, grad u, grad theta): shapes (...,2), (...,D,2), (...,2).

        grad_u[..., i, j] = d u_i / d x_j.
        """
        b = self.basis
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        grho = np.zeros(shape + (2,), complex)
        gtheta = np.zeros(shape + (2,), complex)
        gu = np.zeros(shape + (b.D, 2), complex)
        for l, m in enumerate(b.modes, start=1):
            g = m.gradient(x)
            grho += self.rho[l] * g
            gtheta += self.theta[l] * g
            if self.u[l] != 0.0:
                gu[..., :2, :] += self.u[l] * m.hessian(x)
        return grho, gu, gtheta

    def h_norm(self):
        return np.sqrt(abs(h_inner(self, self)))


def h_inner(U1, U2):
    """<U1, U2>_H = int rho1 conj(rho2) + u1.conj(u2) + (D/2) theta1 conj(theta2)."""
    b = U1.basis
    val = np.sum(U1.rho * np.conj(U2.rho)
                 + b.mu * U1.u * np.conj(U2.u)
                 + 0.5 * b.D * U1.theta * np.conj(U2.theta))
    if U1.solenoidal is not None or U2.solenoidal is not None:
        pts, w = interior_quadrature(b.domain, level=32)
        w1 = U1.solenoidal(pts) if U1.solenoidal is not None else 0.0 * pts
        w2 = U2.solenoidal(pts) if U2.solenoidal is not None else 0.0 * pts
        val += np.sum(w * np.sum(np.asarray(w1) * np.conj(np.asarray(w2)), axis=-1))
        # gradient modes are H-orthogonal to solenoidal fields, no cross term
    return complex(val)


def apply_acoustic(U):
    """A U = (div u, grad(rho+theta), (2/D) div u) in basis coefficients."""
    b = U.basis
    return FluidState(b,
                      -b.mu * U.u,
                      U.rho + U.theta,
                      -(2.0 / b.D) * b.mu * U.u)


def split_incompressible(U):
    """(Pi U, Pi_perp U): projections onto Null(A) and the acoustic regime."""
    b = U.basis
    D = b.D
    s = U.rho + U.theta
    incomp = FluidState(b, (2 * U.rho - D * U.theta) / (D + 2.0),
                        np.zeros_like(U.u),
                        (D * U.theta - 2 * U.rho) / (D + 2.0), U.solenoidal)
    acoust = FluidState(b, D / (D + 2.0) * s, U.u.copy(), 2.0 / (D + 2.0) * s)
    return incomp, acoust


class AcousticEigenpair:
    """tau in {+1,-1}, slot k >= 1: eigenvalue i tau lambda0^k of A."""

    def __init__(self, basis, tau, k):
        if not 1 <= k <= basis.K:
            raise ValueError("mode slot out of range")
        self.basis = basis
        self.tau = int(tau)
        self.k = int(k)
        self.lam0 = basis.lam[k]
        self.eig = 1j * self.tau * self.lam0
        D = basis.D
        pref = np.sqrt((D + 2.0) / (2.0 * D))
        U = basis.state()
        U.rho[k] = pref * D / (D + 2.0)
        U.u[k] = pref / self.eig
        U.theta[k] = pref * 2.0 / (D + 2.0)
        self.U = U

    @property
    def mode(self):
        return self.basis.modes[self.k - 1]

    def maxwellian_on(self, x, grid):
        """Infinitesimal Maxwellian g(x, v) on grid nodes; Null(L) valued.

        Returns an array of shape x.shape[:-1] + (n_nodes,).
        """
        rho, u, theta = self.U.evaluate(x)
        v = grid.nodes
        vsq = np.sum(v ** 2, axis=1)
        e = 0.5 * vsq - 0.5 * grid.D
        return (rho[..., None] + u @ v.T + theta[..., None] * e)


@dataclass
class ShiftedSolveResult:
    mu_i: complex                  # i mu: coefficient of U^{tau,k} forced by solvability
    V1: FluidState                 # unique Ker(A - i lambda)^perp part
    compat: dict = field(default_factory=dict)   # partner slot -> residual
    kernel_slots: tuple = ()       # slots whose U^{tau,l} coefficient is free


def solve_shifted_acoustic(basis, tau, k, F=None, g_bc=None, group=None):
    """Solve (A - i lambda^{tau,k}) V = i mu U^{tau,k} + F, v.n = g_bc on dOmega.

    Returns i mu (fixed by solvability), the Ker^perp component V1 via the
    bounded pseudo-inverse, compatibility residuals for degenerate partners,
    and the kernel slots left undetermined (coefficients zero in V1).
    """
    D = basis.D
    pref = np.sqrt((D + 2.0) / (2.0 * D))
    lamk = basis.lam[k]
    eig = 1j * tau * lamk
    F = F if F is not None else basis.state()
    bcoef = (basis.boundary_coeffs(g_bc) if g_bc is not None
             else np.zeros(basis.K + 1, complex))
    if group is None:
        group = [l for l in range(1, basis.K + 1)
                 if abs(basis.lam[l] - lamk) <= 1e-9 * max(1.0, lamk)]

    V = basis.state()
    mu_i = None
    compat = {}

    # constant block: directions (1,0,-1)/c and (D,0,2)/((D+2) c')
    cN = np.sqrt(1.0 + 0.5 * D)
    cM = np.sqrt(D / (D + 2.0))
    fN = (F.rho[0] - 0.5 * D * F.theta[0]) / cN          # <F | N^0>
    fM = (D / (D + 2.0) * F.rho[0] + D / (D + 2.0) * F.theta[0]) / cM
    aN = fN / (-eig)
    aM = (fM - np.sqrt((D + 2.0) / D) * bcoef[0]) / (-eig)
    V.rho[0] = aN / cN + aM * (D / (D + 2.0)) / cM
    V.theta[0] = -aN / cN + aM * (2.0 / (D + 2.0)) / cM

    for l in range(1, basis.K + 1):
        lam_l = basis.lam[l]
        # null direction N^l = (psi_l, 0, -psi_l)/cN: no boundary term
        fN = (F.rho[l] - 0.5 * D * F.theta[l]) / cN
        aN = fN / (-eig)
        V.rho[l] += aN / cN
        V.theta[l] += -aN / cN
        for delta in (+1, -1):
            W = basis.eigenpair(delta, l)
            fW = h_inner(F, W.U)
            bW = pref * bcoef[l]
            if l in group and delta == tau:
                val = bW - fW
                if l == k:
                    mu_i = val
                else:
                    compat[l] = val
                continue            # kernel direction: coefficient left free (zero)
            coef = (fW - bW) / (1j * delta * lam_l - eig)
            V.rho += coef * W.U.rho
            V.u += coef * W.U.u
            V.theta += coef * W.U.theta

    if F.solenoidal is not None:
        V.solenoidal = lambda x, f=F.solenoidal: f(x) / (-eig)
    kernel = tuple(l for l in group)
    return ShiftedSolveResult(mu_i, V, compat, kernel)
