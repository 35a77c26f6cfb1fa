"""Two-scale approximate eigenfunctions through induction rounds 0..2.

One ModeAssembly holds, for a single acoustic mode (k, tau) on one domain:

- round 0: the interior infinitesimal Maxwellian and the decaying viscous
  profiles of tangential velocity and temperature (zeta = d/sqrt(eps)),
- round 1: the induced normal flux Z1, the damping coefficient i*lambda1,
  the interior corrector U1, and the Knudsen term K1 (xi = d/eps),
- round 2: the forced viscous profiles, the flux Z2 and i*lambda2, the
  interior corrector U2 with its kinetic I2 attachment, and K2.

Boundary-layer fields are sums  amplitude(s) * profile(zeta) * F(v)  where
the amplitude is either an exact tangential derivative of the eigenmode
trace (slab: tangentially constant) or a pointwise callable (round-2 data
that mixes many modes).  Velocity factors are built per velocity grid, so
the same assembly can be evaluated on the wall-adapted grid (residuals) and
on the simulator grid (mode projection).

All undetermined kernel pieces of degenerate eigenvalues are set to zero
after the orthogonality machinery has been exhausted.
"""

from dataclasses import dataclass, field

import numpy as np

from .acoustic import (ModeBasis, FluidState, h_inner, apply_acoustic,
                       solve_shifted_acoustic)
from .collision import ahat_bhat, transport_coefficients, make_collision_model
from .domain import boundary_quadrature, layered_quadrature_slab
from .knudsen import (HalfSpaceProblem, solve_halfspace, solvability_residual,
                      lr_apply, ld_apply, reflect, default_xi_grid)
from .spectrum import CompositeMode
from .viscous import (LayerProfile, damping_coefficient, surface_route_damping,
                      c_chi, decay_rate, solve_layer_ode, normal_flux_Z1)


# ---------------------------------------------------------------------------
# wall-frame velocity factors (canonical frame: outward normal = +e1,
# spatial tangent = +e2, grad d = -e1)

class NodeFactors:
    """Per-grid cache of the canonical velocity-space factors."""

    def __init__(self, grid, model):
        self.grid = grid
        self.model = model
        D = grid.D
        v = grid.nodes
        vsq = np.sum(v ** 2, axis=1)
        Ahat, Bhat = ahat_bhat(model)
        self.one = np.ones(grid.n)
        self.energy = 0.5 * vsq - 0.5 * D
        self.vd = -v[:, 0]                      # v . grad d
        self.vt = v[:, 1]                       # v . t
        self.vn = v[:, 0]
        self.Ahat = Ahat
        self.Bhat = Bhat
        self.b_theta = -Bhat[0]                 # grad d . B_hat
        self.b_u = -Ahat[1, 0]                  # (t x grad d) : A_hat
        self.b_un = Ahat[0, 0]                  # (grad d x grad d) : A_hat


@dataclass
class WallTerm:
    """coef * (d_t^sorder psi at the wall point) * profile(zeta) * nodefn(v)."""
    coef: complex
    sorder: int
    profile: LayerProfile
    nodefn: np.ndarray


def _dzeta(terms):
    return [WallTerm(t.coef, t.sorder, t.profile.derivative(), t.nodefn)
            for t in terms]


def _dtan(terms):
    return [WallTerm(t.coef, t.sorder + 1, t.profile, t.nodefn) for t in terms]


def _mulnode(terms, arr):
    return [WallTerm(t.coef, t.sorder, t.profile, t.nodefn * arr) for t in terms]


def _linv_perp(terms, model):
    out = []
    for t in terms:
        f = model.pinv(t.nodefn - model.grid.project_hydro(t.nodefn))
        out.append(WallTerm(t.coef, t.sorder, t.profile, f))
    return out


def _scale(terms, c):
    return [WallTerm(c * t.coef, t.sorder, t.profile, t.nodefn) for t in terms]


def _moment_profiles(terms, grid):
    """Hydrodynamic moments of a WallTerm sum: dicts sorder -> LayerProfile.

    Returns (rho, u_n, u_t, theta) moment profiles in the canonical frame.
    """
    rho, un, ut, th = {}, {}, {}, {}
    vsqD = np.sum(grid.nodes ** 2, axis=1) / grid.D - 1.0
    for t in terms:
        r = grid.bracket(t.nodefn)
        mn = grid.bracket(t.nodefn * grid.nodes[:, 0])
        mt = grid.bracket(t.nodefn * grid.nodes[:, 1])
        e = grid.bracket(t.nodefn * vsqD)
        for dic, m in ((rho, r), (un, mn), (ut, mt), (th, e)):
            if abs(m) > 1e-14:
                prof = (m * t.coef) * t.profile
                dic[t.sorder] = dic.get(t.sorder, LayerProfile()) + prof
    return rho, un, ut, th


# ---------------------------------------------------------------------------
# amplitude fields on the boundary

class SurfAmp:
    """Amplitude = coef * d_t^order of the eigenmode trace (exact derivative)."""

    def __init__(self, mode, order, coef=1.0):
        self.mode = mode
        self.order = order
        self.coef = coef

    def __call__(self, bp):
        return self.coef * self.mode.surface_values(bp, self.order)[self.order]

    def tderiv(self):
        return SurfAmp(self.mode, self.order + 1, self.coef)


class FnAmp:
    """Pointwise amplitude with tangential derivative by one-sided chart FD."""

    def __init__(self, fn, domain=None, h=1e-5):
        self.fn = fn
        self.domain = domain
        self.h = h

    def __call__(self, bp):
        return self.fn(bp)

    def tderiv(self):
        from .domain import boundary_point

        def d(bp, fn=self.fn, dom=self.domain, h=self.h):
            # parameter of our charts is arclength except on the disk (angle)
            scale = dom.radius if dom.kind == "disk" else 1.0
            p1 = boundary_point(dom, bp.chart, bp.param + h)
            p0 = boundary_point(dom, bp.chart, bp.param - h)
            return (fn(p1) - fn(p0)) / (2 * h * scale)

        return FnAmp(d, self.domain, self.h)


class ZeroAmp:
    def __call__(self, bp):
        return 0.0

    def tderiv(self):
        return self


# profile fields: list of (amplitude, LayerProfile) pairs

def _field_value(pairs, bp, zeta):
    out = 0.0 + 0.0j
    for amp, prof in pairs:
        out = out + amp(bp) * prof.value(zeta)
    return out


def _field_dz(pairs):
    return [(amp, prof.derivative()) for amp, prof in pairs]


def _field_dt(pairs):
    return [(amp.tderiv(), prof) for amp, prof in pairs]


def _field_tail(pairs):
    return [(amp, prof.antiderivative_tail()) for amp, prof in pairs]


def _field_robin(pairs, gamma, bp):
    return sum(amp(bp) * prof.robin(gamma) for amp, prof in pairs)


# ---------------------------------------------------------------------------
# the assembly

@dataclass
class ApproxEigenpair:
    domain: object
    D: int
    k: int
    tau: int
    chi: float
    N: int
    lam0: float
    il1: complex
    il2: complex
    basis: ModeBasis
    mode: object
    U0: FluidState
    U1: FluidState
    U2: FluidState
    nu: float
    kappa: float
    rounds: object                      # ModeAssembly with the layer data

    @property
    def eigenvalue(self):
        return 1j * self.tau * self.lam0

    def il_eps(self, eps):
        out = 1j * self.tau * self.lam0
        if self.N >= 1:
            out = out + self.il1 * np.sqrt(eps)
        if self.N >= 2:
            out = out + self.il2 * eps
        return out

    def to_dict(self):
        return {
            "domain": self.domain.kind, "D": self.D, "k": str(self.mode.index),
            "tau": self.tau, "chi": self.chi, "N": self.N,
            "lambda0": self.lam0,
            "il1": [self.il1.real, self.il1.imag],
            "il2": [self.il2.real, self.il2.imag],
            "nu": self.nu, "kappa": self.kappa,
        }


class ModeAssembly:
    """Builds and stores rounds 0..2 for one (k, tau) acoustic mode."""

    def __init__(self, basis, model_wall, k, tau, chi, N=2,
                 xi_grid=None, hs_tol=1e-10):
        self.basis = basis
        self.domain = basis.domain
        self.D = basis.D
        self.model_wall = model_wall
        self.grid_wall = model_wall.grid
        self.k = k
        self.tau = tau
        self.chi = chi
        self.N = N
        self.mode = basis.modes[k - 1]
        self.lam0 = basis.lam[k]
        self.eig = 1j * tau * self.lam0
        self.nu, self.kappa = transport_coefficients(model_wall)
        self.xi_grid = xi_grid if xi_grid is not None else default_xi_grid()
        self.hs_tol = hs_tol
        self._factors = {}
        self._ksolutions = {}
        self.diagnostics = {}
        self._build()

    # -- per-grid caches ----------------------------------------------------
    def factors(self, grid=None, model=None):
        grid = grid or self.grid_wall
        model = model or self.model_wall
        key = id(grid)
        if key not in self._factors:
            self._factors[key] = NodeFactors(grid, model)
        return self._factors[key]

    # -- construction -------------------------------------------------------
    def _build(self):
        D, tau, chi = self.D, self.tau, self.chi
        lam0, nu, kappa = self.lam0, self.nu, self.kappa
        mode = self.mode
        pref = np.sqrt((D + 2.0) / (2.0 * D))
        kt = ((D + 2.0) / (D + 1.0)) ** 2 * kappa
        cchi = c_chi(lam0, tau, chi)
        self.r_u = decay_rate(lam0, tau, nu)
        self.r_t = decay_rate(lam0, tau, kappa)
        self.gamma_u = nu / chi
        self.gamma_t = (D + 2.0) / (D + 1.0) * kappa / chi

        # ---- round 0: eigenvector and decaying profiles
        self.U0 = self.basis.eigenpair(tau, self.k).U
        self.c_theta0 = pref * 2.0 / (D + 2.0) / (cchi * np.sqrt(kt) - 1.0)
        self.c_u0 = pref / self.eig / (cchi * np.sqrt(nu) - 1.0)
        P_t0 = LayerProfile([(1.0, self.r_t, 0)])
        P_u0 = LayerProfile([(1.0, self.r_u, 0)])
        self.theta0_b = [(SurfAmp(mode, 0, self.c_theta0), P_t0)]
        self.u0t_b = [(SurfAmp(mode, 1, self.c_u0), P_u0)]

        # ---- round 1: normal flux, damping, interior corrector, K1
        # u1^b . grad d = int_zeta^inf [div_pi(u0.t) + i lam0 theta0] dzeta
        self.u1n_b = _field_tail([(SurfAmp(mode, 2, self.c_u0), P_u0)]
                                 + [(a, self.eig * p) for a, p in self.theta0_b])
        z1_field = lambda bp: _field_value(self.u1n_b, bp, 0.0)
        self.z1_field = z1_field
        il1_surface = pref * self.basis.boundary_integral(
            [z1_field(bp) * mode.value(bp.position) for bp in self.basis.bpoints])
        dc = damping_coefficient(self.domain, mode, D, nu, kappa, chi, tau)
        self.damping = dc
        self.il1 = dc.il1
        self.diagnostics["il1_routes_gap"] = abs(il1_surface - dc.il1)

        sol1 = solve_shifted_acoustic(self.basis, tau, self.k, g_bc=z1_field)
        self.diagnostics["imu_round1_gap"] = abs(sol1.mu_i - self.il1)
        self.compat1 = sol1.compat
        self.U1 = sol1.V1

        # ---- round 2 data
        self._build_round2()

    def _knudsen_canonical(self, grid=None, model=None):
        """Unit-amplitude K1 half-space solves on the given grid (cached)."""
        grid = grid or self.grid_wall
        model = model or self.model_wall
        key = id(grid)
        if key in self._ksolutions:
            return self._ksolutions[key]
        fac = self.factors(grid, model)
        D, chi = self.D, self.chi
        sq2pi = np.sqrt(2.0 * np.pi)
        nu, kappa = self.nu, self.kappa
        # per unit d_zeta theta0^b(0):
        H_th = (lr_apply(grid, fac.Bhat[0])
                + sq2pi * chi * (0.5 * (D + 1.0) - 0.5 * np.sum(grid.nodes ** 2, 1))
                * (D + 2.0) / (D + 1.0) * kappa / chi)
        # per unit d_zeta (u0^b . t)(0):
        H_u = lr_apply(grid, fac.Ahat[1, 0]) - sq2pi * nu * grid.nodes[:, 1]
        sols = {}
        for name, H in (("theta", H_th), ("u", H_u)):
            prob = HalfSpaceProblem(grid, model, H, xi=self.xi_grid)
            sols[name] = solve_halfspace(prob, tol=self.hs_tol)
        self._ksolutions[key] = sols
        return sols

    def _build_round2(self):
        D, tau, chi = self.D, self.tau, self.chi
        lam0, nu, kappa = self.lam0, self.nu, self.kappa
        mode = self.mode
        grid, model = self.grid_wall, self.model_wall
        fac = self.factors()
        pref = np.sqrt((D + 2.0) / (2.0 * D))
        sq2pi = np.sqrt(2.0 * np.pi)

        ks = self._knudsen_canonical()
        k_th, k_u = ks["theta"], ks["u"]
        self.diagnostics["k1_solvability"] = max(
            max(abs(v) for v in solvability_residual(k_th.problem).values()),
            max(abs(v) for v in solvability_residual(k_u.problem).values()))
        self.diagnostics["k1_decay"] = (k_th.decay_rate, k_u.decay_rate)

        # trace amplitudes: d_zeta theta0(0) = kth * psi(s), d_zeta u0t(0) = ku * dpsi(s)
        kth = -self.r_t * self.c_theta0
        ku = -self.r_u * self.c_u0
        # round-1 kinetic trace S1 = B1(0) + K1(0) channelwise
        S1_th = -fac.Bhat[0] + k_th.g[0]
        S1_u = -fac.Ahat[1, 0] + k_u.g[0]
        # S_g for round-2 data: L^-1 P^perp[(v.grad d) dz B1](0), channelwise.
        X_th = model.pinv(fac.vd * fac.b_theta
                          - grid.project_hydro(fac.vd * fac.b_theta))
        X_u = model.pinv(fac.vd * fac.b_u
                         - grid.project_hydro(fac.vd * fac.b_u))
        # amplitudes of d2_zeta at 0: theta: r_t^2 c_t0 psi; u: r_u^2 c_u0 dpsi
        # V-moments: tangential and energy moments of L^D(S1) and -L^R(S_g)
        vn = grid.nodes[:, 0]
        out = vn > 0
        w = grid.weights
        vsq = np.sum(grid.nodes ** 2, axis=1)

        def half(fld, eta):
            return complex(np.sum(w[out] * fld[out] * eta[out] * vn[out]))

        # canonical V1 coefficients per unit trace amplitude
        # d2_zeta amplitude per unit d1_zeta amplitude is -r (pure exponential)
        ld_th = ld_apply(grid, chi, S1_th)
        ld_u = ld_apply(grid, chi, S1_u)
        lrg_th = lr_apply(grid, -self.r_t * X_th)
        lrg_u = lr_apply(grid, -self.r_u * X_u)
        vt = grid.nodes[:, 1]
        self.V1u_u = (half(ld_u, vt) - half(lrg_u, vt)) / chi      # x ku dpsi
        self.V1u_th = (half(ld_th, vt) - half(lrg_th, vt)) / chi   # x kth psi
        self.V1t_th = (half(ld_th, vsq) - half(lrg_th, vsq)) / ((D + 1.0) * chi)
        self.V1t_u = (half(ld_u, vsq) - half(lrg_u, vsq)) / ((D + 1.0) * chi)

        # ---- symbolic layer algebra for the F1 forcing
        P_t0 = LayerProfile([(1.0, self.r_t, 0)])
        P_u0 = LayerProfile([(1.0, self.r_u, 0)])
        B0 = [WallTerm(-self.c_theta0, 0, P_t0, fac.one),
              WallTerm(self.c_u0, 1, P_u0, fac.vt),
              WallTerm(self.c_theta0, 0, P_t0, fac.energy)]
        B1 = [WallTerm(self.c_u0, 1, P_u0.derivative(), fac.b_u),
              WallTerm(self.c_theta0, 0, P_t0.derivative(), fac.b_theta)]
        self._B1_r0 = B1
        T = (_mulnode(_dzeta(B1), fac.vd) + _mulnode(_dtan(B0), fac.vt))
        B2 = _linv_perp(T, model)
        self._B2_r0 = B2
        Fsrc = _mulnode(_dzeta(B2), fac.vd) + _mulnode(_dtan(B1), fac.vt)
        Frho, Fun, Fut, Fth = _moment_profiles(Fsrc, grid)

        def as_field(dic, extra_scale=1.0):
            return [(SurfAmp(mode, so, extra_scale), prof)
                    for so, prof in dic.items()]

        # forcing of the u1t ODE: i lam1 u0t - F^u . t
        forcing_u = [(a, self.il1 * p) for a, p in self.u0t_b]
        forcing_u += [(SurfAmp(mode, so), -1.0 * prof) for so, prof in Fut.items()]
        # forcing of the theta1 ODE: i lam1 theta0 - D/(D+2) F^theta + 2/(D+2) F^rho
        forcing_t = [(a, self.il1 * p) for a, p in self.theta0_b]
        forcing_t += [(SurfAmp(mode, so), -D / (D + 2.0) * prof)
                      for so, prof in Fth.items()]
        forcing_t += [(SurfAmp(mode, so), 2.0 / (D + 2.0) * prof)
                      for so, prof in Frho.items()]

        # Robin data: -u1_int.t + V1u ; -theta1_int + V1t
        U1 = self.U1
        mode_k = mode

        def datum_u(bp):
            _, u, _ = U1.evaluate(bp.position)
            ut = complex(u[..., 0] * bp.tangent[0] + u[..., 1] * bp.tangent[1])
            sv = mode_k.surface_values(bp, 1)
            v1u = (self.V1u_u * ku * sv[1] + self.V1u_th * kth * sv[0]
                   - nu / chi * self._two_d_u0_n_tan(bp))
            return -ut + v1u

        def datum_t(bp):
            _, _, th = U1.evaluate(bp.position)
            sv = mode_k.surface_values(bp, 1)
            v1t = self.V1t_th * kth * sv[0] + self.V1t_u * ku * sv[1]
            return -complex(th) + v1t

        sol_u, res_u = self._solve_profile_field(nu, self.gamma_u,
                                                 forcing_u, datum_u)
        sol_t, res_t = self._solve_profile_field(kappa, self.gamma_t,
                                                 forcing_t, datum_t)
        self.u1t_b = sol_u
        self.theta1_b = sol_t
        self.diagnostics["round2_resonant"] = (res_u, res_t)

        # rho2 + theta2 = Y2: -dz(Y2) = {nu(2-2/D) d2 - i lam0}[u1.grad d] + F^u.grad d
        op_u1n = []
        for amp, prof in self.u1n_b:
            d2 = prof.derivative().derivative()
            op_u1n.append((amp, nu * (2.0 - 2.0 / D) * d2 + (-self.eig) * prof))
        op_u1n += [(SurfAmp(mode, so), -1.0 * prof) for so, prof in Fun.items()]
        # F^u . grad d = -(F^u)_n in canonical frame: Fun holds the +e1 moment
        self.Y2_b = _field_tail(op_u1n)

        # u2 . grad d: -dz = div_pi(u1.t) + i lam0 theta1 + i lam1 theta0
        integrand = _field_dt(sol_u)
        integrand += [(a, self.eig * p) for a, p in sol_t]
        integrand += [(a, self.il1 * p) for a, p in self.theta0_b]
        self.u2n_b = _field_tail(integrand)
        z2_field = lambda bp: _field_value(self.u2n_b, bp, 0.0)
        self.z2_field = z2_field

        # i lambda2 = <D U0|U0> + pref * int Z2 psi^k
        dU0 = dissipation_operator(self.U0, nu, kappa)
        diss = h_inner(dU0, self.U0)
        z2k = pref * self.basis.boundary_integral(
            [z2_field(bp) * mode.value(bp.position) for bp in self.basis.bpoints])
        self.il2 = diss + z2k
        self.diagnostics["il2_dissipation"] = diss

        F2 = self.il1 * self.U1 + self.il2 * self.U0 \
            - dissipation_operator(self.U0, nu, kappa)
        sol2 = solve_shifted_acoustic(self.basis, tau, self.k, F=F2,
                                      g_bc=z2_field)
        self.diagnostics["imu_round2"] = abs(sol2.mu_i)
        self.compat2 = sol2.compat
        self.U2 = sol2.V1

    def _two_d_u0_n_tan(self, bp):
        """[2 d(u0_int) . n]^tan . t at a boundary point (one spatial tangent)."""
        G = self._grad_u0int(bp)          # G[i, j] = d_j u_i (2x2 block)
        n, t = bp.normal, bp.tangent
        vec = (G + G.T) @ n
        return complex(vec @ t)

    def _grad_u0int(self, bp):
        c = np.sqrt((self.D + 2.0) / (2.0 * self.D)) / self.eig
        return c * self.mode.hessian(bp.position)

    def _solve_profile_field(self, diff, gamma, forcing_pairs, datum_fn):
        """Solve the Robin ODE per amplitude channel; pointwise homogeneous part.

        forcing_pairs: list of (amplitude, profile) for the RHS.  The
        particular parts are solved per pair; the homogeneous coefficient is
        the pointwise callable that enforces the Robin condition.
        """
        from .viscous import particular_profile
        eig = self.eig
        r0 = np.sqrt(eig / diff)
        if r0.real < 0:
            r0 = -r0
        partic = []
        resonant = False
        for amp, prof in forcing_pairs:
            p, hit = particular_profile(diff, eig, prof)
            resonant = resonant or hit
            partic.append((amp, p))
        hom_prof = LayerProfile([(1.0, r0, 0)])

        def hom_amp(bp):
            val = datum_fn(bp) - _field_robin(partic, gamma, bp)
            return val / (1.0 + gamma * r0)

        return partic + [(FnAmp(hom_amp, self.domain), hom_prof)], resonant

    # -- evaluation ---------------------------------------------------------
    def charts(self):
        """Boundary charts carrying layers: wall descriptors for evaluation."""
        dom = self.domain
        if dom.kind == "slab":
            return [_SlabChart(0), _SlabChart(1)]
        raise NotImplementedError(
            "full ansatz evaluation is supported on the slab; use the "
            "coefficient-level API elsewhere")


class _SlabChart:
    """Wall chart of the slab with a globally smooth distance function."""

    def __init__(self, side):
        self.side = side                      # 0: wall x=0, 1: wall x=1

    def dist(self, x):
        return x[..., 0] if self.side == 0 else 1.0 - x[..., 0]

    def boundary_point(self, dom, x):
        from .domain import boundary_point
        return boundary_point(dom, self.side, 0.5)

    @property
    def normal_sign(self):
        # canonical frame axis e1 = outward normal; wall 0 normal = -e1 global
        return -1.0 if self.side == 0 else 1.0

    def node_map(self, grid):
        """Permutation mapping canonical-frame node values onto global nodes."""
        if self.side == 1:
            return np.arange(grid.n)
        return grid.reflect_index(0)


def dissipation_operator(U, nu, kappa):
    """D U = (0, nu div(grad u + grad u^T - (2/D) div u I), (D+2)/D kappa lap theta).

    Exact on the gradient-mode span: u-slot scales by -nu(2 - 2/D) mu_l,
    theta-slot by -((D+2)/D) kappa mu_l.
    """
    b = U.basis
    D = b.D
    out = b.state()
    out.u = -nu * (2.0 - 2.0 / D) * b.mu * U.u
    out.theta = -(D + 2.0) / D * kappa * b.mu * U.theta
    return out


# ---------------------------------------------------------------------------
# multiplicity orthogonalization

def _joint_diagonalize(mats, tol=1e-9):
    """Orthogonal R with R^T M R diagonal for every M (commuting symmetric M's).

    Built by eigenspace refinement: diagonalize the first matrix, then
    recursively diagonalize the others inside each degenerate eigenspace.
    """
    n = mats[0].shape[0]
    R = np.eye(n)
    if not mats:
        return R
    M = R.T @ mats[0] @ R
    w, V = np.linalg.eigh(M)
    R = R @ V
    if len(mats) > 1:
        scale = max(1.0, np.max(np.abs(w)))
        groups = _group_indices(w, tol * scale)
        for idx in groups:
            if len(idx) < 2:
                continue
            sub = [R[:, idx].T @ M2 @ R[:, idx] for M2 in mats[1:]]
            Rsub = _joint_diagonalize(sub, tol)
            R[:, idx] = R[:, idx] @ Rsub
    return R


def _group_indices(vals, tol):
    groups = [[0]]
    for i in range(1, len(vals)):
        if abs(vals[i] - vals[groups[-1][0]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass
class MultiplicityResult:
    modes: list                       # rotated NeumannModes
    rotation: np.ndarray
    Q1: np.ndarray                    # Q1 in the rotated basis
    degenerate_pairs: list            # Q1-eigenvalue collisions handled by Q2
    Q2: np.ndarray = None             # Q2 on colliding blocks (if built)
    Q2_offdiag: float = 0.0

    @property
    def q1_offdiag(self):
        off = self.Q1 - np.diag(np.diag(self.Q1))
        return float(np.max(np.abs(off))) if off.size else 0.0


def orthogonalize_multiplicity(domain, group_modes, D, nu, kappa, chi, tau,
                               bquad_order=64, q2_builder=None, tol=1e-9):
    """Rotate a degenerate eigenvalue group so Q1 (and Q2 if needed) is diagonal.

    Q1 = Lambda1 G1 + Lambda2 G2 with the two real boundary Gram matrices,
    so a real rotation jointly diagonalizing (G1, G2) diagonalizes Q1.  When
    Q1 eigenvalues still collide, Q2 is built on the colliding block (by
    running round 2 for each rotated mode) and diagonalized there; any
    remaining freedom is resolved by the zero convention.
    """
    from .domain import tangential_gradient
    from .viscous import damping_lambdas
    g = len(group_modes)
    if g < 2:
        return MultiplicityResult(list(group_modes), np.eye(g),
                                  np.zeros((g, g), complex), [])
    lam0 = group_modes[0].lambda0
    bq = boundary_quadrature(domain, bquad_order)
    G1 = np.zeros((g, g))
    G2 = np.zeros((g, g))
    for bp, w in bq:
        gr = [tangential_gradient(None, m.gradient, bp) for m in group_modes]
        va = [float(m.value(bp.position)) for m in group_modes]
        for i in range(g):
            for j in range(g):
                G1[i, j] += w * float(gr[i] @ gr[j])
                G2[i, j] += w * va[i] * va[j]
    G2 *= 2.0 / (D + 2.0) * lam0 ** 2
    R = _joint_diagonalize([G1, G2], tol)
    l1, l2, _, _ = damping_lambdas(lam0, nu, kappa, chi, D, tau)
    Q1 = l1 * (R.T @ G1 @ R) + l2 * (R.T @ G2 @ R)
    rotated = [CompositeMode(group_modes, R[:, j]) for j in range(g)]

    diag = np.diag(Q1)
    scale = max(1.0, np.max(np.abs(diag)))
    pairs = [idx for idx in _group_indices(diag.real, tol * scale)
             if len(idx) > 1]
    result = MultiplicityResult(rotated, R, Q1, pairs)
    if pairs and q2_builder is not None:
        Q2 = q2_builder(rotated)
        off = 0.0
        for idx in pairs:
            blk = Q2[np.ix_(idx, idx)]
            offb = blk - np.diag(np.diag(blk))
            off = max(off, float(np.max(np.abs(offb))))
            # refine the rotation inside the block if Q2 is not yet diagonal
            if off > tol * max(1.0, np.max(np.abs(blk))):
                Rb = _joint_diagonalize([blk.real, blk.imag], tol)
                for col, jj in enumerate(idx):
                    result.rotation[:, jj] = result.rotation[:, idx] @ Rb[:, col]
        result.Q2 = Q2
        result.Q2_offdiag = off
    return result


# ---------------------------------------------------------------------------
# public build API

def default_setup(domain, D=2, collision=None, Q=12, basis_size=None,
                  bquad_order=64):
    """(basis, wall model) with sensible defaults per domain kind."""
    from .spectrum import compute_modes
    from .collision import make_velocity_grid
    if basis_size is None:
        basis_size = 160 if domain.kind == "slab" else 24
    modes = compute_modes(domain, basis_size, D=D)
    basis = ModeBasis(domain, D, modes, bquad_order=bquad_order)
    grid = make_velocity_grid(D, Q, family="wall")
    collision = collision or {"kind": "bgk", "a0": 1.0}
    model = make_collision_model(grid, **collision)
    return basis, model


def build_rounds(domain, D=2, k=1, tau=+1, chi=1.0, N=2, collision=None,
                 Q=12, basis=None, model=None, basis_size=None, **kw):
    """Assemble the N<=2 approximate eigenpair for mode slot k.

    Returns an ApproxEigenpair whose ``rounds`` attribute carries the layer
    profiles and Knudsen solutions for evaluation and residual studies.
    """
    if N not in (0, 1, 2):
        raise ValueError("N must be 0, 1 or 2")
    if basis is None or model is None:
        basis, model = default_setup(domain, D, collision, Q, basis_size)
    asm = ModeAssembly(basis, model, k, tau, chi, N=N, **kw)
    return ApproxEigenpair(
        domain=domain, D=D, k=k, tau=tau, chi=chi, N=N,
        lam0=asm.lam0, il1=asm.il1, il2=asm.il2, basis=basis, mode=asm.mode,
        U0=asm.U0, U1=asm.U1, U2=asm.U2, nu=asm.nu, kappa=asm.kappa,
        rounds=asm)
