"""The sqrt(eps)-thick viscous boundary layer.

Profiles are finite sums c * zeta^p * exp(-r zeta) with Re r > 0.  Round-0
profiles solve (diff * d^2/dzeta^2 - i tau lambda0) f = 0 with a Robin
condition at zeta = 0; the induced normal flux and the damping coefficient
i lambda1 follow by integrating the profiles from zeta to infinity.

The authoritative damping computation integrates these profiles; the closed
form (Lambda1, Lambda2 below) is algebraically equal and kept as the
cross-check route.  Re(i lambda1) < 0 always; violation is a hard error.
"""

from dataclasses import dataclass

import numpy as np

from .domain import boundary_quadrature, tangential_gradient


class LayerProfile:
    """f(zeta) = sum_i c_i zeta^{p_i} exp(-r_i zeta), every Re r_i > 0."""

    def __init__(self, terms=()):
        self.terms = []
        for c, r, p in terms:
            self._push(complex(c), complex(r), int(p))

    def _push(self, c, r, p):
        if c == 0.0:
            return
        if r.real <= 0:
            raise ValueError(f"profile rate {r} does not decay")
        for i, (ci, ri, pi) in enumerate(self.terms):
            if pi == p and abs(ri - r) < 1e-13 * max(1.0, abs(r)):
                self.terms[i] = (ci + c, ri, pi)
                return
        self.terms.append((c, r, p))

    def __add__(self, other):
        out = LayerProfile(self.terms)
        for t in other.terms:
            out._push(*t)
        return out

    def __mul__(self, a):
        return LayerProfile([(a * c, r, p) for c, r, p in self.terms])

    __rmul__ = __mul__

    def value(self, zeta):
        zeta = np.asarray(zeta, float)
        out = np.zeros(zeta.shape, complex)
        for c, r, p in self.terms:
            out += c * zeta ** p * np.exp(-r * zeta)
        return out

    def d1(self, zeta):
        return self.derivative().value(zeta)

    def d2(self, zeta):
        return self.derivative().derivative().value(zeta)

    def derivative(self):
        terms = []
        for c, r, p in self.terms:
            terms.append((-r * c, r, p))
            if p > 0:
                terms.append((p * c, r, p - 1))
        return LayerProfile(terms)

    def antiderivative_tail(self):
        """F(zeta) = integral_zeta^inf f, again a LayerProfile."""
        return LayerProfile(_tail_terms(self.terms))

    def tail_integral(self, zeta=0.0):
        return self.antiderivative_tail().value(zeta)

    def robin(self, gamma):
        """f(0) - gamma f'(0)."""
        return self.value(0.0) - gamma * self.d1(0.0)

    def scale(self):
        return max((abs(c) for c, _, _ in self.terms), default=0.0)


def _tail_terms(terms):
    out = []
    for c, r, p in terms:
        coef = c
        # int_z^inf t^p e^{-rt} dt = e^{-rz} [ z^p/r + p z^{p-1}/r^2 + p(p-1) z^{p-2}/r^3 ... ]
        fact = 1.0
        for j in range(p, -1, -1):
            out.append((c * fact / r ** (p - j + 1), r, j))
            fact *= j
    return out


def c_chi(lam0, tau, chi):
    """The Robin-root constant c_chi = -(1 + tau i) sqrt(2 lam0) / (2 chi)."""
    return -(1.0 + 1j * tau) * np.sqrt(2.0 * lam0) / (2.0 * chi)


def decay_rate(lam0, tau, diff):
    """Decaying root of diff * r^2 = i tau lam0: r = (1 + tau i) sqrt(lam0/(2 diff))."""
    return (1.0 + 1j * tau) * np.sqrt(lam0 / (2.0 * diff))


def tangential_velocity_profile(lam0, tau, nu, chi, u_int_tan):
    """Profile of u0^b . grad(pi^alpha) with Robin datum -u0^int . grad(pi^alpha).

    Solves (nu d2 - i tau lam0) f = 0, [f - (nu/chi) f'](0) = -u_int_tan.
    """
    if min(lam0, nu, chi) <= 0:
        raise ValueError("lam0, nu, chi must be positive")
    r = decay_rate(lam0, tau, nu)
    amp = u_int_tan / (c_chi(lam0, tau, chi) * np.sqrt(nu) - 1.0)
    return LayerProfile([(amp, r, 0)])


def temperature_profile(lam0, tau, kappa, chi, D, theta_int):
    """Profile of theta0^b with Robin datum -theta0^int.

    Robin coefficient (D+2)/(D+1) * kappa/chi; the amplitude denominator
    carries kappa_tilde = ((D+2)/(D+1))^2 kappa.
    """
    if min(lam0, kappa, chi) <= 0:
        raise ValueError("lam0, kappa, chi must be positive")
    r = decay_rate(lam0, tau, kappa)
    kt = ((D + 2.0) / (D + 1.0)) ** 2 * kappa
    amp = theta_int / (c_chi(lam0, tau, chi) * np.sqrt(kt) - 1.0)
    return LayerProfile([(amp, r, 0)])


def particular_profile(diff, eig, forcing, res_tol=1e-9):
    """Pure particular solution of (diff d2 - eig) f = forcing (no Robin part)."""
    partic = LayerProfile()
    resonant = False
    for c, r, p in forcing.terms:
        terms, hit = _particular_term(diff, eig, c, r, p, res_tol)
        resonant = resonant or hit
        for t in terms:
            partic._push(*t)
    return partic, resonant


def solve_layer_ode(diff, eig, gamma, datum, forcing=None, res_tol=1e-9):
    """Solve (diff d2/dzeta2 - eig) f = forcing with Robin and decay conditions.

    [f - gamma f'](0) = datum, f -> 0 at infinity.  The particular solution
    uses undetermined coefficients; a forcing rate hitting the homogeneous
    rate switches to the zeta * exp branch.  Returns (profile, resonant_flag).
    """
    r0 = np.sqrt(eig / diff)
    if r0.real < 0:
        r0 = -r0
    partic, resonant = (particular_profile(diff, eig, forcing, res_tol)
                        if forcing is not None else (LayerProfile(), False))
    ch = (datum - partic.robin(gamma)) / (1.0 + gamma * r0)
    out = partic + LayerProfile([(ch, r0, 0)])
    return out, resonant


def _particular_term(diff, eig, c, r, p, res_tol):
    """Particular solution terms for (diff d2 - eig) f = c zeta^p e^{-r zeta}."""
    disc = diff * r * r - eig
    scale = max(abs(eig), abs(diff * r * r))
    if abs(disc) <= res_tol * scale:
        # resonance: ansatz a zeta^{p+1} e^{-r zeta} plus lower corrections
        q = p + 1
        a = c / (-2.0 * diff * r * q)
        terms = [(a, r, q)]
        if q >= 2:
            # (diff d2 - eig)[a z^q e] leaves diff*a*q*(q-1) z^{q-2} e to cancel
            extra, _ = _particular_term(diff, eig, -diff * a * q * (q - 1.0),
                                        r, q - 2, res_tol)
            terms.extend(extra)
        return terms, True
    a = c / disc
    terms = [(a, r, p)]
    if p >= 1:
        # cancel the -2 diff r p a z^{p-1} + diff p(p-1) a z^{p-2} leftovers
        lower = LayerProfile([(2.0 * diff * r * p * a, r, p - 1)])
        if p >= 2:
            lower._push(-diff * p * (p - 1.0) * a, r, p - 2)
        for ct, rt, pt in lower.terms:
            extra, _ = _particular_term(diff, eig, ct, rt, pt, res_tol)
            terms.extend(extra)
    return terms, False


# ---------------------------------------------------------------------------
# induced normal flux and the damping coefficient

_PREF = lambda D: np.sqrt((D + 2.0) / (2.0 * D))


def mode_boundary_data(mode, bp, D, tau):
    """(theta0_int, u0_int tangential, div_pi of u0_int^tan) of U^{tau,k} at bp.

    The interior eigenvector has u = pref * grad(psi)/(i tau lam0) and
    theta = pref * 2/(D+2) * psi; on the boundary grad(psi) is tangential
    and div_pi(grad_pi psi) is the surface Laplacian of the trace.
    """
    pref = _PREF(D)
    lam0 = mode.lambda0
    eig = 1j * tau * lam0
    sv = mode.surface_values(bp, order=2)
    psi = sv[0]
    theta_int = pref * 2.0 / (D + 2.0) * psi
    ut_int = pref / eig * tangential_gradient(None, mode.gradient, bp)
    div_tan = pref / eig * sv[2]          # Laplace-Beltrami of the trace
    return theta_int, ut_int, div_tan


def normal_flux_Z1(domain, mode, D, nu, kappa, chi, tau):
    """Boundary field Z1^b(s) = -u1^b . n, by integrating the round-0 profiles.

    Returns a callable on BoundaryPoint.  Z1 = int_0^inf [div_pi(u0^b.grad pi)
    + i lam0 theta0^b] dzeta with the profile amplitudes of the given mode.
    """
    lam0 = mode.lambda0
    eig = 1j * tau * lam0
    kt = ((D + 2.0) / (D + 1.0)) ** 2 * kappa
    cchi = c_chi(lam0, tau, chi)
    ru = decay_rate(lam0, tau, nu)
    rt = decay_rate(lam0, tau, kappa)

    def z1(bp):
        theta_int, _, div_tan = mode_boundary_data(mode, bp, D, tau)
        div_amp = div_tan / (cchi * np.sqrt(nu) - 1.0)
        th_amp = theta_int / (cchi * np.sqrt(kt) - 1.0)
        return div_amp / ru + eig * th_amp / rt

    return z1


@dataclass
class DampingCoefficient:
    il1: complex
    lambda_1: complex          # coefficient of the tangential-gradient integral
    lambda_2: complex          # coefficient of the trace integral
    a: float
    b: float
    kappa_tilde: float
    integral_grad: float       # int |grad_pi psi|^2 dsigma
    integral_psi: float        # int (2/(D+2)) lam0^2 |psi|^2 dsigma

    @property
    def rate(self):
        return self.il1.real


def damping_lambdas(lam0, nu, kappa, chi, D, tau):
    """Closed-form (Lambda1, Lambda2, a, b) of the damping coefficient.

    Derived by integrating the round-0 profiles against psi^k and applying
    the solvability identity with its sqrt((D+2)/(2D)) boundary weight; the
    overall prefactor is (D+2)/(2D).
    """
    a = np.sqrt(2.0 * lam0 * nu) / (2.0 * chi)
    b = np.sqrt(2.0 * lam0 * kappa) / (2.0 * chi) * (D + 2.0) / (D + 1.0)
    pref = (D + 2.0) / (2.0 * D)
    l1 = -pref * np.sqrt(nu / (2.0 * lam0 ** 3)) \
        * ((2 * a + 1) + 1j * tau) / ((a + 1) ** 2 + a ** 2)
    l2 = -pref * np.sqrt(kappa / (2.0 * lam0 ** 3)) \
        * ((2 * b + 1) + 1j * tau) / ((b + 1) ** 2 + b ** 2)
    return l1, l2, a, b


def damping_coefficient(domain, mode, D, nu, kappa, chi, tau, bquad_order=64):
    """i lambda1 of the mode: closed form with its two boundary integrals.

    Raises if Re(i lambda1) >= 0 (dissipativity must hold).
    """
    if min(nu, kappa, chi) <= 0:
        raise ValueError("nu, kappa, chi must be positive")
    lam0 = mode.lambda0
    bq = boundary_quadrature(domain, bquad_order)
    J1 = 0.0
    Jpsi = 0.0
    for bp, w in bq:
        gt = tangential_gradient(None, mode.gradient, bp)
        J1 += w * float(gt @ gt)
        Jpsi += w * float(mode.value(bp.position)) ** 2
    J2 = 2.0 / (D + 2.0) * lam0 ** 2 * Jpsi
    l1, l2, a, b = damping_lambdas(lam0, nu, kappa, chi, D, tau)
    il1 = l1 * J1 + l2 * J2
    if il1.real >= 0:
        raise ArithmeticError(f"Re(i lambda1) = {il1.real} >= 0: dissipativity violated")
    kt = ((D + 2.0) / (D + 1.0)) ** 2 * kappa
    return DampingCoefficient(il1, l1, l2, a, b, kt, J1, J2)


def surface_route_damping(domain, mode, D, nu, kappa, chi, tau, bquad_order=64):
    """i lambda1 via the surface-integral route: the solvability boundary term.

    sqrt((D+2)/(2D)) * int Z1^b psi^k dsigma, with Z1^b from the implementation's
    own profiles.  Independent cross-check of damping_coefficient.
    """
    z1 = normal_flux_Z1(domain, mode, D, nu, kappa, chi, tau)
    bq = boundary_quadrature(domain, bquad_order)
    val = sum(w * z1(bp) * float(mode.value(bp.position)) for bp, w in bq)
    return _PREF(D) * val
