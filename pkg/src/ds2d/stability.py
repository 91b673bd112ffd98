"""Frequency-family diagnostics: the mass curve, its derivatives, and the
spectrum of the linearization about a ground state.

The stability picture rests on three computable signatures: the mass of
the ground state must increase with frequency, the energy derivative must
balance it (dE/domega = -omega dm/domega), and the linearized operator
acting on real perturbations must have exactly one negative direction
with everything else pushed off zero once the symmetry directions are
projected out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import DomainError, NumericalFailure
from .fields import ComplexField
from .grid import Grid2D
from .groundstate import (
    GroundState,
    SolverSettings,
    minimize_J,
    solve_fixed_omega,
    verify_ground_state,
)
from .spectral import (
    _fft2,
    _ifft2,
    abs2,
    ej_array,
    gradient_arrays,
    h1_norm_sq_array,
    power_abs,
)


@dataclass(frozen=True)
class CurveSample:
    omega: float
    mass: float
    energy: float
    dE_domega: float        # centered difference; nan at endpoints of short grids
    Dsecond: float          # dm/domega by the same differencing
    lambda_minus: float
    residual_l2: float
    valid: bool


@dataclass(frozen=True)
class StabilityCurve:
    p: float
    samples: tuple
    omegaJ_estimate: float
    omegaJ_bracket: tuple | None       # (lo, hi) around the mass crossing, if found
    omegaJ_is_lower_bound: bool        # True when the curve never crossed 2 dJ
    dJ: float

    def column(self, name):
        return np.array([getattr(s, name) for s in self.samples])


@dataclass(frozen=True)
class LinearizedPair:
    """Matrix-free symmetric actions of the second variation.

    l_plus acts on the real (amplitude) component of a perturbation and
    carries the full nonlocal linearization; l_minus acts on the
    imaginary (phase) component.
    """

    gs: GroundState
    eigs_plus: np.ndarray
    eigs_minus: np.ndarray
    residuals_plus: np.ndarray
    residuals_minus: np.ndarray
    vecs_plus: np.ndarray        # columns, grid-flattened, ordered with eigs
    vecs_minus: np.ndarray
    converged: bool


# ---------------------------------------------------------------------------
# linearized operator actions
# ---------------------------------------------------------------------------

def make_l_plus(gs: GroundState):
    """h -> -Lap h + omega h - p Q^(p-1) h - E1(Q^2) h - 2 E1(Q h) Q on
    real arrays, with the quartic's zero-cell constants included so the
    action is the exact second variation of the discrete energy."""
    grid, q, p, omega = gs.grid, gs.q_real(), gs.p, gs.omega
    qp = p * power_abs(q, p - 1.0)
    e1q2 = ej_array(grid, q * q) + 0.5 * float(np.mean(q * q))

    def apply(h):
        cross = ej_array(grid, q * h) + 0.5 * float(np.mean(q * h))
        return (
            np.real(_ifft2(grid.k2 * _fft2(h)))
            + omega * h
            - qp * h
            - e1q2 * h
            - 2.0 * cross * q
        )

    return apply


def make_l_minus(gs: GroundState):
    """h -> -Lap h + omega h - Q^(p-1) h - E1(Q^2) h on real arrays."""
    grid, q, p, omega = gs.grid, gs.q_real(), gs.p, gs.omega
    qp = power_abs(q, p - 1.0)
    e1q2 = ej_array(grid, q * q) + 0.5 * float(np.mean(q * q))

    def apply(h):
        return np.real(_ifft2(grid.k2 * _fft2(h))) + omega * h - qp * h - e1q2 * h

    return apply


def second_variation_quotient(gs: GroundState, v: np.ndarray) -> float:
    """<H v, v> / |v|_H1^2 for a complex perturbation v.

    The form splits over real and imaginary parts: the real part feels
    the full nonlocal linearization, the imaginary part the phase one.
    """
    a, b = np.real(v), np.imag(v)
    lp, lm = make_l_plus(gs), make_l_minus(gs)
    grid = gs.grid
    num = grid.weight * (float(np.sum(a * lp(a))) + float(np.sum(b * lm(b))))
    den = h1_norm_sq_array(grid, v)
    return num / den


def rayleigh_lambda_minus(gs: GroundState, route: str = "formula") -> float:
    """Unique eigenvalue of the simplified linearized operator along Q.

    route="formula": [(1-p) int Q^(p+1) - 2 int E1(Q^2) Q^2] / int Q^2.
    route="operator": the Rayleigh quotient of -Lap + omega - p Q^(p-1)
    - 3 E1(Q^2) applied to Q; the two agree to the solver residual.
    """
    grid, q, p = gs.grid, gs.q_real(), gs.p
    m = gs.report.mass
    if route == "formula":
        pw = float(grid.weight * np.sum(power_abs(q, p + 1.0)))
        return ((1.0 - p) * pw - 2.0 * gs.report.quartic) / m
    if route == "operator":
        e1q2 = ej_array(grid, q * q) + 0.5 * float(np.mean(q * q))
        hq = (
            np.real(_ifft2(grid.k2 * _fft2(q)))
            + gs.omega * q
            - p * power_abs(q, p - 1.0) * q
            - 3.0 * e1q2 * q
        )
        return float(grid.weight * np.sum(hq * q)) / m
    raise DomainError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# curve construction
# ---------------------------------------------------------------------------

def _centered_derivatives(x, y):
    """Nonuniform centered differences, one-sided at the ends."""
    n = len(x)
    d = np.full(n, np.nan)
    if n == 1:
        return d
    for i in range(n):
        if 0 < i < n - 1:
            h1, h2 = x[i] - x[i - 1], x[i + 1] - x[i]
            d[i] = (
                y[i + 1] * h1 / (h2 * (h1 + h2))
                - y[i - 1] * h2 / (h1 * (h1 + h2))
                + y[i] * (h2 - h1) / (h1 * h2)
            )
        elif i == 0:
            d[i] = (y[1] - y[0]) / (x[1] - x[0])
        else:
            d[i] = (y[-1] - y[-2]) / (x[-1] - x[-2])
    return d


def build_curve(p: float, omega_grid, settings: SolverSettings, dj: float | None = None,
                refine_crossing: int = 10) -> StabilityCurve:
    """Sample the frequency family and estimate the stable-window edge.

    States are continued from neighbor to neighbor along the grid. The
    window edge is the largest frequency whose state mass stays below
    2 dJ; when the sampled curve crosses that level, the crossing is
    refined by bisection, otherwise the largest sampled frequency is
    reported with a lower-bound flag.
    """
    omegas = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if np.any(omegas <= 0.0):
        raise DomainError("all frequencies must be positive")
    if np.any(np.diff(omegas) <= 0.0):
        raise DomainError("frequency grid must be strictly increasing")
    if dj is None:
        _, dj = minimize_J(settings)

    states: list[GroundState | None] = []
    base = None
    for om in omegas:
        try:
            gs = solve_fixed_omega(om, p, settings, dj, base=base)
            base = gs
            states.append(gs)
        except NumericalFailure:
            states.append(None)

    valid = [s is not None for s in states]
    om_v = np.array([s.omega for s in states if s is not None])
    m_v = np.array([s.mass for s in states if s is not None])
    e_v = np.array([s.report.energy for s in states if s is not None])
    dmdo = _centered_derivatives(om_v, m_v)
    dedo = _centered_derivatives(om_v, e_v)

    samples = []
    j = 0
    for i, s in enumerate(states):
        if s is None:
            samples.append(
                CurveSample(float(omegas[i]), np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, False)
            )
            continue
        ok = verify_ground_state(s)
        samples.append(
            CurveSample(
                omega=s.omega,
                mass=s.mass,
                energy=s.report.energy,
                dE_domega=float(dedo[j]),
                Dsecond=float(dmdo[j]),
                lambda_minus=rayleigh_lambda_minus(s),
                residual_l2=s.residual_l2,
                valid=bool(ok.positivity_ok and not ok.degenerate),
            )
        )
        j += 1

    # stable-window edge: largest frequency with mass below 2 dJ
    threshold = 2.0 * dj
    crossing = None
    good = [(s, st) for s, st in zip(samples, states) if st is not None]
    for (s0, st0), (s1, st1) in zip(good, good[1:]):
        if s0.mass < threshold <= s1.mass:
            crossing = (st0, st1)
            break
    if crossing is None:
        below = [s.omega for s, _ in good if s.mass < threshold]
        est = max(below) if below else float("nan")
        return StabilityCurve(p, tuple(samples), est, None, True, dj)

    lo, hi = crossing
    for _ in range(refine_crossing):
        mid = 0.5 * (lo.omega + hi.omega)
        base = lo if (mid - lo.omega) < (hi.omega - mid) else hi
        gs = solve_fixed_omega(mid, p, settings, dj, base=base)
        if gs.mass < threshold:
            lo = gs
        else:
            hi = gs
        if hi.omega - lo.omega <= 1e-3 * hi.omega:
            break
    return StabilityCurve(
        p, tuple(samples), 0.5 * (lo.omega + hi.omega), (lo.omega, hi.omega), False, dj
    )


# ---------------------------------------------------------------------------
# spectrum of the linearization
# ---------------------------------------------------------------------------

def _lobpcg_lowest(grid: Grid2D, apply_op, k, seed_fields, rng, tol, maxiter):
    n = grid.nx * grid.ny

    def matvec(x):
        return apply_op(x.reshape(grid.shape)).ravel()

    pre = 1.0 / (1.0 + grid.k2)

    def pre_vec(x):
        return np.real(_ifft2(pre * _fft2(x.reshape(grid.shape)))).ravel()

    a_op = LinearOperator((n, n), matvec=matvec, dtype=float)
    m_op = LinearOperator((n, n), matvec=pre_vec, dtype=float)
    x0 = np.empty((n, k))
    for i in range(k):
        if i < len(seed_fields):
            x0[:, i] = seed_fields[i].ravel()
        else:
            x0[:, i] = pre_vec(rng.standard_normal(n))
    x0, _ = np.linalg.qr(x0)
    with np.errstate(all="ignore"):
        vals, vecs = lobpcg(a_op, x0, M=m_op, largest=False, tol=tol, maxiter=maxiter)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = np.array(
        [np.linalg.norm(matvec(vecs[:, i]) - vals[i] * vecs[:, i]) for i in range(k)]
    )
    return vals, vecs, res


def linearized_spectrum(gs: GroundState, k: int = 6, tol: float = 1e-8,
                        maxiter: int = 2000, seed: int = 7) -> LinearizedPair:
    """Lowest eigenvalues of both linearized actions by preconditioned
    block iteration. Non-convergence yields partial results with their
    residuals rather than an error."""
    if k > 8:
        raise DomainError("at most 8 eigenpairs are supported")
    grid = gs.grid
    q = gs.q_real()
    gx, gy = gradient_arrays(grid, q)
    rng = np.random.default_rng(seed)
    lp, lm = make_l_plus(gs), make_l_minus(gs)
    norm = lambda f: np.linalg.norm(f)
    seeds_p = [q / norm(q), np.real(gx) / norm(np.real(gx)), np.real(gy) / norm(np.real(gy))]
    vals_p, vecs_p, res_p = _lobpcg_lowest(grid, lp, k, seeds_p, rng, tol, maxiter)
    vals_m, vecs_m, res_m = _lobpcg_lowest(grid, lm, k, [q / norm(q)], rng, tol, maxiter)
    scale_p = max(abs(vals_p).max(), 1.0)
    converged = bool(res_p.max() <= 100 * tol * scale_p and res_m.max() <= 100 * tol * scale_p)
    return LinearizedPair(
        gs=gs,
        eigs_plus=vals_p,
        eigs_minus=vals_m,
        residuals_plus=res_p,
        residuals_minus=res_m,
        vecs_plus=vecs_p,
        vecs_minus=vecs_m,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# coercivity probe
# ---------------------------------------------------------------------------

def random_smooth_field(grid: Grid2D, rng, corr_scale: float = 2.0) -> np.ndarray:
    """Complex field with a Gaussian spectral envelope at the given
    correlation scale, also localized by a box-scale window so probes
    live where the profiles do."""
    kc = 2.0 * np.pi / corr_scale
    env = np.exp(-grid.k2 / (2.0 * kc * kc))
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    f = _ifft2(env * _fft2(noise))
    r = grid.radius()
    window = np.exp(-((r / (0.3 * min(grid.lx, grid.ly))) ** 2))
    return f * window


def coercivity_probe(gs: GroundState, samples: int = 200, seed: int = 11,
                     corr_scale: float = 2.0) -> float:
    """Minimum second-variation Rayleigh quotient over random smooth
    fields with the four symmetry directions projected out.

    The projected directions are Q and iQ (phase pair) and the two
    translation modes, all in the real L2 pairing.
    """
    grid = gs.grid
    q = gs.q_real()
    gx, gy = gradient_arrays(grid, q)
    dirs = [q.astype(complex), 1j * q, np.real(gx).astype(complex), np.real(gy).astype(complex)]
    # the four are mutually orthogonal in the real pairing; just normalize
    dirs = [d / np.sqrt(grid.weight * np.sum(abs2(d))) for d in dirs]
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(samples):
        v = random_smooth_field(grid, rng, corr_scale)
        for d in dirs:
            v = v - grid.weight * float(np.sum((v * np.conj(d)).real)) * d
        nrm = grid.weight * np.sum(abs2(v))
        if nrm < 1e-300:
            continue
        worst = min(worst, second_variation_quotient(gs, v))
    return float(worst)
