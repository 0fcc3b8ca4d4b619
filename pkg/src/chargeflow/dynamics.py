"""Root-dynamics right-hand sides and the adaptive integrator.

All flows evolve labeled complex positions grouped by species.  The
integrator is an embedded Dormand-Prince 5(4) pair with step control,
fourth-order dense output on a fixed sample grid, collision detection
with event localization, and per-sample monitors (bilinear consistency
residual, minimum separation, conserved traces).

The holomorphic equations are integrated exactly as written: velocities,
not conjugated velocities, appear on the left-hand side.  Off the real
line the trajectories therefore do not describe physical vortex motion,
although fixed points and real-line dynamics coincide with the physical
system's.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import Collision, NonConvergence, SymmetryViolation, ValidationError
from .operators import ChargeConfiguration, Species, SystemCoefficients
from .polynomials import Polynomial, from_roots

__all__ = [
    "FlowKind",
    "FlowSpec",
    "Trajectory",
    "rhs",
    "integrate",
    "bilinear_residual",
    "symmetric_reduce",
    "reduced_velocity_residual",
    "phi_identity_i1",
    "phi_identity_i2",
]


class FlowKind(enum.Enum):
    LINEAR = "linear"
    BILINEAR = "bilinear"
    POLYLINEAR = "polylinear"
    RATIONAL_OMEGA = "rational_omega"
    ANGULAR = "angular"


@dataclass(frozen=True)
class FlowSpec:
    """Which evolution to integrate, its coefficients, and species sizes."""

    kind: FlowKind
    sys: Optional[SystemCoefficients]
    sizes: Tuple[int, ...]

    @staticmethod
    def linear(sys: SystemCoefficients, n: int):
        return FlowSpec(FlowKind.LINEAR, sys, (n,))

    @staticmethod
    def bilinear(sys: SystemCoefficients, n: int, m: int):
        return FlowSpec(FlowKind.BILINEAR, sys, (n, m))

    @staticmethod
    def polylinear(sys: SystemCoefficients, sizes: Sequence[int]):
        return FlowSpec(FlowKind.POLYLINEAR, sys, tuple(sizes))

    @staticmethod
    def rational_omega(omega: float, Lambda: float, n: int, m: int):
        sys = SystemCoefficients.rational_omega(omega, Lambda)
        return FlowSpec(FlowKind.RATIONAL_OMEGA, sys, (n, m))

    @staticmethod
    def angular(n: int, m: int):
        return FlowSpec(FlowKind.ANGULAR, None, (n, m))

    @property
    def charges(self):
        if self.kind is FlowKind.LINEAR:
            return (1.0,)
        if self.kind is FlowKind.ANGULAR:
            return (1.0, -1.0)
        return tuple(complex(q).real if not hasattr(q, "to_complex") else q.to_complex().real for q in self.sys.charges)


@dataclass
class Trajectory:
    """Sampled solution: strictly increasing times, one configuration and
    one monitor map per sample."""

    times: np.ndarray
    states: List[ChargeConfiguration]
    monitors: List[dict] = field(default_factory=list)
    flow: Optional[FlowSpec] = None

    def positions_array(self):
        """(n_samples, n_particles) complex array, species concatenated."""
        return np.array([s.all_positions() for s in self.states])

    def monitor(self, key):
        return np.array([m.get(key) for m in self.monitors], dtype=float)


# -- right-hand sides ----------------------------------------------------------


def _flatten(config: ChargeConfiguration):
    return np.array(config.all_positions(), dtype=complex)


def _unflatten(z: np.ndarray, flow: FlowSpec, t: float) -> ChargeConfiguration:
    species = []
    at = 0
    for q, size in zip(flow.charges, flow.sizes):
        species.append(Species(q, tuple(z[at : at + size])))
        at += size
    return ChargeConfiguration(tuple(species), time=t)


def _pair_sums(z: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_j weights[j] / (z_i - z_j) over j != i."""
    diff = z[:, None] - z[None, :]
    np.fill_diagonal(diff, 1.0)
    inv = 1.0 / diff
    np.fill_diagonal(inv, 0.0)
    return inv @ weights


def rhs_flat(flow: FlowSpec, z: np.ndarray) -> np.ndarray:
    """Velocities for the flattened position vector."""
    kind = flow.kind
    if kind is FlowKind.ANGULAR:
        n, m = flow.sizes
        phi, theta = z[:n], z[n:]
        out = np.empty_like(z)
        for i in range(n):
            acc = 0j
            for j in range(n):
                if j != i:
                    acc -= 2.0 / np.tan(phi[i] - phi[j])
            for j in range(m):
                acc += 2.0 / np.tan(phi[i] - theta[j])
            out[i] = acc
        for i in range(m):
            acc = 0j
            for j in range(m):
                if j != i:
                    acc += 2.0 / np.tan(theta[i] - theta[j])
            for j in range(n):
                acc -= 2.0 / np.tan(theta[i] - phi[j])
            out[n + i] = acc
        return out

    sys = flow.sys
    P = sys.P.to_float() if sys.P.exact else sys.P
    U = sys.U.to_float() if sys.U.exact else sys.U
    dP = P.derivative()
    Pz = np.array([P(v) for v in z])
    Uz = np.array([U(v) for v in z])
    dPz = np.array([dP(v) for v in z])

    if kind is FlowKind.LINEAR:
        s = _pair_sums(z, np.ones(len(z)))
        return -2.0 * Pz * s - Uz

    charges = np.concatenate(
        [np.full(size, q) for q, size in zip(flow.charges, flow.sizes)]
    ).astype(complex)
    weighted = _pair_sums(z, charges)
    vel = -2.0 * Pz * weighted - Uz - 0.5 * charges * dPz
    if kind is FlowKind.RATIONAL_OMEGA:
        return vel  # P = i, U = i*omega*z already encode the factor i
    return vel


def rhs(flow: FlowSpec, state: ChargeConfiguration):
    """Velocities per species for a configuration (list of complex)."""
    z = _flatten(state)
    return list(rhs_flat(flow, z))


# -- separation measure ---------------------------------------------------------


def _min_separation(flow: FlowSpec, z: np.ndarray) -> float:
    n = len(z)
    if n < 2:
        return math.inf
    best = math.inf
    if flow.kind is FlowKind.ANGULAR:
        for i in range(n):
            for j in range(i + 1, n):
                best = min(best, abs(math.sin((z[i] - z[j]).real)))
        return best
    for i in range(n):
        for j in range(i + 1, n):
            best = min(best, abs(z[i] - z[j]))
    return best


# -- Dormand-Prince 5(4) ----------------------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# 4th-order dense-output weights of the 5(4) pair: quartic Hermite-Birkhoff
# interpolant built from the seven stages, continuous with O(h^5) error.
_DP_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_MAX_STEPS = 10_000_000
_COLLISION_REL = 1e-7  # delta = 1e-7 * configuration scale


class _StepInterpolant:
    """Dense output over one accepted step."""

    __slots__ = ("t0", "h", "y0", "Q")

    def __init__(self, t0, h, y0, K):
        self.t0 = t0
        self.h = h
        self.y0 = y0
        self.Q = K.T @ _DP_P  # (n_dim, 4)

    def __call__(self, t):
        s = (t - self.t0) / self.h
        sv = np.array([s, s * s, s**3, s**4])
        return self.y0 + self.h * (self.Q @ sv)


def integrate(
    flow: FlowSpec,
    init: ChargeConfiguration,
    t_end: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    n_samples: int = 257,
    collision_delta: Optional[float] = None,
    max_step: Optional[float] = None,
    fixed_step: Optional[float] = None,
    monitors: bool = True,
) -> Trajectory:
    """Integrate a flow and sample it on a uniform output grid.

    Local error per step is held below ``rtol * |y| + atol`` component-wise
    (weighted rms).  ``fixed_step`` disables adaptivity (used by the
    convergence-order tests).  Collisions raise ``Collision`` with the event
    time localized to 1e-3 of the step by bisection on the interpolant;
    a step size underflow (below 1e-13 * t_end) or exceeding the step cap
    raises ``NonConvergence``.
    """
    z = _flatten(init)
    if t_end < 0:
        raise ValidationError("t_end must be >= 0")
    delta = collision_delta
    if delta is None:
        scale = max(1.0, float(np.max(np.abs(z))) if len(z) else 1.0)
        delta = _COLLISION_REL * scale
    if _min_separation(flow, z) <= delta:
        raise Collision("initial configuration violates separation", time=0.0)

    t_grid = np.linspace(0.0, t_end, max(2, n_samples)) if t_end > 0 else np.array([0.0])
    samples = [z.copy()]
    if t_end == 0:
        traj = Trajectory(np.array([0.0]), [_unflatten(z, flow, 0.0)], [], flow)
        if monitors:
            traj.monitors = [_sample_monitors(flow, traj.states[0])]
        return traj

    t = 0.0
    f = rhs_flat(flow, z)
    h = fixed_step if fixed_step else min(1e-3, t_end / 10)
    if max_step is None:
        max_step = t_end
    next_idx = 1
    steps = 0
    k = np.empty((7, len(z)), dtype=complex)

    while t < t_end:
        if steps > _MAX_STEPS:
            raise NonConvergence("step cap exceeded")
        if not fixed_step and h < 1e-13 * t_end:
            sep = _min_separation(flow, z)
            if sep <= 1e-3 * max(1.0, float(np.max(np.abs(z))) if len(z) else 1.0):
                # the underflow is driven by an imminent coincidence
                raise Collision(
                    f"charges approaching coincidence (separation {sep:.3g}) "
                    f"stalled the stepper at t={t:.6g}",
                    time=t,
                )
            raise NonConvergence("step size underflow")
        h = min(h, t_end - t, max_step)
        k[0] = f
        for stage in range(1, 7):
            acc = np.zeros_like(z)
            for j, a in enumerate(_DP_A[stage]):
                if a:
                    acc += a * k[j]
            k[stage] = rhs_flat(flow, z + h * acc)
        y1 = z + h * (_DP_B5 @ k)
        err_vec = h * (_DP_E @ k)
        sc = atol + rtol * np.maximum(np.abs(z), np.abs(y1))
        err = float(np.sqrt(np.mean(np.abs(err_vec / sc) ** 2))) if len(z) else 0.0

        if fixed_step or err <= 1.0:
            t1 = t + h
            f1 = k[6]  # FSAL: last stage is the rhs at (t1, y1)
            interp = _StepInterpolant(t, h, z.copy(), k.copy())
            sep = _min_separation(flow, y1)
            if sep <= delta:
                t_ev = _localize_collision(flow, interp, t, t1, delta)
                raise Collision(
                    f"charges within {delta:g} at t={t_ev:.6g}", time=t_ev
                )
            while next_idx < len(t_grid) and t_grid[next_idx] <= t1 + 1e-15 * t_end:
                ts = t_grid[next_idx]
                if abs(ts - t1) < 1e-15 * max(1.0, t_end):
                    samples.append(y1.copy())
                else:
                    samples.append(interp(ts))
                next_idx += 1
            z, t, f = y1, t1, f1
        if not fixed_step:
            factor = 0.9 * err ** (-0.2) if err > 0 else 5.0
            h *= min(5.0, max(0.2, factor))
        steps += 1

    while next_idx < len(t_grid):  # numerical tail guard
        samples.append(z.copy())
        next_idx += 1

    states = [_unflatten(s, flow, ts) for s, ts in zip(samples, t_grid)]
    traj = Trajectory(t_grid, states, [], flow)
    if monitors:
        traj.monitors = [_sample_monitors(flow, st) for st in states]
    return traj


def _localize_collision(flow, interp, t0, t1, delta):
    """Bisect the step interpolant for the first sub-delta separation."""
    lo, hi = t0, t1
    target = 1e-3 * (t1 - t0)
    while hi - lo > target:
        mid = 0.5 * (lo + hi)
        if _min_separation(flow, interp(mid)) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


# -- monitors -------------------------------------------------------------------


def _sample_monitors(flow: FlowSpec, state: ChargeConfiguration) -> dict:
    from . import conserved as _conserved  # local import to avoid a cycle

    mon = {"min_separation": _min_separation(flow, _flatten(state))}
    if flow.kind in (FlowKind.BILINEAR, FlowKind.POLYLINEAR, FlowKind.RATIONAL_OMEGA):
        mon["bilinear_residual"] = state_residual(flow, state)
        charges = flow.charges
        moment = 0j
        for q, s in zip(charges, state.species):
            moment += q * sum(s.positions)
        mon["charge_moment"] = moment
    if flow.kind is FlowKind.RATIONAL_OMEGA and abs(flow.sys.Lambda - 1.0) < 1e-12:
        vals = _conserved.integrals(state, flow).values
        mon["conserved"] = vals
    if flow.kind is FlowKind.ANGULAR:
        n = flow.sizes[0]
        z = _flatten(state)
        mon["charge_moment"] = complex(np.sum(z[:n]) - np.sum(z[n:]))
    return mon


def _coeff_velocity(roots: Sequence[complex], velocities: Sequence[complex]):
    """d/dt of the monic polynomial with the given moving roots.

    dp/dt = -sum_i v_i * p / (z - root_i); each division is a synthetic
    deflation, so the result is exact in coefficients.
    """
    p = from_roots(roots)
    total = Polynomial.zero(exact=False)
    for r, v in zip(roots, velocities):
        quotient, _ = _deflate(p, r)
        total = total - quotient.scale(v)
    return p, total


def _deflate(p: Polynomial, root: complex):
    """Synthetic division of a float polynomial by (z - root)."""
    coeffs = list(p.coeffs)
    n = len(coeffs) - 1
    out = [0j] * n
    acc = coeffs[n]
    for k in range(n - 1, -1, -1):
        out[k] = acc
        acc = coeffs[k] + acc * root
    return Polynomial(out, exact=False), acc


def state_residual(flow: FlowSpec, state: ChargeConfiguration) -> float:
    """Normalized coefficient residual of the evolution identity

        sum_i Q_i (dq_i/dt) prod_{n != i} q_n = H[q_1, .., q_l]

    at one state, with the polynomials reconstructed from the roots and
    their coefficient velocities from the flow."""
    from .operators import SystemCoefficients as _SC
    from .operators import lambda_poly, polylinear_H

    sys = flow.sys
    z = _flatten(state)
    vel = rhs_flat(flow, z)
    polys, dpolys = [], []
    at = 0
    for size in flow.sizes:
        p, dp = _coeff_velocity(list(z[at : at + size]), list(vel[at : at + size]))
        polys.append(p)
        dpolys.append(dp)
        at += size
    charges = flow.charges
    sysf = _SC.polylinear(
        sys.P.to_float() if sys.P.exact else sys.P,
        sys.U.to_float() if sys.U.exact else sys.U,
        charges,
        exact=False,
    )
    lam = lambda_poly([p.degree for p in polys], sysf)
    H = polylinear_H(sysf, polys, lam=lam)
    lhs = Polynomial.zero(exact=False)
    for i, (qi, dqi) in enumerate(zip(polys, dpolys)):
        term = dqi.scale(complex(charges[i]))
        for j, qj in enumerate(polys):
            if j != i:
                term = term * qj
        lhs = lhs + term
    resid = lhs - H
    full = polys[0]
    for qj in polys[1:]:
        full = full * qj
    denom = max((abs(c) for c in full.coeffs), default=1.0)
    num = max((abs(c) for c in resid.coeffs), default=0.0)
    return num / denom


def bilinear_residual(flow: FlowSpec, traj: Trajectory, k: int) -> float:
    """Residual monitor at sample k of a trajectory."""
    return state_residual(flow, traj.states[k])


# -- symmetric reduction ----------------------------------------------------------


def symmetric_reduce(state: ChargeConfiguration, rtol: float = 1e-10):
    """Fold a negation-symmetric two-species state into squared coordinates.

    Requires n = 2l first-species positions forming +-pairs (within the
    relative tolerance) and a single second-species charge at the origin.
    Returns the l squared pair positions z_j = x_j**2.
    """
    if len(state.species) != 2:
        raise SymmetryViolation("need exactly two species")
    xs = list(state.species[0].positions)
    ys = list(state.species[1].positions)
    if len(ys) != 1 or abs(ys[0]) > rtol * max(1.0, max(abs(x) for x in xs)):
        raise SymmetryViolation("second species must be a single charge at 0")
    if len(xs) % 2:
        raise SymmetryViolation("first species size must be even")
    scale = max(abs(x) for x in xs)
    remaining = xs[:]
    pairs = []
    while remaining:
        x = remaining.pop()
        best_i, best_d = None, math.inf
        for i, y in enumerate(remaining):
            d = abs(x + y)
            if d < best_d:
                best_i, best_d = i, d
        if best_i is None or best_d > rtol * scale:
            raise SymmetryViolation(f"no negation partner for {x}")
        remaining.pop(best_i)
        pairs.append(x)
    return [x * x for x in pairs]


def reduced_velocity_residual(flow: FlowSpec, state: ChargeConfiguration) -> float:
    """Check that the squared pair coordinates obey the folded rational flow

        i dz_j/dt = 2(1 - 2 Lambda) + 8 sum_{k != j} z_j/(z_j - z_k)
                    + 2 omega z_j

    along a symmetric harmonic-trap trajectory; returns the max deviation.
    """
    if flow.kind is not FlowKind.RATIONAL_OMEGA:
        raise ValidationError("reduction applies to the harmonic-trap flow")
    Lambda = -complex(flow.charges[1]).real
    omega = flow.sys.omega
    xs = np.array(state.species[0].positions)
    n = flow.sizes[0]
    l = n // 2
    zpairs = symmetric_reduce(state)
    vel = rhs_flat(flow, _flatten(state))[:n]
    # match each reported pair coordinate back to one representative x
    worst = 0.0
    for j, zj in enumerate(zpairs):
        # representative root: the x with x^2 closest to zj
        idx = int(np.argmin(np.abs(xs * xs - zj)))
        dz_dt = 2.0 * xs[idx] * vel[idx]
        expected = 2.0 * (1.0 - 2.0 * Lambda) + 2.0 * omega * zj
        for kk, zk in enumerate(zpairs):
            if kk != j:
                expected += 8.0 * zj / (zj - zk)
        worst = max(worst, abs(1j * dz_dt - expected))
    return worst


# -- functional-identity sums -------------------------------------------------


def phi_identity_i1(xs: Sequence[float], phi: Callable[[float], float]) -> Tuple[float, float]:
    """Triple sum sum_n sum_{i != n} sum_{j != n} phi(x_n - x_i) phi(x_n - x_j)
    and the pair comparison 2 sum_{i<j} phi(x_i - x_j)^2."""
    n = len(xs)
    total = 0.0
    for c in range(n):
        acc = 0.0
        for i in range(n):
            if i != c:
                acc += phi(xs[c] - xs[i])
        inner = 0.0
        for i in range(n):
            if i != c:
                inner += phi(xs[c] - xs[i]) ** 2
        total += acc * acc  # (sum phi)^2 = sum_i sum_j phi phi including i=j
    pair = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            pair += phi(xs[i] - xs[j]) ** 2
    return total, 2.0 * pair


def phi_identity_i2(
    xs: Sequence[float], ys: Sequence[float], phi: Callable[[float], float]
) -> float:
    """The mixed two-species triple-sum combination that the pairwise
    functional equation forces to vanish."""
    N, M = len(xs), len(ys)
    t1 = 0.0
    for m in range(M):
        for i in range(N):
            for j in range(N):
                if j != i:
                    t1 += phi(xs[j] - ys[m]) * phi(xs[i] - xs[j])
    t2 = 0.0
    for m in range(N):
        for i in range(M):
            for j in range(M):
                if j != i:
                    t2 += phi(ys[j] - xs[m]) * phi(ys[i] - ys[j])
    t3 = 0.0
    for m in range(N):
        for i in range(N):
            for j in range(M):
                t3 += phi(ys[j] - xs[m]) * phi(xs[i] - ys[j])
    t4 = 0.0
    for m in range(M):
        for i in range(M):
            for j in range(N):
                t4 += phi(xs[j] - ys[m]) * phi(ys[i] - xs[j])
    return 2.0 * t1 - 2.0 * t2 + t3 - t4
