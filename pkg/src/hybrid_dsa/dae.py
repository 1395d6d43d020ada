"""Semi-explicit index-1 DAE evaluation and integration.

The continuous dynamics of every mode are written as::

    dy/dt = phi(y, z, u)
        0 = psi(y, z, u)

with ``dpsi/dz`` nonsingular. Integration uses the implicit trapezoidal rule
on a fixed grid, with a Newton iteration on the coupled ``(y+, z+)``
system at every step. The factored Newton matrix is carried from step to
step and refreshed whenever the iteration stops contracting fast.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

_geequ = scipy.linalg.lapack.get_lapack_funcs("geequ", dtype=np.float64)


class DaeError(Exception):
    """Base class for DAE solver failures."""


class DimensionMismatch(DaeError, ValueError):
    pass


class NewtonDivergence(DaeError):
    pass


class SingularJacobian(DaeError):
    pass


class SemiExplicitDae:
    """Continuous-dynamics contract consumed by the integrator.

    Subclasses implement :meth:`phi` and :meth:`psi`. Analytic Jacobians are
    optional; without them :meth:`jacobian` falls back to central
    differences. Models that can share work between the residual and the
    Jacobian override :meth:`evaluate`.
    """

    n_y: int = 0
    n_z: int = 0

    def phi(self, y, z, u):
        raise NotImplementedError

    def psi(self, y, z, u):
        raise NotImplementedError

    def jacobian(self, y, z, u):
        """Return ``(phi_y, phi_z, psi_y, psi_z)``."""
        return finite_diff_jacobian(self, y, z, u)

    def evaluate(self, y, z, u, need_jacobian=True):
        """Return ``(phi, psi, jac)``; ``jac`` is None unless requested."""
        jac = self.jacobian(y, z, u) if need_jacobian else None
        return self.phi(y, z, u), self.psi(y, z, u), jac

    def stacked(self, y, z, u):
        """Return ``concat(phi, psi)`` as a fresh array."""
        return np.concatenate([self.phi(y, z, u), self.psi(y, z, u)])


class FunctionDae(SemiExplicitDae):
    """A DAE assembled from plain callables, mostly for tests and toy models."""

    def __init__(self, n_y, n_z, phi, psi, jac=None):
        self.n_y = n_y
        self.n_z = n_z
        self._phi = phi
        self._psi = psi
        self._jac = jac

    def phi(self, y, z, u):
        return np.asarray(self._phi(y, z, u), dtype=float).reshape(self.n_y)

    def psi(self, y, z, u):
        return np.asarray(self._psi(y, z, u), dtype=float).reshape(self.n_z)

    def jacobian(self, y, z, u):
        if self._jac is None:
            return finite_diff_jacobian(self, y, z, u)
        fy, fz, gy, gz = self._jac(y, z, u)
        return (
            np.asarray(fy, dtype=float).reshape(self.n_y, self.n_y),
            np.asarray(fz, dtype=float).reshape(self.n_y, self.n_z),
            np.asarray(gy, dtype=float).reshape(self.n_z, self.n_y),
            np.asarray(gz, dtype=float).reshape(self.n_z, self.n_z),
        )


@dataclass(frozen=True)
class SolverConfig:
    h: float = 0.01
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    algebraic_tol: float = 1e-8

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not (self.newton_tol > 0 and self.algebraic_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")


@dataclass(frozen=True)
class DaeState:
    y: np.ndarray
    z: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class TrajectorySegment:
    """States on a uniform grid with a constant input.

    ``y`` and ``z`` hold one row per grid point.
    """

    times: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: float
    index_checks: list = field(default_factory=list, compare=False)

    def __len__(self):
        return len(self.times)

    def state(self, k):
        return DaeState(self.y[k].copy(), self.z[k].copy(), float(self.times[k]))

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    @property
    def last(self):
        return self.state(len(self) - 1)

    @property
    def x(self):
        """Stacked ``(y, z)`` rows, the hybrid-state layout."""
        return np.hstack([self.y, self.z])


def _check_dims(model, y, z):
    if y.shape != (model.n_y,) or z.shape != (model.n_z,):
        raise DimensionMismatch(
            f"expected y{(model.n_y,)} z{(model.n_z,)}, got y{y.shape} z{z.shape}"
        )


def residual(model, y, ydot, z, u):
    """Return ``(ydot - phi, psi)`` at a point."""
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    ydot = np.asarray(ydot, dtype=float).reshape(-1)
    _check_dims(model, y, z)
    if ydot.shape != y.shape:
        raise DimensionMismatch(f"ydot has shape {ydot.shape}, expected {y.shape}")
    return ydot - model.phi(y, z, u), model.psi(y, z, u)


def index1_check(model, y, z, u, equilibrate=True):
    """LU-based test that ``dpsi/dz`` is nonsingular.

    By default rows and columns are equilibrated first (LAPACK ``dgeequ``),
    so a variable or equation that is merely small in its own units, such as
    the phase of a bus held near zero voltage, does not read as a rank loss.
    With ``equilibrate=False`` pivots are compared against
    ``1e-12 * ||dpsi/dz||_inf`` of the raw matrix. Returns a dict with
    ``nonsingular`` and the 1-norm ``condition_estimate`` of the matrix that
    was factored (``inf`` when singular).
    """
    gz = model.jacobian(np.asarray(y, float), np.asarray(z, float), u)[3]
    if gz.size == 0:
        return {"nonsingular": True, "condition_estimate": 1.0}
    singular = {"nonsingular": False, "condition_estimate": math.inf}
    if not np.all(np.isfinite(gz)):
        return singular
    if equilibrate:
        r, c, _, _, _, info = _geequ(gz)
        if info != 0:  # an exactly zero row or column
            return singular
        a = gz * r[:, None] * c[None, :]
        floor = 1e-12
    else:
        a = gz
        floor = 1e-12 * np.linalg.norm(gz, np.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if floor == 0.0 or pivots.min() <= floor:
        return singular
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(a.shape[0]), check_finite=False)
    cond = np.linalg.norm(a, 1) * np.linalg.norm(inv, 1)
    return {"nonsingular": True, "condition_estimate": float(cond)}


def _lu_solve(jac, rhs):
    try:
        lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularJacobian(str(exc)) from exc
    diag = np.abs(np.diag(lu))
    if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * max(diag.max(), 1.0):
        raise SingularJacobian("Newton matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def solve_algebraic(model, y, z_guess, u, cfg):
    """Solve ``psi(y, z, u) = 0`` for ``z`` by damped Newton.

    The step is halved (at most 10 times) whenever the residual norm fails to
    decrease.
    """
    z, _ = _solve_algebraic(model, y, z_guess, u, cfg)
    return z


def _solve_algebraic(model, y, z_guess, u, cfg):
    y = np.asarray(y, dtype=float)
    z = np.array(z_guess, dtype=float)
    _check_dims(model, y, z)
    if model.n_z == 0:
        return z, 0
    g = model.psi(y, z, u)
    norm = np.max(np.abs(g))
    for it in range(cfg.newton_max_iter + 1):
        if norm <= cfg.algebraic_tol:
            return z, it
        if it == cfg.newton_max_iter:
            break
        gz = model.jacobian(y, z, u)[3]
        dz = _lu_solve(gz, -g)
        step = 1.0
        for _ in range(11):
            z_try = z + step * dz
            g_try = model.psi(y, z_try, u)
            norm_try = np.max(np.abs(g_try))
            if np.isfinite(norm_try) and norm_try < norm:
                break
            step *= 0.5
        else:
            raise NewtonDivergence(
                f"algebraic Newton stalled at |psi|={norm:.3e} after {it + 1} iterations"
            )
        z, g, norm = z_try, g_try, norm_try
    raise NewtonDivergence(
        f"algebraic Newton did not reach {cfg.algebraic_tol:g} in "
        f"{cfg.newton_max_iter} iterations (|psi|={norm:.3e})"
    )


def restore_consistency(dae, x, u, cfg, fallback_z=None):
    """Keep the differential part of ``x`` and re-solve the algebraic part.

    Newton is seeded with the algebraic part of ``x``; if that fails and
    ``fallback_z`` is given, it is retried from there.
    """
    y, z = x[: dae.n_y], x[dae.n_y:]
    try:
        z_new = solve_algebraic(dae, y, z, u, cfg)
    except DaeError:
        if fallback_z is None:
            raise
        z_new = solve_algebraic(dae, y, np.asarray(fallback_z, dtype=float), u, cfg)
    return np.concatenate([y, z_new])


class NewtonMatrix:
    """Factored Newton matrix of the trapezoidal step, reusable across steps.

    ``simulate`` keeps one per segment: the matrix is rebuilt only when the
    step size changes or the residual stops contracting quickly. Each call
    of :func:`step_trapezoidal` without one starts from a fresh matrix.
    """

    __slots__ = ("h", "factor", "refreshes", "iterations", "z_rate", "phi_prev")

    def __init__(self):
        self.h = None
        self.factor = None
        self.refreshes = 0
        self.iterations = 0
        # previous-step slopes, for the predictor
        self.z_rate = None
        self.phi_prev = None

    def refresh(self, jac, h, ny):
        fy, fz, gy, gz = jac
        n = ny + gz.shape[0]
        J = np.empty((n, n))
        half = 0.5 * h
        J[:ny, :ny] = -half * fy
        J[:ny, :ny].flat[:: ny + 1] += 1.0
        J[:ny, ny:] = -half * fz
        J[ny:, :ny] = gy
        J[ny:, ny:] = gz
        lu, piv, info = _getrf(J, overwrite_a=True)
        diag = np.abs(np.diag(lu))
        if info < 0 or not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SingularJacobian("Newton matrix is numerically singular")
        self.factor = (lu, piv)
        self.h = h
        self.refreshes += 1

    def solve(self, rhs):
        return _getrs(self.factor[0], self.factor[1], rhs)[0]


_getrf, _getrs = scipy.linalg.lapack.get_lapack_funcs(("getrf", "getrs"), dtype=np.float64)

# a reused matrix must cut the residual at least this much per iteration
_CONTRACTION = 0.01


def step_trapezoidal(model, state, u, h, cfg, _phi0=None, newton=None):
    """Advance one implicit trapezoidal step of length ``h``.

    Solves ``y+ - y - h/2 (phi(y, z) + phi(y+, z+)) = 0, psi(y+, z+) = 0``
    by Newton on ``(y+, z+)``. Returns the new state and ``phi`` there.
    """
    y0 = state.y
    z0 = state.z
    ny = model.n_y
    phi0 = model.phi(y0, z0, u) if _phi0 is None else _phi0
    half = 0.5 * h
    base = y0 + half * phi0
    if newton is None:
        newton = NewtonMatrix()
    stale = newton.factor is None or abs(newton.h - h) > 1e-9 * h
    if newton.phi_prev is None:
        y = y0 + h * phi0
        z = z0.copy()
    else:
        y = y0 + h * (1.5 * phi0 - 0.5 * newton.phi_prev)
        z = z0 + h * newton.z_rate
    prev = math.inf
    for it in range(cfg.newton_max_iter + 1):
        F = model.stacked(y, z, u)
        phi = F[:ny].copy()
        F[:ny] = y - half * phi - base
        norm = np.abs(F).max() if F.size else 0.0
        if not np.isfinite(norm):
            raise NewtonDivergence(f"non-finite residual at t={state.t + h:.6g}")
        if norm <= cfg.newton_tol:
            newton.z_rate = (z - z0) / h
            newton.phi_prev = phi0
            return DaeState(y, z, state.t + h), phi
        if it == cfg.newton_max_iter:
            break
        newton.iterations += 1
        if stale or norm > _CONTRACTION * prev:
            newton.refresh(model.jacobian(y, z, u), h, ny)
            stale = False
        prev = norm
        d = newton.solve(-F)
        y = y + d[:ny]
        z = z + d[ny:]
    raise NewtonDivergence(
        f"trapezoidal Newton failed at t={state.t + h:.6g} (|F|={norm:.3e})"
    )


def grid(t0, duration, h):
    """Uniform grid from ``t0`` to ``t0 + duration``; the last step may be short."""
    n = max(1, math.ceil(duration / h - 1e-9))
    times = t0 + h * np.arange(n + 1, dtype=float)
    times[-1] = t0 + duration
    return times


def simulate(model, state0, u, duration, cfg, check_index=False):
    """Integrate from ``state0`` for ``duration`` seconds with constant ``u``.

    Errors from a step are re-raised with the failing time attached as
    ``exc.t``. With ``check_index`` every grid point is passed through
    :func:`index1_check` and the results are kept on the segment.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    times = grid(state0.t, duration, cfg.h)
    n = len(times)
    Y = np.empty((n, model.n_y))
    Z = np.empty((n, model.n_z))
    Y[0] = state0.y
    Z[0] = state0.z
    checks = []
    if check_index:
        checks.append(index1_check(model, state0.y, state0.z, u))
    state = DaeState(np.array(state0.y, float), np.array(state0.z, float), times[0])
    phi = None
    newton = NewtonMatrix()
    for k in range(1, n):
        try:
            state, phi = step_trapezoidal(
                model, state, u, times[k] - times[k - 1], cfg, phi, newton
            )
        except DaeError as exc:
            exc.t = float(times[k])
            raise
        # pin the clock to the grid so replays are bitwise identical
        state = DaeState(state.y, state.z, float(times[k]))
        Y[k] = state.y
        Z[k] = state.z
        if check_index:
            checks.append(index1_check(model, state.y, state.z, u))
    return TrajectorySegment(times, Y, Z, u, checks)


def finite_diff_jacobian(model, y, z, u, eps=1e-6):
    """Central-difference Jacobian blocks ``(phi_y, phi_z, psi_y, psi_z)``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    ny, nz = len(y), len(z)
    fy = np.zeros((ny, ny))
    fz = np.zeros((ny, nz))
    gy = np.zeros((nz, ny))
    gz = np.zeros((nz, nz))
    for j in range(ny):
        dp = y.copy()
        dm = y.copy()
        dp[j] += eps
        dm[j] -= eps
        fy[:, j] = (model.phi(dp, z, u) - model.phi(dm, z, u)) / (2 * eps)
        gy[:, j] = (model.psi(dp, z, u) - model.psi(dm, z, u)) / (2 * eps)
    for j in range(nz):
        dp = z.copy()
        dm = z.copy()
        dp[j] += eps
        dm[j] -= eps
        fz[:, j] = (model.phi(y, dp, u) - model.phi(y, dm, u)) / (2 * eps)
        gz[:, j] = (model.psi(y, dp, u) - model.psi(y, dm, u)) / (2 * eps)
    return fy, fz, gy, gz
