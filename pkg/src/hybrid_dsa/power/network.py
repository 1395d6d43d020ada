"""Bus admittance assembly and Newton-Raphson power flow."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class IslandedNetwork(Exception):
    pass


class PowerFlowDivergence(Exception):
    pass


def _check_connected(case, mode):
    idx = case.bus_index
    adj = {k: [] for k in range(len(case.buses))}
    for ln in case.lines:
        if case.line_closed(ln, mode):
            a, b = idx[ln.from_bus], idx[ln.to_bus]
            adj[a].append(b)
            adj[b].append(a)
    seen = {case.slack}
    todo = deque(seen)
    while todo:
        k = todo.popleft()
        for j in adj[k]:
            if j not in seen:
                seen.add(j)
                todo.append(j)
    missing = [case.buses[k].id for k in range(len(case.buses)) if k not in seen]
    if missing:
        raise IslandedNetwork(
            f"mode {case.modes[mode][0]!r}: buses {missing} are cut off from the slack"
        )


def build_admittance(case, mode):
    """Complex bus admittance matrix of the closed lines of ``mode``.

    Branches follow the usual pi model with an off-nominal tap on the
    ``from`` side. Fault shunts of the case are added on the diagonal.
    """
    _check_connected(case, mode)
    idx = case.bus_index
    n = len(case.buses)
    Y = np.zeros((n, n), dtype=complex)
    for ln in case.lines:
        if not case.line_closed(ln, mode):
            continue
        f, t = idx[ln.from_bus], idx[ln.to_bus]
        ys = 1.0 / complex(ln.r, ln.x)
        bc = 0.5j * ln.b
        tap = ln.tap
        Y[f, f] += (ys + bc) / (tap * tap)
        Y[t, t] += ys + bc
        Y[f, t] -= ys / tap
        Y[t, f] -= ys / tap
    for bus_id, y in case.fault_shunts:
        k = idx[bus_id]
        Y[k, k] += y
    return Y


def power_injections(Y, v, theta):
    V = v * np.exp(1j * theta)
    return V * np.conj(Y @ V)


def dS_dV(Y, V):
    """Derivatives of complex injections w.r.t. voltage angle and magnitude."""
    I = Y @ V
    Vn = V / np.abs(V)
    n = len(V)
    dS_dth = -1j * V[:, None] * np.conj(Y * V[None, :])
    dS_dth.flat[:: n + 1] += 1j * V * np.conj(I)
    dS_dvm = V[:, None] * np.conj(Y * Vn[None, :])
    dS_dvm.flat[:: n + 1] += np.conj(I) * Vn
    return dS_dth, dS_dvm


@dataclass(frozen=True)
class PowerFlowResult:
    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray  # net injection per bus (generation - load)
    q: np.ndarray
    iterations: int
    mismatch: float


def power_flow(case, mode, tol=1e-8, max_iter=20, warm_start=None):
    """Polar Newton-Raphson power flow.

    PV and slack buses hold their voltage setpoints; flat start otherwise.
    Raises PowerFlowDivergence if the mismatch does not reach ``tol``.
    """
    Y = build_admittance(case, mode)
    n = len(case.buses)
    kinds = [b.kind for b in case.buses]
    pv = [k for k in range(n) if kinds[k] == "PV"]
    pq = [k for k in range(n) if kinds[k] == "PQ"]
    pvpq = np.array(sorted(pv + pq), dtype=int)
    pq = np.array(pq, dtype=int)

    p_spec = np.array([b.p_gen - b.p_load if b.kind == "PV" else -b.p_load for b in case.buses])
    q_spec = np.array([-b.q_load for b in case.buses])
    if warm_start is None:
        v = np.array([b.v_set if b.kind != "PQ" else 1.0 for b in case.buses])
        theta = np.zeros(n)
    else:
        v, theta = (np.array(a, dtype=float) for a in warm_start)

    def mismatch(v, theta):
        S = power_injections(Y, v, theta)
        return np.concatenate([S.real[pvpq] - p_spec[pvpq], S.imag[pq] - q_spec[pq]])

    F = mismatch(v, theta)
    norm = np.max(np.abs(F)) if F.size else 0.0
    it = 0
    while norm > tol:
        if it >= max_iter or not np.isfinite(norm):
            raise PowerFlowDivergence(
                f"power flow did not converge in {it} iterations (mismatch {norm:.3e})"
            )
        V = v * np.exp(1j * theta)
        dth, dvm = dS_dV(Y, V)
        J = np.block([
            [dth.real[np.ix_(pvpq, pvpq)], dvm.real[np.ix_(pvpq, pq)]],
            [dth.imag[np.ix_(pq, pvpq)], dvm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowDivergence(f"singular power-flow Jacobian: {exc}") from None
        theta = theta.copy()
        v = v.copy()
        theta[pvpq] += dx[: len(pvpq)]
        v[pq] += dx[len(pvpq):]
        it += 1
        F = mismatch(v, theta)
        norm = np.max(np.abs(F)) if F.size else 0.0
    S = power_injections(Y, v, theta)
    return PowerFlowResult(v, theta, S.real, S.imag, it, float(norm))
