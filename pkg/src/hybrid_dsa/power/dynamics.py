"""Classical-machine network DAE and the hybrid automaton built on it.

Differential states are ``(delta_i, omega_i)`` per generator and algebraic
states are ``(theta_j, v_j)`` for every bus. Each machine is a constant EMF
behind its transient reactance. Loads follow ``case.load_model``:

``constant_power``
    the power-flow demand, switching to constant impedance below
    ``case.pq_vmin`` so that a near-bolted fault stays solvable;
``constant_impedance``
    the power-flow demand converted to a fixed admittance at the
    power-flow voltage, i.e. demand scales with ``(v / v0)**2``.

When no generator sits on the slack bus it is treated as an infinite bus:
its two algebraic equations pin ``theta`` and ``v`` to the setpoint. When a
machine sits there, the slack bus is an ordinary network bus and the angle
reference floats with the machines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..dae import SemiExplicitDae, restore_consistency  # noqa: F401  (re-exported)
from ..hybrid import DiscreteMode, HybridAutomaton, HybridState, Layout, Transition
from . import _kernels
from .network import build_admittance, dS_dV, power_flow


def init_generators(case, pf):
    """Back-solve machine EMFs, rotor angles and mechanical powers from a power flow."""
    idx = case.bus_index
    out = []
    for g in case.generators:
        k = idx[g.bus]
        bus = case.buses[k]
        V = pf.v[k] * np.exp(1j * pf.theta[k])
        S = complex(pf.p[k] + bus.p_load, pf.q[k] + bus.q_load)
        I = np.conj(S / V)
        E = V + 1j * g.xd_p * I
        out.append(replace(g, E_p=float(abs(E)), delta=float(np.angle(E)), omega=1.0, P_m=float(S.real)))
    return tuple(out)


class PowerDae(SemiExplicitDae):
    """Network DAE of one case in one mode.

    ``u`` is added to the mechanical power of the control-target machine.
    """

    def __init__(self, case, mode):
        if any(g.E_p is None or g.P_m is None for g in case.generators):
            raise ValueError("generators are not initialized; run init_generators first")
        self.case = case
        self.mode = mode
        self.Y = build_admittance(case, mode)
        idx = case.bus_index
        nb = len(case.buses)
        ng = len(case.generators)
        self.nb, self.ng = nb, ng
        self.n_y = 2 * ng
        self.n_z = 2 * nb
        self.gen_bus = np.array([idx[g.bus] for g in case.generators], dtype=int)
        self.E = np.array([g.E_p for g in case.generators], dtype=float)
        self.xd = np.array([g.xd_p for g in case.generators], dtype=float)
        self.H2 = np.array([2.0 * g.H for g in case.generators], dtype=float)
        self.D = np.array([g.D for g in case.generators], dtype=float)
        self.Pm = np.array([g.P_m for g in case.generators], dtype=float)
        self.ctrl = np.array(
            [1.0 if g.id == case.control_target else 0.0 for g in case.generators]
        )
        self.omega_s = case.omega_s
        self.P0 = np.array([b.p_load for b in case.buses], dtype=float)
        self.Q0 = np.array([b.q_load for b in case.buses], dtype=float)
        if case.load_model == "constant_impedance":
            self.vref = np.array([b.v for b in case.buses], dtype=float)
        else:
            self.vref = None
        self.vmin = case.pq_vmin
        self.E_xd = self.E / self.xd
        self.inv_xd = 1.0 / self.xd
        self.inv_H2 = 1.0 / self.H2
        self.GB = np.block([[self.Y.real, -self.Y.imag], [self.Y.imag, self.Y.real]])
        self.has_load = bool(np.any(self.P0) or np.any(self.Q0))
        s = case.slack
        self.fixed_slack = s if s not in set(self.gen_bus.tolist()) else None
        self.slack_ref = (0.0, case.buses[s].v_set)
        kind = (
            _kernels.CONSTANT_IMPEDANCE if self.vref is not None else _kernels.CONSTANT_POWER
        )
        vref = self.vref if self.vref is not None else np.ones(nb)
        slack = -1 if self.fixed_slack is None else int(self.fixed_slack)
        G = np.ascontiguousarray(self.Y.real)
        B = np.ascontiguousarray(self.Y.imag)
        self._res_args = (
            self.gen_bus, self.E_xd, self.inv_xd, float(self.omega_s), self.Pm, self.ctrl,
            self.D, self.inv_H2, G, B, self.P0, self.Q0, self.has_load, kind, vref,
            float(self.vmin), slack, float(self.slack_ref[0]), float(self.slack_ref[1]),
        )
        self._jac_args = (
            self.gen_bus, self.E_xd, self.inv_xd, float(self.omega_s), self.D, self.inv_H2,
            np.ascontiguousarray(self.Y), self.P0, self.Q0, self.has_load, kind, vref,
            float(self.vmin), slack,
        )

    # -- pieces shared by residuals and Jacobians ---------------------------
    def _gen_terms(self, y, z):
        ng, nb = self.ng, self.nb
        delta = y[:ng]
        theta = z[:nb]
        v = z[nb:]
        a = delta - theta[self.gen_bus]
        vg = v[self.gen_bus]
        sa, ca = np.sin(a), np.cos(a)
        Pe = self.E * vg * sa / self.xd
        Qg = (self.E * vg * ca - vg * vg) / self.xd
        return a, vg, sa, ca, Pe, Qg

    def _load_scale(self, v):
        if self.vref is not None:
            return (v / self.vref) ** 2, 2.0 * v / self.vref ** 2
        low = v < self.vmin
        s = np.where(low, (v / self.vmin) ** 2, 1.0)
        ds = np.where(low, 2.0 * v / self.vmin ** 2, 0.0)
        return s, ds

    def stacked(self, y, z, u):
        """``concat(phi, psi)`` in one pass; the residual hot path."""
        return _kernels.residual(
            np.asarray(y, dtype=float), np.asarray(z, dtype=float), float(u), *self._res_args
        )

    def jacobian(self, y, z, u):
        return _kernels.jacobian(
            np.asarray(y, dtype=float), np.asarray(z, dtype=float), *self._jac_args
        )

    def stacked_numpy(self, y, z, u):
        """Vectorized numpy reference for :meth:`stacked`."""
        ng, nb, gb = self.ng, self.nb, self.gen_bus
        w = y[ng:] - 1.0
        theta = z[:nb]
        v = z[nb:]
        vg = v[gb]
        a = y[:ng] - theta[gb]
        ev = self.E_xd * vg
        Pe = ev * np.sin(a)
        Qg = ev * np.cos(a) - vg * vg * self.inv_xd
        out = np.empty(2 * (ng + nb))
        out[:ng] = self.omega_s * w
        out[ng:2 * ng] = (self.Pm + u * self.ctrl - Pe - self.D * w) * self.inv_H2
        cs = np.concatenate([v * np.cos(theta), v * np.sin(theta)])
        cur = self.GB @ cs  # real and imaginary bus currents
        re, im = cs[:nb], cs[nb:]
        rp = out[2 * ng:2 * ng + nb]
        rq = out[2 * ng + nb:]
        rp[:] = re * cur[:nb] + im * cur[nb:]
        rq[:] = im * cur[:nb] - re * cur[nb:]
        if self.has_load:
            scale = self._load_scale(v)[0]
            rp += self.P0 * scale
            rq += self.Q0 * scale
        rp[gb] -= Pe
        rq[gb] -= Qg
        if self.fixed_slack is not None:
            k = self.fixed_slack
            rp[k] = theta[k] - self.slack_ref[0]
            rq[k] = v[k] - self.slack_ref[1]
        return out

    def phi(self, y, z, u):
        return self.stacked(y, z, u)[: self.n_y]

    def psi(self, y, z, u):
        return self.stacked(y, z, u)[self.n_y:]

    def evaluate(self, y, z, u, need_jacobian=True):
        out = self.stacked(y, z, u)
        jac = self.jacobian(y, z, u) if need_jacobian else None
        return out[: self.n_y], out[self.n_y:], jac

    def jacobian_numpy(self, y, z, u):
        """Vectorized numpy reference for :meth:`jacobian`."""
        a, vg, sa, ca, Pe, Qg = self._gen_terms(y, z)
        nb = self.nb
        V = z[nb:] * np.exp(1j * z[:nb])
        return self._jac(z, V, vg, sa, ca)

    def _jac(self, z, V, vg, sa, ca):
        ng, nb = self.ng, self.nb
        gb = self.gen_bus
        E, xd = self.E, self.xd
        v = z[nb:]
        dPe_dd = E * vg * ca / xd  # = -dPe/dtheta_b
        dPe_dv = E * sa / xd
        dQg_dd = -E * vg * sa / xd  # = -dQg/dtheta_b
        dQg_dv = (E * ca - 2.0 * vg) / xd

        fy = np.zeros((2 * ng, 2 * ng))
        r = np.arange(ng)
        fy[r, ng + r] = self.omega_s
        fy[ng + r, r] = -dPe_dd / self.H2
        fy[ng + r, ng + r] = -self.D / self.H2
        fz = np.zeros((2 * ng, 2 * nb))
        fz[ng + r, gb] = dPe_dd / self.H2
        fz[ng + r, nb + gb] = -dPe_dv / self.H2

        dth, dvm = dS_dV(self.Y, V)
        _, ds = self._load_scale(v)
        gz = np.empty((2 * nb, 2 * nb))
        gz[:nb, :nb] = dth.real
        gz[:nb, nb:] = dvm.real
        gz[nb:, :nb] = dth.imag
        gz[nb:, nb:] = dvm.imag
        d = np.arange(nb)
        gz[d, nb + d] += self.P0 * ds
        gz[nb + d, nb + d] += self.Q0 * ds
        # generator injections enter with a minus sign; one machine per bus
        gz[gb, gb] += dPe_dd
        gz[gb, nb + gb] -= dPe_dv
        gz[nb + gb, gb] += dQg_dd
        gz[nb + gb, nb + gb] -= dQg_dv
        gy = np.zeros((2 * nb, 2 * ng))
        gy[gb, r] = -dPe_dd
        gy[nb + gb, r] = -dQg_dd
        if self.fixed_slack is not None:
            k = self.fixed_slack
            for row, col in ((k, k), (nb + k, nb + k)):
                gz[row] = 0.0
                gz[row, col] = 1.0
                gy[row] = 0.0
        return fy, fz, gy, gz

    def electrical_power(self, y, z):
        return self._gen_terms(y, z)[4]


def make_dae(case, mode):
    return PowerDae(case, mode)


def state_layout(case):
    ng, nb = len(case.generators), len(case.buses)
    return Layout.from_sizes(
        [("delta", ng), ("omega", ng), ("theta", nb), ("v", nb)],
        circular=("delta", "theta"),
    )


@dataclass(frozen=True)
class Equilibrium:
    case: object  # case with initialized generators
    mode: int
    x: np.ndarray
    powerflow: object


def equilibrium(case, mode, pf_tol=1e-8):
    """Power flow plus machine initialization; returns the operating point."""
    pf = power_flow(case, mode, tol=pf_tol)
    gens = init_generators(case, pf)
    buses = tuple(
        replace(b, v=float(pf.v[k]), theta=float(pf.theta[k])) for k, b in enumerate(case.buses)
    )
    case = replace(case, buses=buses, generators=tuple(gens))
    x = np.concatenate([
        [g.delta for g in gens],
        np.ones(len(gens)),
        pf.theta,
        pf.v,
    ])
    return Equilibrium(case, mode, x, pf)


def _same_differential(n_y):
    def admits(x_pre, x_post):
        return np.array_equal(x_pre[:n_y], x_post[:n_y])

    return admits


def build_automaton(case, init=None, dynamics=None):
    """Hybrid automaton with one mode per entry of ``case.modes``.

    Every ordered pair of distinct modes is an edge with an always-true guard
    and identity reset. Since the algebraic variables are re-solved after a
    jump, the reset relation admits any post-jump state with the same
    differential part.
    """
    modes = tuple(DiscreteMode(k, label) for k, (label, _) in enumerate(case.modes))
    if dynamics is None:
        dynamics = {m.id: make_dae(case, m.id) for m in modes}
    n_y = 2 * len(case.generators)
    transitions = {
        (a.id, b.id): Transition(admits=_same_differential(n_y))
        for a in modes
        for b in modes
        if a.id != b.id
    }
    kwargs = {} if init is None else {"init": init}
    return HybridAutomaton(
        modes=modes,
        layout=state_layout(case),
        inputs=tuple(case.inputs),
        transitions=transitions,
        dynamics=dynamics,
        **kwargs,
    )


def hybrid_state(x, mode, t=0.0):
    return HybridState(mode, np.asarray(x, dtype=float), float(t))
