"""Symplectic time stepping of the chain."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainParams, PhasePoint, forces, hamiltonian

DT_GUARD = 0.2
DRIFT_FLAG = 1e-5

_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_W1 = 1.0 / (2.0 - _CBRT2)
YOSHIDA_W0 = -_CBRT2 / (2.0 - _CBRT2)
SCHEMES = ("verlet2", "yoshida4")


def omega_max(params: ChainParams) -> float:
    """Top of the optical band, sqrt(2K(m1+m2)/(m1 m2))."""
    return float(np.sqrt(2 * params.K * (params.m1 + params.m2) / (params.m1 * params.m2)))


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_final: float
    record_stride: int = 1
    scheme: str = "verlet2"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise ValueError(f"t_final must be non-negative, got {self.t_final}")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    def check(self, params: ChainParams) -> None:
        if self.dt * omega_max(params) > DT_GUARD + 1e-12:
            raise ValueError(f"dt*Omega = {self.dt * omega_max(params):.4g} exceeds {DT_GUARD}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


class NonFiniteState(FloatingPointError):
    pass


def _verlet(p, x, params, dt, f):
    # kick-drift-kick; f holds the force at the incoming x and is returned for reuse
    m = params.masses
    p = p + 0.5 * dt * f
    x = x + dt * p / m
    f = forces(PhasePoint(p, x), params)
    p = p + 0.5 * dt * f
    return p, x, f


def step(state: PhasePoint, params: ChainParams, dt: float, scheme: str = "verlet2",
         check: bool = True) -> PhasePoint:
    """One step of the chosen scheme; works on batched states."""
    if check and dt * omega_max(params) > DT_GUARD + 1e-12:
        raise ValueError(f"dt*Omega = {dt * omega_max(params):.4g} exceeds {DT_GUARD}")
    p, x = state.p, state.x
    f = forces(state, params)
    if scheme == "verlet2":
        p, x, _ = _verlet(p, x, params, dt, f)
    elif scheme == "yoshida4":
        for w in (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1):
            p, x, f = _verlet(p, x, params, w * dt, f)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(x))):
        raise NonFiniteState("non-finite state after step 1")
    return PhasePoint(p, x)


class _Stepper:
    """Reuses the force between steps, which halves the force evaluations of repeated calls."""

    def __init__(self, state: PhasePoint, params: ChainParams, dt: float, scheme: str):
        self.p, self.x = state.p.copy(), state.x.copy()
        self.params, self.dt = params, dt
        self.subs = (1.0,) if scheme == "verlet2" else (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1)
        self.f = forces(state, params)

    def advance(self, n: int) -> None:
        for _ in range(n):
            for w in self.subs:
                self.p, self.x, self.f = _verlet(self.p, self.x, self.params, w * self.dt, self.f)

    @property
    def state(self) -> PhasePoint:
        return PhasePoint(self.p, self.x)


@dataclass
class TimeSeries:
    t: np.ndarray
    values: dict                 # name -> array (n_records, *batch)
    max_rel_drift: float
    drift_flagged: bool
    meta: dict = field(default_factory=dict)


def evolve(state: PhasePoint, params: ChainParams, config: IntegratorConfig,
           observables: dict | None = None) -> TimeSeries:
    """Integrate and record observables every ``record_stride`` steps.

    ``observables`` maps a name to a function of a (batched) PhasePoint.  The
    energy is always tracked for the drift report.
    """
    config.check(params)
    observables = dict(observables or {})
    st = _Stepper(state, params, config.dt, config.scheme)
    H0 = np.asarray(hamiltonian(state, params))
    scale = np.maximum(np.abs(H0), 1e-300)
    n_rec = config.n_steps // config.record_stride + 1
    rec = {name: [] for name in observables}
    times = []
    drift = 0.0
    for r in range(n_rec):
        if r:
            st.advance(config.record_stride)
            if not (np.all(np.isfinite(st.p)) and np.all(np.isfinite(st.x))):
                raise NonFiniteState(f"non-finite state at step {r * config.record_stride}")
        cur = st.state
        times.append(r * config.record_stride * config.dt)
        drift = max(drift, float(np.max(np.abs(hamiltonian(cur, params) - H0) / scale)))
        for name, fn in observables.items():
            rec[name].append(np.asarray(fn(cur)))
    values = {k: np.stack(v) for k, v in rec.items()}
    return TimeSeries(np.array(times), values, drift, drift > DRIFT_FLAG,
                      {"scheme": config.scheme, "dt": config.dt, "final_state": st.state})
