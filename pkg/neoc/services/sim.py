"""Closed-loop simulation: fixed-step RK4, cost integrals, admissibility probes, law comparison."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Mapping

import numpy as np
from scipy import integrate as sp_integrate
from scipy import linalg, stats

from neoc.config import settings
from neoc.errors import AdmissibilityError, SimulationError
from neoc.schemas import ComparisonArtifact
from neoc.services.export import write_grid, write_json
from neoc.services.laws import ControlLaw, LinearGain
from neoc.services.problem import ProblemSpec

logger = logging.getLogger(__name__)

Reason = Literal["decayed", "horizon", "escaped"]


@dataclass
class Trajectory:
    times: np.ndarray  # (L,)
    states: np.ndarray  # (L, n)
    controls: np.ndarray  # (L, p)
    terminated_reason: Reason
    dt: float

    @property
    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))


@dataclass
class CostEstimate:
    value: float
    tail_bound: float
    reason: Reason


def _closed_loop(problem: ProblemSpec, alpha, law: ControlLaw, X: np.ndarray) -> np.ndarray:
    f, g, _ = problem.fields(X, alpha)
    U = law.batch(X)
    return f + np.einsum("knp,kp->kn", g, U)


def integrate_many(
    problem: ProblemSpec,
    alpha,
    law: ControlLaw,
    x0s: np.ndarray,
    dt: float | None = None,
    T_max: float | None = None,
    decay_tol: float | np.ndarray | None = None,
) -> list[Trajectory]:
    """RK4 on a batch of initial states; each trajectory stops on its own."""
    dt = settings.dt if dt is None else dt
    T_max = settings.horizon if T_max is None else T_max
    decay_tol = settings.decay_tol if decay_tol is None else decay_tol
    alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)

    X = np.array(np.atleast_2d(x0s), dtype=float)
    K, n = X.shape
    tol = np.broadcast_to(np.asarray(decay_tol, dtype=float), (K,))
    escape = settings.escape_factor * problem.radius
    steps = int(math.ceil(T_max / dt - 1e-9))

    history = np.empty((steps + 1, K, n))
    history[0] = X
    last = np.full(K, steps)
    reasons: list[Reason] = ["horizon"] * K
    active = np.ones(K, dtype=bool)

    norms = np.linalg.norm(X, axis=1)
    for k in np.flatnonzero(norms <= tol):
        active[k], last[k], reasons[k] = False, 0, "decayed"

    for step in range(1, steps + 1):
        if not active.any():
            history[step:] = history[step - 1]
            break
        idx = np.flatnonzero(active)
        Y = X[idx]
        k1 = _closed_loop(problem, alpha, law, Y)
        k2 = _closed_loop(problem, alpha, law, Y + 0.5 * dt * k1)
        k3 = _closed_loop(problem, alpha, law, Y + 0.5 * dt * k2)
        k4 = _closed_loop(problem, alpha, law, Y + dt * k3)
        Y = Y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(Y)):
            raise SimulationError("state became non-finite", step)
        X[idx] = Y
        history[step] = X
        norms = np.linalg.norm(Y, axis=1)
        for local, k in enumerate(idx):
            if norms[local] <= tol[k]:
                active[k], last[k], reasons[k] = False, step, "decayed"
            elif norms[local] > escape:
                active[k], last[k], reasons[k] = False, step, "escaped"

    out = []
    for k in range(K):
        states = history[: last[k] + 1, k, :].copy()
        out.append(Trajectory(
            times=dt * np.arange(states.shape[0]),
            states=states,
            controls=law.batch(states),
            terminated_reason=reasons[k],
            dt=dt,
        ))
    return out


def integrate(problem, alpha, law, x0, dt=None, T_max=None, decay_tol=None) -> Trajectory:
    return integrate_many(problem, alpha, law, np.atleast_2d(x0), dt, T_max, decay_tol)[0]


def _running_cost(problem: ProblemSpec, alpha, traj: Trajectory) -> np.ndarray:
    _, _, m = problem.fields(traj.states, alpha)
    uRu = np.einsum("kp,pq,kq->k", traj.controls, problem.R, traj.controls)
    return uRu + m


def _simpson(values: np.ndarray, dt: float) -> np.ndarray:
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:])
    return sp_integrate.simpson(values, dx=dt, axis=0)


def _tail_bound(traj: Trajectory, running: np.ndarray) -> float:
    """L_end / (2λ) with λ the decay rate fitted on the last tenth of the trajectory."""
    if running.size < 10 or running[-1] == 0:
        return 0.0
    start = int(0.9 * running.size)
    norms = np.linalg.norm(traj.states[start:], axis=1)
    if np.any(norms <= 0):
        return 0.0
    slope = stats.linregress(traj.times[start:], np.log(norms)).slope
    if slope >= 0:
        return math.inf
    return float(running[-1] / (2.0 * -slope))


def cost_estimate(problem, alpha, law, x0, dt=None, T_max=None, decay_tol=None) -> CostEstimate:
    alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
    try:
        traj = integrate(problem, alpha, law, x0, dt, T_max, decay_tol)
    except SimulationError as e:
        logger.warning("Cost of %s from %s is infinite: %s", law.name, np.ravel(x0).tolist(), e)
        return CostEstimate(math.inf, math.inf, "escaped")
    if traj.terminated_reason != "decayed":
        logger.warning(
            "Law %s did not decay from %s (%s); cost reported infinite",
            law.name, np.ravel(x0).tolist(), traj.terminated_reason,
        )
        return CostEstimate(math.inf, math.inf, traj.terminated_reason)
    running = _running_cost(problem, alpha, traj)
    return CostEstimate(float(_simpson(running, traj.dt)), _tail_bound(traj, running), "decayed")


def cost(problem, alpha, law, x0, dt=None, T_max=None, decay_tol=None) -> float:
    """∫ uᵀRu + m along the closed loop; inf if the trajectory does not decay."""
    return cost_estimate(problem, alpha, law, x0, dt, T_max, decay_tol).value


def trajectory_integral(
    problem: ProblemSpec,
    alpha,
    law: ControlLaw,
    x0,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dt=None,
    T_max=None,
    decay_tol=None,
) -> np.ndarray:
    """Simpson integral of integrand(states, controls) along the closed loop from x0."""
    traj = integrate(problem, alpha, law, x0, dt, T_max, decay_tol)
    if traj.terminated_reason != "decayed":
        raise SimulationError(f"trajectory from {np.ravel(x0).tolist()} did not decay", traj.states.shape[0] - 1)
    values = np.asarray(integrand(traj.states, traj.controls), dtype=float)
    return np.asarray(_simpson(values, traj.dt))


# ── Admissibility gate ──

@dataclass
class ProbeOutcome:
    x0: np.ndarray
    outcome: Literal["decayed", "slow", "failed"]
    ratio: float


def axis_probes(problem: ProblemSpec) -> np.ndarray:
    """The 2n points on the box faces along each coordinate axis."""
    n = problem.state_dim
    out = []
    for i in range(n):
        for bound in (problem.hi[i], problem.lo[i]):
            x = np.zeros(n)
            x[i] = bound
            out.append(x)
    return np.array(out)


def probe_states(problem: ProblemSpec, scale: float = 0.5) -> np.ndarray:
    """Axis probes plus box corners (n <= 3), scaled toward the origin."""
    points = [axis_probes(problem)]
    if problem.state_dim <= 3:
        corners = np.array(list(itertools.product(*zip(problem.lo, problem.hi))))
        points.append(corners)
    return scale * np.vstack(points)


def _linear_outcomes(problem: ProblemSpec, alpha, law: LinearGain, probes: np.ndarray) -> list[ProbeOutcome]:
    """Outcomes from the exact flow expm(T(A - BK)) at the gate horizon; the transient peak is not judged."""
    A, B, _ = problem.lqr.matrices(alpha)
    closed = A - B @ law.K
    hurwitz = bool(np.linalg.eigvals(closed).real.max() < 0)
    flow = linalg.expm(settings.gate_horizon * closed)
    out = []
    for x0 in probes:
        norm0 = np.linalg.norm(x0)
        ratio = float(np.linalg.norm(flow @ x0) / norm0) if norm0 > 0 else 0.0
        if not hurwitz:
            outcome = "failed"
        elif ratio <= settings.gate_ratio:
            outcome = "decayed"
        else:
            outcome = "slow"
        out.append(ProbeOutcome(x0, outcome, ratio))
    return out


def probe_admissibility(problem: ProblemSpec, alpha, law: ControlLaw, probes=None) -> list[ProbeOutcome]:
    probes = axis_probes(problem) if probes is None else np.atleast_2d(probes)
    if problem.lqr is not None and isinstance(law, LinearGain):
        return _linear_outcomes(problem, alpha, law, probes)
    start = np.linalg.norm(probes, axis=1)
    trajs = integrate_many(
        problem, alpha, law, probes,
        dt=settings.gate_dt, T_max=settings.gate_horizon, decay_tol=settings.gate_ratio * start,
    )
    bound = 2.0 * np.maximum(np.abs(problem.lo), np.abs(problem.hi))
    out = []
    for x0, norm0, traj in zip(probes, start, trajs):
        ratio = traj.final_norm / norm0 if norm0 > 0 else 0.0
        if traj.terminated_reason == "decayed" or ratio <= settings.gate_ratio:
            outcome = "decayed"
        elif (
            traj.terminated_reason == "horizon"
            and ratio < 1.0
            and np.all(np.abs(traj.states) <= bound)
        ):
            outcome = "slow"
        else:
            outcome = "failed"
        out.append(ProbeOutcome(x0, outcome, ratio))
    return out


def require_admissible(problem: ProblemSpec, alpha, law: ControlLaw) -> list[ProbeOutcome]:
    outcomes = probe_admissibility(problem, alpha, law)
    failed = [o for o in outcomes if o.outcome == "failed"]
    if failed:
        raise AdmissibilityError(
            f"initial law {law.name} is not admissible: {len(failed)} probe(s) failed to decay",
            {"probes": [{"x0": o.x0.tolist(), "ratio": o.ratio} for o in failed]},
        )
    for o in outcomes:
        if o.outcome == "slow":
            logger.warning(
                "Initial law %s decays slowly from %s (ratio %.3e after %.0f s)",
                law.name, o.x0.tolist(), o.ratio, settings.gate_horizon,
            )
    return outcomes


def decay_fit(traj: Trajectory, t_max: float = 10.0) -> tuple[float, float, float]:
    """Fit ‖x(t)‖/‖x0‖ ≈ a·e^{-λt}; returns (a, λ, R²)."""
    norms = np.linalg.norm(traj.states, axis=1)
    mask = (traj.times <= t_max) & (norms > 0)
    fit = stats.linregress(traj.times[mask], np.log(norms[mask] / norms[0]))
    return float(np.exp(fit.intercept)), float(-fit.slope), float(fit.rvalue**2)


# ── Comparison ──

def grid_points(lo, hi, pts_per_axis: int | None = None, cap: int | None = None) -> np.ndarray:
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
    pts = settings.grid_pts if pts_per_axis is None else pts_per_axis
    cap = settings.grid_cap_2d if cap is None else cap
    n = lo.size
    per_axis = max(2, min(pts, int(math.floor(cap ** (1.0 / n) + 1e-9))))
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


@dataclass
class ComparisonReport:
    points: np.ndarray
    controls: dict[str, np.ndarray]
    sup: dict[tuple[str, str], float]
    rms: dict[tuple[str, str], float]
    probes: np.ndarray
    costs: dict[str, list[float]] = field(default_factory=dict)

    def pair(self, a: str, b: str) -> tuple[float, float]:
        key = (a, b) if (a, b) in self.sup else (b, a)
        return self.sup[key], self.rms[key]

    def to_csv(self, path: str | Path) -> Path:
        columns = dict(self.controls)
        for a, b in self.sup:
            columns[f"|{a}-{b}|"] = np.abs(self.controls[a] - self.controls[b]).max(axis=1)
        return write_grid(Path(path), self.points, columns)

    def summary(self) -> dict:
        return {
            "pairs": [
                {"a": a, "b": b, "sup": self.sup[(a, b)], "rms": self.rms[(a, b)]}
                for a, b in self.sup
            ],
            "probes": self.probes.tolist(),
            "costs": {name: values for name, values in self.costs.items()},
        }

    def to_json(self, path: str | Path, run_config=None) -> Path:
        return write_json(Path(path), ComparisonArtifact(config=run_config, **self.summary()))


def compare_laws(
    problem: ProblemSpec,
    alpha_hat,
    laws: Mapping[str, ControlLaw],
    points: np.ndarray,
    probes: np.ndarray | None = None,
    dt=None,
    T_max=None,
    decay_tol=None,
) -> ComparisonReport:
    """Evaluate every law on the grid and simulate each under the new parameter α̂."""
    points = np.atleast_2d(points)
    controls = {name: law.batch(points) for name, law in laws.items()}
    sup, rms = {}, {}
    for a, b in itertools.combinations(controls, 2):
        d = np.abs(controls[a] - controls[b])
        sup[(a, b)] = float(d.max())
        rms[(a, b)] = float(np.sqrt(np.mean(d**2)))
    probes = np.empty((0, problem.state_dim)) if probes is None else np.atleast_2d(probes)
    costs = {
        name: [cost(problem, alpha_hat, law, x0, dt, T_max, decay_tol) for x0 in probes]
        for name, law in laws.items()
    }
    return ComparisonReport(points, controls, sup, rms, probes, costs)
