"""Box- and velocity-constrained trajectory solver.

The first configuration of the trajectory is held fixed. Joint limits are
kept as simple bounds throughout; the inter-step velocity limits are folded
into an augmented Lagrangian. An optional truncated penalty
``weight * sum(max(0, h(x)))`` is handled the same way through slack
variables ``s >= max(0, h)``; a penalty row only enters the problem once it
has been seen positive, so rows that never activate leave the iteration
untouched.

Each inner iteration minimises a local model over the box: quadratic in the
objective, with the augmented-Lagrangian terms of the (linearised)
constraints kept exact. That model is convex and piecewise quadratic and is
minimised by semismooth Newton steps, each a bound-constrained QP solved by
projected Newton. Steps are accepted by their actual against predicted
decrease, with a Levenberg damping term adjusted accordingly. Curvature comes
from a caller-supplied Hessian model when one is given and from dense BFGS
updates otherwise.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import NumericalFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """``steps`` is a ``(T+1, n_dof)`` array of joint angles sampled every ``dt`` seconds."""

    steps: np.ndarray
    dt: float

    def __post_init__(self):
        s = np.array(self.steps, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or len(s) < 2:
            raise ValueError("trajectory needs at least two steps")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "steps", s)

    @property
    def T(self) -> int:
        return len(self.steps) - 1

    @property
    def n_dof(self) -> int:
        return self.steps.shape[1]

    @property
    def duration(self) -> float:
        return self.T * self.dt


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 5000
    feasibility_tol: float = 1e-6
    optimality_tol: float = 1e-6
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    max_outer: int = 30
    max_qp_iterations: int = 50
    damping: float = 1e-8
    hinge_smoothing: float = 1e-4

    def __post_init__(self):
        for name in ("feasibility_tol", "optimality_tol", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_iterations < 1 or self.max_outer < 1 or self.max_qp_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not self.hinge_smoothing > 0:
            raise ValueError("hinge_smoothing must be positive")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_cost: float
    max_constraint_violation: float
    wall_time: float
    outer_iterations: int = 0
    projected_gradient: float = float("nan")
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def velocity_residuals(traj: Trajectory, v_max) -> np.ndarray:
    """Per step and joint amount by which ``|dtheta|/dt`` exceeds ``v_max`` (``T x n``)."""
    vel = np.abs(np.diff(traj.steps, axis=0)) / traj.dt
    return np.maximum(0.0, vel - v_max)


def project_box(traj: Trajectory, lower, upper) -> Trajectory:
    return Trajectory(np.clip(traj.steps, lower, upper), traj.dt)


def _projected_gradient(x, g, lo, hi):
    return np.abs(x - np.clip(x - g, lo, hi)).max(initial=0.0)


def box_qp(H, g, lo, hi, tol=1e-12, max_iter=50):
    """Minimise ``g.d + d.H.d / 2`` subject to ``lo <= d <= hi``.

    ``H`` must be symmetric positive definite and ``lo <= 0 <= hi``. Projected
    Newton iterations: Newton steps on the variables not held at a bound,
    followed by a backtracking search along the projection arc.
    """
    d = np.zeros_like(g)
    q = 0.0
    for _ in range(max_iter):
        grad = g + H @ d
        if _projected_gradient(d, grad, lo, hi) <= tol:
            break
        held = ((d <= lo) & (grad > 0)) | ((d >= hi) & (grad < 0))
        free = ~held
        step = np.zeros_like(d)
        try:
            step[free] = -cho_solve(cho_factor(H[np.ix_(free, free)]), grad[free])
        except LinAlgError:
            step[free] = -grad[free]
        a = 1.0
        for _ in range(40):
            trial = np.clip(d + a * step, lo, hi)
            delta = trial - d
            q_trial = q + grad @ delta + 0.5 * delta @ H @ delta
            if q_trial < q and q_trial <= q + 1e-4 * (grad @ delta):
                break
            a *= 0.5
        else:
            break
        if np.abs(delta).max() <= 1e-15:
            break
        d, q = trial, q_trial
    return d


def _difference_matrix(n_free_steps, n, dt):
    """Map free steps ``theta_1..theta_T`` (flattened) to velocities, minus the ``theta_0`` part."""
    D = np.eye(n_free_steps) - np.eye(n_free_steps, k=-1)
    return np.kron(D, np.eye(n)) / dt


class _Group:
    """Inequalities ``c <= 0`` under an augmented Lagrangian with multipliers ``lam``."""

    def __init__(self, lam, mu):
        self.lam = lam
        self.mu = mu

    def value(self, c):
        s = np.maximum(0.0, self.lam + self.mu * c)
        return float(np.sum(s * s - self.lam * self.lam)) / (2.0 * self.mu), s


def solve(initial: Trajectory, objective, lower, upper, v_max, config: SolverConfig = None,
          hessian=None, penalty=None, penalty_weight=0.0):
    """Minimise ``objective + penalty_weight * sum(max(0, h))`` with ``steps[0]`` held fixed.

    ``objective(steps)`` must return ``(value, gradient)`` with the gradient
    shaped like ``steps``. ``hessian(steps)``, if given, returns a symmetric
    positive semi-definite curvature model over the flattened steps
    (including step 0, whose rows are ignored). ``penalty(steps)``, if given,
    returns hinge arguments ``h`` of shape ``(m,)`` and their Jacobian of
    shape ``(m, T+1, n_dof)``. Returns the best feasible trajectory found and
    a :class:`SolveReport` whose ``final_cost`` includes the penalty.
    """
    cfg = config or SolverConfig()
    t_start = time.perf_counter()
    dt = initial.dt
    n_steps, n = initial.steps.shape
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
    v_max = np.broadcast_to(np.asarray(v_max, dtype=float), (n,))
    theta0 = np.clip(initial.steps[0], lower, upper)
    x0 = np.clip(initial.steps[1:], lower, upper).ravel()
    lo = np.tile(lower, n_steps - 1)
    hi = np.tile(upper, n_steps - 1)
    N = x0.size
    C = _difference_matrix(n_steps - 1, n, dt)
    c_offset = np.zeros(N)
    c_offset[:n] = theta0 / dt
    vm = np.tile(v_max, n_steps - 1)
    alpha = float(penalty_weight) if penalty is not None else 0.0

    def unpack(x):
        return np.vstack([theta0, x.reshape(n_steps - 1, n)])

    def evaluate(x):
        steps = unpack(x)
        val, grad = objective(steps)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            raise NumericalFailure("objective returned non-finite value or gradient",
                                   payload=steps)
        grad = np.asarray(grad, dtype=float)[1:].ravel()
        if penalty is None:
            return float(val), grad, np.zeros(0), np.zeros((0, N))
        h, jac = penalty(steps)
        h = np.asarray(h, dtype=float).ravel()
        jac = np.asarray(jac, dtype=float).reshape(len(h), n_steps, n)[:, 1:].reshape(len(h), N)
        if not np.all(np.isfinite(h)) or not np.all(np.isfinite(jac)):
            raise NumericalFailure("penalty returned non-finite values", payload=steps)
        return float(val), grad, h, jac

    def curvature(x):
        H = np.asarray(hessian(unpack(x)), dtype=float)[n:, n:]
        if not np.all(np.isfinite(H)):
            raise NumericalFailure("Hessian model is not finite", payload=unpack(x))
        return 0.5 * (H + H.T)

    def velocity(x):
        # c <= 0 with c = +-(theta_t - theta_{t-1}) / dt - v_max
        v = C @ x - c_offset
        return np.concatenate([v - vm, -v - vm])

    G_vel = np.vstack([C, -C])
    vel = _Group(np.zeros(2 * N), cfg.penalty_init)
    hinge = _Group(np.zeros(0), alpha / cfg.hinge_smoothing if alpha > 0 else 1.0)
    tracked = np.zeros(0, dtype=int)

    def true_cost(f, h):
        return f + alpha * float(np.sum(np.maximum(h, 0.0)))

    def merit(pt):
        """Augmented merit at ``pt = (x, s, f, g, h, J)`` and its gradient in ``(x, s)``."""
        x, sl, f, g, h, J = pt
        pv, sv = vel.value(velocity(x))
        ph, sh = hinge.value(h[tracked] - sl)
        loose = np.ones(len(h), dtype=bool)
        loose[tracked] = False
        loose &= h > 0
        val = f + pv + ph + alpha * (float(np.sum(sl)) + float(np.sum(h[loose])))
        gx = g + G_vel.T @ sv + J[tracked].T @ sh + alpha * J[loose].sum(axis=0)
        return val, np.concatenate([gx, alpha - sh])

    def track(pt, h_seen):
        """Start tracking penalty rows seen positive; returns the updated point."""
        nonlocal tracked
        new = np.flatnonzero(h_seen > 0)
        new = new[~np.isin(new, tracked)]
        if not len(new):
            return pt
        x, sl, f, g, h, J = pt
        tracked = np.concatenate([tracked, new])
        hinge.lam = np.concatenate([hinge.lam, np.full(len(new), alpha)])
        return (x, np.concatenate([sl, np.maximum(h[new], 0.0)]), f, g, h, J)

    f, g, h, J = evaluate(x0)
    f_init = true_cost(f, h)
    pt = track((x0.copy(), np.zeros(0), f, g, h, J), h)
    B = curvature(x0) if hessian is not None else np.eye(N)
    # the start itself is the fallback answer whenever it is feasible
    start_ok = float(np.maximum(velocity(x0), 0.0).max(initial=0.0)) <= cfg.feasibility_tol
    best = (f_init if start_ok else np.inf, x0.copy())
    iterations = 0
    viol_prev = np.inf
    converged = False
    message = "iteration limit"
    pg = np.inf
    outer = 0
    lm = cfg.damping
    grow = 2.0

    for outer in range(1, cfg.max_outer + 1):
        phi, gphi = merit(pt)
        while iterations < cfg.max_iterations:
            x, sl = pt[0], pt[1]
            zlo = np.concatenate([lo - x, -sl])
            zhi = np.concatenate([hi - x, np.full(len(sl), np.inf)])
            if _projected_gradient(np.zeros_like(zlo), gphi, zlo, zhi) \
                    <= 0.1 * cfg.optimality_tol:
                break
            dz, pred = _model_step(pt, gphi, B, lm, vel, hinge, tracked, velocity, G_vel,
                                   zlo, zhi, cfg.max_qp_iterations)
            iterations += 1
            if pred <= 1e-15 * (1.0 + abs(phi)):
                if lm <= cfg.damping:
                    break
                lm = cfg.damping
                continue
            x_new = np.clip(x + dz[:N], lo, hi)
            s_new = np.maximum(sl + dz[N:], 0.0)
            f_new, g_new, h_new, J_new = evaluate(x_new)
            trial = (x_new, s_new, f_new, g_new, h_new, J_new)
            phi_new, gphi_new = merit(trial)
            ratio = (phi - phi_new) / pred
            if ratio > 1e-4:
                if hessian is not None:
                    B = curvature(x_new)
                else:
                    B = _bfgs_update(B, x_new - x, g_new - pt[3])
                pt = trial
                lm = max(cfg.damping, lm * max(1.0 / 3.0, 1.0 - (2.0 * min(ratio, 1.0) - 1.0) ** 3))
                grow = 2.0
            else:
                lm = max(grow * lm, 1e-6 * max(1.0, float(np.abs(np.diag(B)).max())))
                grow *= 2.0
            n_tracked = len(tracked)
            pt = track(pt, np.maximum(pt[4], h_new))
            if len(tracked) != n_tracked or ratio > 1e-4:
                phi, gphi = merit(pt)
            if lm > 1e12:
                break
        x, sl, f, g, h, J = pt
        c_vel = velocity(x)
        c_hinge = h[tracked] - sl
        viol = float(np.maximum(c_vel, 0.0).max(initial=0.0))
        viol_hinge = float(np.maximum(c_hinge, 0.0).max(initial=0.0))
        vel.lam = np.maximum(0.0, vel.lam + vel.mu * c_vel)
        hinge.lam = np.maximum(0.0, hinge.lam + hinge.mu * c_hinge)
        phi, gphi = merit(pt)
        zlo = np.concatenate([lo - x, -sl])
        zhi = np.concatenate([hi - x, np.full(len(sl), np.inf)])
        pg = _projected_gradient(np.zeros_like(zlo), gphi, zlo, zhi)
        cost = true_cost(f, h)
        log.debug("outer %d: cost=%.6g viol=%.3g hinge=%.3g pg=%.3g mu=%.3g it=%d tracked=%d",
                  outer, cost, viol, viol_hinge, pg, vel.mu, iterations, len(tracked))
        if viol <= cfg.feasibility_tol and cost <= best[0]:
            best = (cost, x.copy())
        if viol <= cfg.feasibility_tol and viol_hinge <= cfg.feasibility_tol \
                and pg <= cfg.optimality_tol:
            converged = True
            message = "converged"
            break
        if iterations >= cfg.max_iterations:
            break
        if viol > 0.25 * viol_prev:
            vel.mu = min(vel.mu * cfg.penalty_growth, cfg.penalty_max)
        if viol_hinge > cfg.feasibility_tol:
            hinge.mu = hinge.mu * cfg.penalty_growth
        viol_prev = viol

    if not converged and message == "iteration limit" and iterations < cfg.max_iterations:
        message = "stalled: no further decrease of the model"
    if not np.isfinite(best[0]):
        # never feasible: return the last iterate, flagged as non-converged
        best = (true_cost(pt[2], pt[4]), pt[0])
        converged = False
        message = "infeasible: " + message
    elif best[0] > f_init:
        # the fixed initial guess is feasible; never return something worse
        best = (f_init, x0.copy())
    out = Trajectory(unpack(best[1]), dt)
    max_viol = float(velocity_residuals(out, v_max).max(initial=0.0))
    if max_viol > cfg.feasibility_tol:
        converged = False
    report = SolveReport(converged=converged, iterations=iterations, final_cost=float(best[0]),
                         max_constraint_violation=max_viol,
                         wall_time=time.perf_counter() - t_start, outer_iterations=outer,
                         projected_gradient=float(pg), message=message)
    log.info("solve: %s after %d iterations, cost %.6g, violation %.3g",
             message, iterations, report.final_cost, max_viol)
    return out, report


def _model_step(pt, gphi, B, lm, vel, hinge, tracked, velocity, G_vel, zlo, zhi, max_qp):
    """Step ``dz = (dx, ds)`` minimising the local model over the box, and its decrease.

    The model is quadratic in the objective (curvature ``B + lm I``), linear
    in the slacks, and keeps the augmented-Lagrangian terms of the
    velocity limits (exactly linear) and of the linearised hinge rows exact.
    """
    x, sl, f, g, h, J = pt
    N, m = len(x), len(sl)
    c_vel0 = velocity(x)
    c_h0 = h[tracked] - sl
    G_h = np.hstack([J[tracked], -np.eye(m)])
    G_v = np.hstack([G_vel, np.zeros((len(G_vel), m))])
    p_v0, sv0 = vel.value(c_vel0)
    p_h0, sh0 = hinge.value(c_h0)
    g_lin = gphi - G_v.T @ sv0 - G_h.T @ sh0
    Bl = np.zeros((N + m, N + m))
    Bl[:N, :N] = B
    Bl[np.diag_indices_from(Bl)] += lm

    def model(dz):
        p_v, sv = vel.value(c_vel0 + G_v @ dz)
        p_h, sh = hinge.value(c_h0 + G_h @ dz)
        Bd = Bl @ dz
        val = g_lin @ dz + 0.5 * dz @ Bd + (p_v - p_v0) + (p_h - p_h0)
        return val, g_lin + Bd + G_v.T @ sv + G_h.T @ sh, sv > 0, sh > 0

    dz = np.zeros(N + m)
    q, qg, act_v, act_h = model(dz)
    q_new = q
    for _ in range(20):
        if _projected_gradient(dz, qg, zlo, zhi) <= 1e-12:
            break
        H = Bl + vel.mu * G_v.T @ (act_v[:, None] * G_v) \
            + hinge.mu * G_h.T @ (act_h[:, None] * G_h)
        step = box_qp(H, qg, zlo - dz, zhi - dz, max_iter=max_qp)
        groups = [(vel.lam + vel.mu * (c_vel0 + G_v @ dz), vel.mu * (G_v @ step), vel.mu),
                  (hinge.lam + hinge.mu * (c_h0 + G_h @ dz), hinge.mu * (G_h @ step), hinge.mu)]
        Bstep = Bl @ step
        a = _ray_minimiser((g_lin + Bl @ dz) @ step, step @ Bstep, groups)
        if a <= 0.0:
            break
        q_new, qg_new, av_new, ah_new = model(dz + a * step)
        dz = dz + a * step
        done = q - q_new <= 1e-16 * (1.0 + abs(q))
        q, qg, act_v, act_h = q_new, qg_new, av_new, ah_new
        if done:
            break
    return dz, -q


def _ray_minimiser(slope0, curv, groups):
    """Minimiser over ``a`` in ``[0, 1]`` of the convex piecewise-quadratic model along a ray.

    ``slope0`` and ``curv`` are the slope at ``a = 0`` and the curvature of
    the quadratic part. Each group ``(u, w, mu)`` adds
    ``sum(max(0, u + a w)**2) / (2 mu)``, whose slope is piecewise linear
    with breakpoints where ``u + a w`` changes sign.
    """
    def slope(a):
        out = slope0 + a * curv
        for u, w, mu in groups:
            out += float(np.maximum(0.0, u + a * w) @ w) / mu
        return out

    if slope(0.0) >= 0.0:
        return 0.0
    if slope(1.0) <= 0.0:
        return 1.0
    cuts = [np.array([0.0, 1.0])]
    for u, w, _ in groups:
        nz = w != 0
        b = -u[nz] / w[nz]
        cuts.append(b[(b > 0.0) & (b < 1.0)])
    cuts = np.unique(np.concatenate(cuts))
    i, j = 0, len(cuts) - 1
    while j - i > 1:
        k = (i + j) // 2
        if slope(cuts[k]) < 0.0:
            i = k
        else:
            j = k
    # the slope is linear between neighbouring breakpoints
    lo, hi = cuts[i], cuts[j]
    s_lo, s_hi = slope(lo), slope(hi)
    if s_hi <= s_lo:
        return float(hi)
    return float(lo - s_lo * (hi - lo) / (s_hi - s_lo))


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update, keeping ``B`` positive definite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300:
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
