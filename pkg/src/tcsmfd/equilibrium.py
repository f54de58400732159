"""Modal equilibrium of the credit scheme: logit demand, linearized
quadratic subproblems, the fixed-point loop, and the MSA benchmark.

At shares x and credit price p the generalized costs per traveler are

    car:  alpha * T_i(x) + (tau - kappa) * p
    PT:   alpha * T_pt_i - kappa * p

(a car trip burns tau credits out of the kappa allowance; a PT traveler
sells the allowance).  Demand follows a binary logit with sensitivity theta.
An equilibrium is a fixed point x = psi(x, p) together with market clearing:
the cap tau*sum(gamma x) <= kappa*sum(gamma) holds, p >= 0, and
p * sum(gamma (kappa - tau x)) = 0.

The solver linearizes psi around the current iterate and minimizes

    J = 0.5 * || (grad_psi - I_x) dz + psi0 - x0 ||^2
        + eta * p * mean_gamma(kappa - tau * x)

over a trust box (plus the cap row), which is a QP in dz = (dx, dp).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .gradients import travel_time_gradient
from .qp import QpSolution, solve_qp
from .scenario import Scenario, TcsParams
from .simulator import simulate

__all__ = [
    "ModalState",
    "QpProblem",
    "EquilibriumReport",
    "MsaReport",
    "logit_choice",
    "logit_costs",
    "logit_gradient",
    "build_qp",
    "j_value",
    "equilibrium_solve",
    "msa_solve",
]


@dataclass
class ModalState:
    """Car shares per group plus the credit price."""

    x: np.ndarray
    p: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if np.any(self.x < 0) or np.any(self.x > 1) or not np.all(np.isfinite(self.x)):
            raise ValueError("shares must be finite and within [0, 1]")
        if not (self.p >= 0):
            raise ValueError("price must be >= 0")


def logit_choice(t_car, t_pt, p, params: TcsParams):
    """Car probability psi of the binary logit at the given travel times.

    Accepts scalars or arrays.  Uses the logistic form of the two-alternative
    logit, which is stable for any cost magnitudes.
    """
    t_car = np.asarray(t_car, dtype=float)
    t_pt = np.asarray(t_pt, dtype=float)
    cost_gap = params.alpha * (t_car - t_pt) + params.tau * p  # C_car - C_pt
    out = expit(-params.theta * cost_gap)
    return float(out) if out.ndim == 0 else out


def logit_costs(t_car, t_pt, p, params: TcsParams):
    """Generalized costs (car, PT) per traveler in EUR."""
    c_car = params.alpha * np.asarray(t_car, dtype=float) + (params.tau - params.kappa) * p
    c_pt = params.alpha * np.asarray(t_pt, dtype=float) - params.kappa * p
    return c_car, c_pt


def logit_gradient(psi0, dT, params: TcsParams) -> np.ndarray:
    """Jacobian of psi wrt (x_1..x_N, p), shape (N, N+1).

    Share columns: psi0_i (psi0_i - 1) * theta * alpha * dT[i][j].
    Price column:  psi0_i (psi0_i - 1) * theta * tau.
    Saturated probabilities (exactly 0 or 1) produce an exactly zero row.
    """
    psi0 = np.asarray(psi0, dtype=float)
    n = len(psi0)
    w = psi0 * (psi0 - 1.0) * params.theta
    out = np.empty((n, n + 1))
    out[:, :n] = (w * params.alpha)[:, None] * dT
    out[:, n] = w * params.tau
    return out


@dataclass
class QpProblem:
    """One linearized subproblem in the step variable dz = (dx_1..dx_N, dp)."""

    P: np.ndarray
    q: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cap_coeffs: np.ndarray | None
    cap_rhs: float | None
    eps_x: float
    eps_p: float

    def solve(self, tol=1e-10, max_iter=500) -> QpSolution:
        return solve_qp(
            self.P, self.q, self.lower, self.upper,
            a=self.cap_coeffs, b=self.cap_rhs, tol=tol, max_iter=max_iter,
        )


def build_qp(x0, p0, psi0, grad_psi, gammas, params: TcsParams, k: int,
             tcs: bool = True) -> QpProblem:
    """Assemble the QP of iteration k around (x0, p0).

    G = grad_psi - I_x  with I_x = [I, 0].  Then

        P = G'G + eta * I_p,   q = G'(psi0 - x0) + eta * i_p

    where the I_p / i_p blocks come from expanding the market-clearing term
    eta * p * mean_gamma(kappa - tau x) in the step variable.  Trust bounds
    are intersected with the feasibility box; the aggregate cap row is either
    gamma-weighted (default) or the unweighted variant, per
    ``params.cap_constraint``.  With ``tcs=False`` the price coordinate is
    frozen and the cap row dropped (plain congestion-pricing / SUE mode).
    """
    x0 = np.asarray(x0, dtype=float)
    psi0 = np.asarray(psi0, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    n = len(x0)
    if k < 1:
        raise ValueError("iteration index starts at 1")

    G = grad_psi.copy()
    G[:, :n] -= np.eye(n)
    P = G.T @ G
    q = G.T @ (psi0 - x0)

    g_tot = float(gammas.sum())
    if tcs:
        # market-term weights must match the cap variant, else the QP model
        # is stationary where the objective is not
        if params.cap_constraint == "printed":
            w = np.full(n, 1.0 / n)
        else:
            w = gammas / g_tot
        ip_vec = np.zeros(n + 1)
        ip_vec[:n] = -w * params.tau * p0
        ip_vec[n] = float(w @ (params.kappa - params.tau * x0))
        q = q + params.eta * ip_vec
        Ip = np.zeros((n + 1, n + 1))
        Ip[:n, n] = -w * params.tau
        Ip[n, :n] = -w * params.tau
        P = P + params.eta * Ip

    eps_x = params.eps_value(k)
    eps_p = params.eps_value(k)
    lower = np.empty(n + 1)
    upper = np.empty(n + 1)
    lower[:n] = np.maximum(-x0, -eps_x)
    upper[:n] = np.minimum(1.0 - x0, eps_x)
    if tcs:
        lower[n] = max(-p0, -eps_p)
        upper[n] = eps_p
    else:
        lower[n] = 0.0
        upper[n] = 0.0

    cap_coeffs = None
    cap_rhs = None
    if tcs:
        cap_coeffs = np.zeros(n + 1)
        if params.cap_constraint == "gamma-weighted":
            cap_coeffs[:n] = params.tau * gammas
            cap_rhs = params.kappa * g_tot - params.tau * float(gammas @ x0)
        else:
            cap_coeffs[:n] = params.tau
            cap_rhs = params.kappa * n - params.tau * float(x0.sum())
        if cap_rhs < -1e-9 * max(1.0, abs(params.kappa) * g_tot):
            raise AssertionError(
                "starting point violates the credit cap: zero step infeasible"
            )
        cap_rhs = max(cap_rhs, 0.0)

    return QpProblem(
        P=P, q=q, lower=lower, upper=upper,
        cap_coeffs=cap_coeffs, cap_rhs=cap_rhs, eps_x=eps_x, eps_p=eps_p,
    )


def _mean_slack(x, gammas, params: TcsParams) -> float:
    # Per-capita credit slack under the active cap variant.  The
    # "printed" variant counts groups, not travelers.
    if params.cap_constraint == "printed":
        n = x.shape[0]
        return float(params.kappa * n - params.tau * float(np.sum(x))) / n
    return float(gammas @ (params.kappa - params.tau * x)) / float(gammas.sum())


def j_value(x, p, psi, gammas, params: TcsParams, tcs: bool = True) -> float:
    """Objective J at a point, zero step: equilibrium gap plus the
    market-clearing product (per-capita)."""
    gap = float(0.5 * np.sum((psi - x) ** 2))
    if not tcs:
        return gap
    return gap + params.eta * p * _mean_slack(x, gammas, params)


@dataclass
class EquilibriumReport:
    """Solution plus convergence diagnostics of one equilibrium run."""

    state: ModalState
    converged: bool
    iterations: int
    j_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    mcc_trace: list = field(default_factory=list)
    cap_slack: float = float("nan")   # credits, >= 0 when the cap holds
    car_times: np.ndarray | None = None
    psis: np.ndarray | None = None
    cost_car: np.ndarray | None = None
    cost_pt: np.ndarray | None = None
    cap_constraint: str = "gamma-weighted"
    tcs: bool = True
    message: str = ""

    @property
    def j_final(self) -> float:
        return self.j_trace[-1] if self.j_trace else float("nan")

    @property
    def residual_final(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else float("nan")


def _mcc_residual(p, x, gammas, params):
    # |p * slack| per capita, slack in the units of the active cap variant
    return abs(p * _mean_slack(x, gammas, params))


def equilibrium_solve(
    scenario: Scenario,
    params: TcsParams,
    x_init=None,
    p_init=None,
    tcs: bool = True,
    x_tol: float = 1e-4,
    qp_tol: float = 1e-10,
) -> EquilibriumReport:
    """Fixed-point loop: simulate, linearize, step by the QP solution.

    Stops once J < j_goal and the fixed-point residual ||x - psi||_inf is
    below ``x_tol`` (J alone leaves the residual too loose), or after
    ``max_iters`` iterations, in which case the best-J iterate is returned
    and flagged.  With ``tcs=False`` the price is held at ``p_init`` and the
    cap/market-clearing machinery is disabled (plain logit SUE under a fixed
    price), which the same loop solves.
    """
    n = scenario.n
    gammas = scenario.gammas
    g_tot = float(gammas.sum())
    x = np.zeros(n) if x_init is None else np.asarray(x_init, dtype=float).copy()
    if x.shape != (n,) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("x_init must be N shares within [0, 1]")
    if p_init is None:
        p = params.p0 if tcs else 0.0
    else:
        p = float(p_init)
    if p < 0:
        raise ValueError("p_init must be >= 0")
    if tcs:
        if params.cap_constraint == "printed":
            used, supply = params.tau * float(np.sum(x)), params.kappa * n
        else:
            used, supply = params.tau * float(gammas @ x), params.kappa * g_tot
        if used > supply + 1e-9 * max(supply, 1.0):
            raise ValueError("x_init violates the credit cap")

    j_trace: list[float] = []
    res_trace: list[float] = []
    mcc_trace: list[float] = []
    best = None  # (j, x, p, psi, t_car)
    converged = False
    k = 0
    psi = np.zeros(n)
    t_car = np.zeros(n)

    for k in range(1, params.max_iters + 1):
        sim = simulate(scenario, x)
        t_car = sim.car_times
        psi = logit_choice(t_car, scenario.pt_times, p, params)
        j = j_value(x, p, psi, gammas, params, tcs=tcs)
        res = float(np.max(np.abs(psi - x)))
        j_trace.append(j)
        res_trace.append(res)
        mcc_trace.append(_mcc_residual(p, x, gammas, params) if tcs else 0.0)
        if best is None or j < best[0]:
            best = (j, x.copy(), float(p), psi.copy(), t_car.copy())
        if j < params.j_goal and res < x_tol:
            converged = True
            break

        gm = travel_time_gradient(scenario, sim)
        grad_psi = logit_gradient(psi, gm.dT, params)
        prob = build_qp(x, p, psi, grad_psi, gammas, params, k, tcs=tcs)
        sol = prob.solve(tol=qp_tol)
        x = np.clip(x + sol.z[:n], 0.0, 1.0)
        p = max(p + float(sol.z[n]), 0.0)

    if not converged and best is not None:
        _, x, p, psi, t_car = best

    c_car, c_pt = logit_costs(t_car, scenario.pt_times, p, params)
    if params.cap_constraint == "printed":
        slack = params.kappa * n - params.tau * float(np.sum(x))
    else:
        slack = params.kappa * g_tot - params.tau * float(gammas @ x)
    return EquilibriumReport(
        state=ModalState(x=x, p=p),
        converged=converged,
        iterations=k,
        j_trace=j_trace,
        residual_trace=res_trace,
        mcc_trace=mcc_trace,
        cap_slack=slack,
        car_times=t_car,
        psis=psi,
        cost_car=c_car,
        cost_pt=c_pt,
        cap_constraint=params.cap_constraint,
        tcs=tcs,
        message="" if converged else "hit max_iters; returning best-J iterate",
    )


@dataclass
class MsaReport:
    """Method-of-successive-averages run at a fixed price."""

    x: np.ndarray
    p: float
    iterations: int
    residual_trace: list
    cap_violated: bool
    car_credits: float     # tau * sum(gamma x)
    credit_supply: float   # kappa * sum(gamma)

    @property
    def residual_final(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else float("nan")


def msa_solve(scenario: Scenario, params: TcsParams, p_fixed: float,
              iters: int = 50, x_init=None) -> MsaReport:
    """Averaging fixed-point iteration x <- x + (psi(x, p) - x) / k.

    The price is an input, not an unknown: MSA cannot discover the market
    price.  The cap is not enforced either; the report flags a violated cap
    instead of preventing it.
    """
    n = scenario.n
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if p_fixed < 0:
        raise ValueError("price must be >= 0")
    x = np.zeros(n) if x_init is None else np.asarray(x_init, dtype=float).copy()
    if x.shape != (n,) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("x_init must be N shares within [0, 1]")
    residuals = []
    for k in range(1, iters + 1):
        sim = simulate(scenario, x)
        psi = logit_choice(sim.car_times, scenario.pt_times, p_fixed, params)
        residuals.append(float(np.max(np.abs(psi - x))))
        x = x + (psi - x) / k
    gammas = scenario.gammas
    used = params.tau * float(gammas @ x)
    supply = params.kappa * float(gammas.sum())
    # 1% dead band: a binding-cap equilibrium lands on the cap up to MSA
    # rounding, which must not read as a violation.
    return MsaReport(
        x=x,
        p=float(p_fixed),
        iterations=iters,
        residual_trace=residuals,
        cap_violated=bool(used > supply * 1.01),
        car_credits=used,
        credit_supply=supply,
    )
