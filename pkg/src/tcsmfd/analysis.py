"""Equilibrium diagnostics: uniqueness sampling and local stability.

Uniqueness rests on a monotonicity condition: for any two distinct share
vectors the dot product (T(x1) - T(x2))' diag(gamma) (x1 - x2) should be
strictly positive.  It is checked empirically over Latin-hypercube samples
of the share box.  Stability linearizes the day-to-day adjustment (shares
chase the logit response, the price reacts to excess credit demand) at an
equilibrium and asks every eigenvalue of the Jacobian for a negative real
part.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .eig import eig_values
from .equilibrium import logit_choice, logit_gradient
from .gradients import travel_time_gradient
from .scenario import Scenario, TcsParams
from .simulator import simulate

__all__ = [
    "UniquenessReport",
    "uniqueness_check",
    "stability_jacobian",
    "StabilityReport",
    "stability_check",
    "histogram_rows",
]


@dataclass
class UniquenessReport:
    n_samples: int
    n_pairs: int
    all_pairs: bool
    min_dot: float
    percentiles: dict
    dots: np.ndarray

    @property
    def positive(self) -> bool:
        return bool(self.min_dot > 0.0)


def uniqueness_check(
    scenario: Scenario,
    n_samples: int = 200,
    seed: int = 0,
    max_pairs: int = 1_000_000,
) -> UniquenessReport:
    """Sample share vectors, simulate each, and scan pair dot products.

    All pairs are used when their count stays within ``max_pairs``;
    otherwise a seeded random subset of exactly ``max_pairs`` pairs is drawn
    and the subset size reported (``all_pairs=False``).
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    from scipy.stats import qmc

    sampler = qmc.LatinHypercube(d=scenario.n, seed=seed)
    xs = sampler.random(n=n_samples)
    times = np.empty((n_samples, scenario.n))
    for s in range(n_samples):
        times[s] = simulate(scenario, xs[s]).car_times

    n_all = n_samples * (n_samples - 1) // 2
    g = scenario.gammas
    if n_all <= max_pairs:
        pairs = np.array(list(combinations(range(n_samples), 2)))
        all_pairs = True
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n_samples, size=2 * max_pairs)
        j = rng.integers(0, n_samples, size=2 * max_pairs)
        keep = i < j
        pairs = np.stack([i[keep], j[keep]], axis=1)[:max_pairs]
        all_pairs = False

    dx = xs[pairs[:, 0]] - xs[pairs[:, 1]]
    dt = times[pairs[:, 0]] - times[pairs[:, 1]]
    distinct = np.any(dx != 0.0, axis=1)  # identical share vectors are excluded
    dots = ((dt * dx) @ g)[distinct]

    qs = (0.0, 1.0, 5.0, 25.0, 50.0, 100.0)
    return UniquenessReport(
        n_samples=n_samples,
        n_pairs=int(len(dots)),
        all_pairs=all_pairs,
        min_dot=float(dots.min()),
        percentiles={q: float(np.percentile(dots, q)) for q in qs},
        dots=dots,
    )


def stability_jacobian(grad_psi: np.ndarray, gammas: np.ndarray, tau: float) -> np.ndarray:
    """Jacobian of the day-to-day dynamics at an equilibrium.

    State (x, p) with dx_i/dt = psi_i - x_i and
    dp/dt = sum(gamma_i (tau psi_i - kappa)); rows are built directly from
    the logit Jacobian ``grad_psi`` (shape N x (N+1))."""
    n = grad_psi.shape[0]
    a = np.empty((n + 1, n + 1))
    a[:n, :] = grad_psi
    a[:n, :n] -= np.eye(n)
    a[n, :] = tau * (gammas @ grad_psi)
    return a


@dataclass
class StabilityReport:
    stable: bool
    spectral_abscissa: float
    eigenvalues: np.ndarray
    eig_converged: bool
    jacobian: np.ndarray


def stability_check(scenario: Scenario, params: TcsParams, state) -> StabilityReport:
    """Assemble the Jacobian at an equilibrium state and locate its spectrum.

    The price must be strictly positive (the price dynamics are only defined
    on the binding-cap branch)."""
    if not (state.p > 0):
        raise ValueError("stability analysis needs a binding cap (p > 0)")
    sim = simulate(scenario, state.x)
    psi = logit_choice(sim.car_times, scenario.pt_times, state.p, params)
    gm = travel_time_gradient(scenario, sim)
    grad_psi = logit_gradient(psi, gm.dT, params)
    jac = stability_jacobian(grad_psi, scenario.gammas, params.tau)
    res = eig_values(jac)
    abscissa = float(np.max(res.values.real))
    return StabilityReport(
        stable=bool(abscissa < 0.0 and res.converged),
        spectral_abscissa=abscissa,
        eigenvalues=res.values,
        eig_converged=res.converged,
        jacobian=jac,
    )


def histogram_rows(values: np.ndarray, bins: int = 50):
    """Rows (bin_lo, bin_hi, count) for a histogram export."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    yield ("bin_lo", "bin_hi", "count")
    for i, c in enumerate(counts):
        yield (repr(float(edges[i])), repr(float(edges[i + 1])), int(c))
