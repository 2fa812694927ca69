"""Named verification suites behind the `verify` CLI subcommand.

Each suite runs a fixed-seed battery of the package's structural checks and
returns per-case (name, margin, passed) rows; margins are printed so a
drifting build shows up as shrinking slack before it fails outright.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functionals as fn
from .matrixflux import FluxTensor, rotation_z
from .potential import (
    DensityField,
    Grid3,
    solve_potential_direct,
    solve_potential_fast,
)

SUITES = ("potential-oracle", "biler", "gradv-bound", "moment-identity", "all")


@dataclass
class CaseResult:
    suite: str
    name: str
    margin: float  # positive means slack remained
    passed: bool


def density_suite(n_cells: int = 32, half_width: float = 4.0) -> list[tuple[str, DensityField]]:
    """The stock 12-density battery: Gaussians, balls, bumps, random fields."""
    grid = Grid3(n_cells, half_width)
    x, y, z = grid.meshes()
    r2 = x * x + y * y + z * z

    def gaussian(mass, sig, center=(0.0, 0.0, 0.0)):
        sig = np.asarray(sig, dtype=float) * np.ones(3)
        c = np.asarray(center, dtype=float)
        norm = mass / ((2 * math.pi) ** 1.5 * float(np.prod(sig)))
        return norm * np.exp(
            -0.5 * (((x - c[0]) / sig[0]) ** 2 + ((y - c[1]) / sig[1]) ** 2 + ((z - c[2]) / sig[2]) ** 2)
        )

    def ball(mass, radius):
        rho = mass / (4.0 / 3.0 * math.pi * radius**3)
        return np.where(r2 <= radius * radius, rho, 0.0)

    rng = np.random.default_rng(2024)

    def smooth_random(seed):
        rng_l = np.random.default_rng(seed)
        raw = rng_l.random((n_cells, n_cells, n_cells))
        # heavy smoothing + compact envelope keeps the field grid-resolved
        for _ in range(12):
            sm = raw.copy()
            for ax in range(3):
                sm += 0.5 * (np.roll(raw, 1, axis=ax) + np.roll(raw, -1, axis=ax))
            raw = sm / 4.0
        envelope = np.exp(-r2 / (2.0 * (half_width / 3.5) ** 2))
        return raw * envelope

    del rng
    shell = np.exp(-((np.sqrt(r2) - 1.0) ** 2) / (2 * 0.3**2))
    fields = [
        ("gaussian_s0.5", gaussian(1.0, 0.5)),
        ("gaussian_s1.0", gaussian(1.0, 1.0)),
        ("gaussian_s1.5_m2", gaussian(2.0, 1.5 * 0.6)),
        ("aniso_gaussian", gaussian(1.0, (0.5, 0.7, 1.0))),
        ("strong_aniso", gaussian(1.0, (0.3, 0.3, 1.5))),
        ("offset_gaussian", gaussian(1.0, 0.6, center=(0.5, -0.3, 0.2))),
        ("ball_r1", ball(1.0, 1.0)),
        ("ball_r1.5_m0.5", ball(0.5, 1.5)),
        ("two_bump", gaussian(0.6, 0.4, center=(0.8, 0, 0)) + gaussian(0.4, 0.4, center=(-0.8, 0, 0))),
        ("smooth_random_1", smooth_random(1)),
        ("smooth_random_2", smooth_random(2)),
        ("gaussian_shell", shell),
    ]
    return [(name, DensityField(grid, vals)) for name, vals in fields]


def suite_potential_oracle(seeds: int = 3) -> list[CaseResult]:
    """Fast vs direct solver agreement plus the closed-form Gaussian test."""
    from scipy.special import erf

    out = []
    grid = Grid3(16, 2.0)
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        u = DensityField(grid, rng.random((16, 16, 16)))
        fast = solve_potential_fast(u)
        direct = solve_potential_direct(u)
        rel = max(
            float(np.max(np.abs(fast.v - direct.v)) / np.max(np.abs(direct.v))),
            float(
                np.max(np.abs(fast.gradient_magnitude() - direct.gradient_magnitude()))
                / np.max(direct.gradient_magnitude())
            ),
        )
        out.append(CaseResult("potential-oracle", f"fast_vs_direct_seed{seed}", 1e-10 - rel, rel <= 1e-10))

    sigma, m_tot = 1.0, 1.0
    ggrid = Grid3(64, 8.0 * sigma)
    x, y, z = ggrid.meshes()
    r = np.sqrt(x * x + y * y + z * z)
    u = DensityField(
        ggrid, m_tot * (2 * math.pi * sigma**2) ** -1.5 * np.exp(-(r**2) / (2 * sigma**2))
    )
    pot = solve_potential_fast(u)
    v_exact = m_tot * erf(r / (sigma * math.sqrt(2))) / (4 * math.pi * r)
    menc = m_tot * (
        erf(r / (math.sqrt(2) * sigma)) - math.sqrt(2 / math.pi) * (r / sigma) * np.exp(-(r**2) / (2 * sigma**2))
    )
    g_exact = menc / (4 * math.pi * r**2)
    ev = float(np.max(np.abs(pot.v - v_exact)) / v_exact.max())
    eg = float(np.max(np.abs(pot.gradient_magnitude() - g_exact)) / g_exact.max())
    out.append(CaseResult("potential-oracle", "gaussian_closed_form_v", 1e-2 - ev, ev <= 1e-2))
    out.append(CaseResult("potential-oracle", "gaussian_closed_form_grad", 1e-2 - eg, eg <= 1e-2))
    return out


def suite_biler() -> list[CaseResult]:
    """Mass-moment-interaction inequality over the stock density battery."""
    out = []
    for name, u in density_suite():
        lhs, rhs, ok = fn.biler_check(u)
        out.append(CaseResult("biler", name, rhs / lhs - 1.0, ok))
    return out


def suite_gradv_bound() -> list[CaseResult]:
    """Measured max |grad v| never exceeds the optimized analytic bound."""
    out = []
    for name, u in density_suite():
        pot = solve_potential_fast(u)
        measured = float(pot.gradient_magnitude().max())
        bound, _ = fn.gradv_sup_bound(u)
        out.append(CaseResult("gradv-bound", name, bound / measured - 1.0, measured <= bound))
    return out


def suite_moment_identity() -> list[CaseResult]:
    """Identity vs symmetrized direct sum, and the identity-to-bound chain."""
    out = []
    flux_rot = FluxTensor.from_matrix(rotation_z(math.pi / 4))
    flux_id = FluxTensor.from_matrix(np.eye(3))
    chi = 1.0

    # identity route equals the symmetrized double-sum route (exchange of x, y)
    for name, u in density_suite(n_cells=16, half_width=4.0)[:4]:
        ident = fn.moment_rhs_identity(u, flux_rot, chi)
        adv_direct = fn.interaction_symmetrized_direct(u, flux_rot.u_orth)
        direct = 2.0 * flux_rot.trace_pinv * u.mass + chi * adv_direct
        rel = abs(ident - direct) / max(abs(direct), 1e-300)
        out.append(CaseResult("moment-identity", f"symmetrized_{name}", 1e-2 - rel, rel <= 1e-2))

    # with U = I the advective term collapses to -chi J / (n omega_n)
    for name, u in density_suite()[:4]:
        ident = fn.moment_rhs_identity(u, flux_id, chi)
        collapsed = 6.0 * u.mass - chi / (4.0 * math.pi) * fn.interaction_integral(u)
        rel = abs(ident - collapsed) / max(abs(collapsed), 1e-300)
        out.append(CaseResult("moment-identity", f"collapsed_{name}", 1e-2 - rel, rel <= 1e-2))

    # inequality chain: identity <= bound within discretization slack
    for name, u in density_suite():
        w = fn.weighted_moment(u, flux_rot.p_inv)
        ident = fn.moment_rhs_identity(u, flux_rot, chi)
        bound = fn.moment_rhs_bound(w, u.mass, flux_rot, chi)
        slack = 0.02 * max(abs(ident), abs(bound))
        out.append(CaseResult("moment-identity", f"chain_{name}", (bound + slack) - ident, ident <= bound + slack))
    return out


def run_suite(name: str) -> list[CaseResult]:
    if name == "potential-oracle":
        return suite_potential_oracle()
    if name == "biler":
        return suite_biler()
    if name == "gradv-bound":
        return suite_gradv_bound()
    if name == "moment-identity":
        return suite_moment_identity()
    if name == "all":
        results = []
        for sub in SUITES[:-1]:
            results.extend(run_suite(sub))
        return results
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
