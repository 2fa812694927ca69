"""Time integration of the tensorial chemotaxis system on a 3-D grid.

Each step splits the dynamics:

1. solve the free-space potential of the current density and form the drift
   velocity b = chi * A grad(v);
2. conservative first-order upwind advection of u by b (flux form, face
   velocities averaged from the adjacent cells, closed box walls);
3. diffusion over dt: exact spectral heat multiplier exp(-|k|^2 dt) on the
   zero-extended box when the step is large (dt > h^2/6), otherwise an
   explicit 7-point stencil with reflecting walls. The explicit branch is
   what the CFL-limited collapse regime runs on; it is exactly conservative
   and positivity-preserving (nu = dt/h^2 <= 1/6), whereas the spectral
   multiplier applied to under-resolved peaks rings negative at levels far
   above round-off.

The step size adapts to the advective CFL limit; runs stop at t_end, on the
sup-norm blow-up trigger, or when dt collapses below dt_min (both of the
latter report NumericalBlowup with evidence attached).
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .errors import CflViolation, ConfigInvalid, NonFiniteField, SupportTooLarge
from .functionals import (
    DiagnosticsRecord,
    compute_record,
    fill_dwdt_measured,
    write_csv,
)
from .matrixflux import FluxTensor, load_matrix, parse_matrix_inline
from .potential import (
    DensityField,
    Grid3,
    _FFT_WORKERS,
    _tables_for,
    load_field,
    save_field,
    solve_potential_gradient,
)

logger = logging.getLogger(__name__)

# clamp guard for the spectral diffusion branch: negatives beyond this times
# the sup norm indicate an under-resolved field reached the spectral path
SPECTRAL_CLAMP_LIMIT = 1e-13


@dataclass(frozen=True)
class InitialData:
    """Descriptor for the initial density: gaussian, ball, or snapshot file."""

    kind: str  # "gaussian" | "ball" | "file"
    mass: float = 1.0
    sigma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    path: str | None = None


@dataclass(frozen=True)
class SimConfig:
    """Full experiment description."""

    matrix: np.ndarray
    chi: float
    n_cells: int
    half_width: float
    initial: InitialData
    t_end: float
    epsilon: float | None = None
    cfl: float = 0.4
    dt_max: float = 1e-2
    dt_min: float = 1e-8
    blowup_factor: float = 1e3
    diagnostics_every: int = 10
    output_dir: str | None = None
    snapshot_times: tuple[float, ...] = ()

    def validate(self) -> None:
        if self.chi < 0.0:
            raise ConfigInvalid(f"chi must be >= 0, got {self.chi}")
        if not (self.t_end > 0.0):
            raise ConfigInvalid(f"t_end must be positive, got {self.t_end}")
        if not (0.0 < self.cfl < 1.0):
            raise ConfigInvalid(f"cfl must lie in (0, 1), got {self.cfl}")
        if not (self.dt_min < self.dt_max):
            raise ConfigInvalid(f"need dt_min < dt_max, got {self.dt_min} >= {self.dt_max}")
        if not (self.blowup_factor > 1.0):
            raise ConfigInvalid(f"blowup_factor must exceed 1, got {self.blowup_factor}")
        if self.diagnostics_every < 1:
            raise ConfigInvalid("diagnostics_every must be >= 1")
        if self.initial.kind not in ("gaussian", "ball", "file"):
            raise ConfigInvalid(f"unknown initial data kind {self.initial.kind!r}")
        if self.epsilon is not None and self.epsilon <= 0.0:
            raise ConfigInvalid(f"epsilon must be positive, got {self.epsilon}")
        Grid3(self.n_cells, self.half_width)  # raises on bad grid parameters

    @property
    def grid(self) -> Grid3:
        return Grid3(self.n_cells, self.half_width)


@dataclass
class SimOutcome:
    """Result of a run: terminal status, final time, and diagnostics."""

    status: str  # "CompletedToTEnd" | "NumericalBlowup" | "Aborted"
    t_final: float
    records: list[DiagnosticsRecord]
    steps: int
    dt_at_stop: float
    sup_growth_factor: float
    min_density: float = 0.0  # smallest cell value seen across all steps
    message: str = ""


def make_initial_data(
    initial: InitialData, grid: Grid3, epsilon: float | None = None
) -> DensityField:
    """Sample the initial density at cell centers.

    A rescale factor applies eps^(-3) u0(x/eps) by analytic re-evaluation of
    the descriptor (widths, radius and center scale by eps); snapshot files
    cannot be rescaled this way.
    """
    if initial.kind == "file":
        if epsilon is not None:
            raise ConfigInvalid("epsilon rescaling is not supported for file initial data")
        values, fgrid, _ = load_field(initial.path)
        if fgrid.n_cells != grid.n_cells or abs(fgrid.half_width - grid.half_width) > 1e-12:
            raise ConfigInvalid(
                f"snapshot grid ({fgrid.n_cells}, {fgrid.half_width}) does not match "
                f"configured grid ({grid.n_cells}, {grid.half_width})"
            )
        u = DensityField(grid, values)
    else:
        if initial.mass <= 0.0:
            raise ConfigInvalid(f"initial mass must be positive, got {initial.mass}")
        eps = 1.0 if epsilon is None else epsilon
        center = np.asarray(initial.center, dtype=float) * eps
        x, y, z = grid.meshes()
        if initial.kind == "gaussian":
            sig = np.asarray(initial.sigma, dtype=float) * eps
            if np.any(sig <= 0.0):
                raise ConfigInvalid(f"gaussian widths must be positive, got {tuple(sig)}")
            norm = initial.mass / ((2.0 * math.pi) ** 1.5 * float(np.prod(sig)))
            vals = norm * np.exp(
                -0.5
                * (
                    ((x - center[0]) / sig[0]) ** 2
                    + ((y - center[1]) / sig[1]) ** 2
                    + ((z - center[2]) / sig[2]) ** 2
                )
            )
        else:  # ball
            rad = initial.radius * eps
            if rad <= 0.0:
                raise ConfigInvalid(f"ball radius must be positive, got {rad}")
            rho = initial.mass / (4.0 / 3.0 * math.pi * rad**3)
            r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
            vals = np.where(r2 <= rad * rad, rho, 0.0)
        u = DensityField(grid, vals)
    from .functionals import boundary_mass_fraction  # local to avoid cycle at import

    frac = boundary_mass_fraction(u)
    if frac >= 1e-6:
        raise SupportTooLarge(
            f"initial data leaks into the boundary shell (fraction {frac:.3e} >= 1e-6); "
            "enlarge the box or shrink the data"
        )
    return u


def _drift_velocity(
    u: DensityField, flux: FluxTensor, chi: float, pot=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if pot is None:
        gx, gy, gz = solve_potential_gradient(u)
    else:
        gx, gy, gz = pot.gx, pot.gy, pot.gz
    a = flux.a
    bx = chi * (a[0, 0] * gx + a[0, 1] * gy + a[0, 2] * gz)
    by = chi * (a[1, 0] * gx + a[1, 1] * gy + a[1, 2] * gz)
    bz = chi * (a[2, 0] * gx + a[2, 1] * gy + a[2, 2] * gz)
    return bx, by, bz


def _face_velocities(b: np.ndarray, ax: int) -> np.ndarray:
    bm = np.moveaxis(b, ax, 0)
    return 0.5 * (bm[1:] + bm[:-1])


def _outflow_rate(bfaces: list[np.ndarray], shape: tuple[int, ...]) -> float:
    """Max over cells of the summed outgoing face speeds (exact positivity rate)."""
    out = np.zeros(shape)
    for ax, bf in enumerate(bfaces):
        om = np.moveaxis(out, ax, 0)
        om[:-1] += np.maximum(bf, 0.0)  # outflow through the right face
        om[1:] += np.maximum(-bf, 0.0)  # outflow through the left face
    return float(out.max())


def _advect(u: np.ndarray, bfaces: list[np.ndarray], dt: float, h: float) -> np.ndarray:
    """Flux-form upwind transport; wall faces carry no flux, so mass telescopes."""
    un = u.copy()
    for ax, bf in enumerate(bfaces):
        ua = np.moveaxis(u, ax, 0)
        flux = np.where(bf > 0.0, ua[:-1], ua[1:]) * bf
        duo = np.moveaxis(un, ax, 0)
        duo[:-1] -= flux * (dt / h)
        duo[1:] += flux * (dt / h)
    return un


def _diffuse(values: np.ndarray, grid: Grid3, dt: float) -> np.ndarray:
    h = grid.h
    nu = dt / (h * h)
    if nu <= 1.0 / 6.0:
        lap = -6.0 * values
        for ax in range(3):
            ua = np.moveaxis(values, ax, 0)
            la = np.moveaxis(lap, ax, 0)
            la[1:] += ua[:-1]
            la[0] += ua[0]
            la[:-1] += ua[1:]
            la[-1] += ua[-1]
        return values + nu * lap
    n = grid.n_cells
    m = 2 * n
    pad = np.zeros((m, m, m))
    pad[:n, :n, :n] = values
    uh = sfft.rfftn(pad, workers=_FFT_WORKERS)
    uh *= np.exp(-_tables_for(grid).k_squared * dt)
    out = sfft.irfftn(uh, s=(m, m, m), workers=_FFT_WORKERS)[:n, :n, :n]
    mn = float(out.min())
    if mn < 0.0:
        sup = float(out.max())
        if mn < -SPECTRAL_CLAMP_LIMIT * sup:
            logger.warning(
                "spectral diffusion clamped negatives at %.3e of sup (field under-resolved)",
                mn / sup if sup > 0 else mn,
            )
        np.maximum(out, 0.0, out=out)
    return out


def step(u: DensityField, flux: FluxTensor, chi: float, dt: float) -> DensityField:
    """One advection-diffusion step of size dt.

    Raises CflViolation when dt exceeds the exact positivity limit of the
    upwind update (summed outgoing face speeds per cell times dt above h).
    """
    if dt <= 0.0:
        raise CflViolation(f"dt must be positive, got {dt}")
    grid = u.grid
    h = grid.h
    b = _drift_velocity(u, flux, chi)
    bfaces = [_face_velocities(b[ax], ax) for ax in range(3)]
    rate = _outflow_rate(bfaces, u.values.shape)
    if dt * rate > h:
        raise CflViolation(
            f"dt = {dt:.3e} exceeds the advective limit {h / rate:.3e} (cfl 1.0)"
        )
    adv = _advect(u.values, bfaces, dt, h)
    out = _diffuse(adv, grid, dt)
    return DensityField(grid, out)


def run(config: SimConfig, flux: FluxTensor | None = None) -> SimOutcome:
    """Integrate the configured experiment; write artifacts if output_dir is set."""
    config.validate()
    if flux is None:
        flux = FluxTensor.from_matrix(config.matrix)
    grid = config.grid
    h = grid.h
    u = make_initial_data(config.initial, grid, config.epsilon)
    sup0 = float(u.values.max())
    if sup0 <= 0.0:
        raise ConfigInvalid("initial data is identically zero")

    records: list[DiagnosticsRecord] = []
    pending_snapshots = sorted(config.snapshot_times)
    t = 0.0
    steps = 0
    dt = config.dt_max
    status = "CompletedToTEnd"
    message = ""
    min_density = float(u.values.min())

    def _record(state: DensityField, at: float, pot=None) -> None:
        records.append(compute_record(state, flux, config.chi, at, pot=pot))

    def _snapshot(state: DensityField, at: float) -> None:
        if config.output_dir:
            path = os.path.join(config.output_dir, f"u_t{at:.6f}.bin")
            save_field(state.values, grid, path, "u", at)

    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
    _record(u, t)
    logger.info(
        "run start: %d^3 grid, h=%.4g, chi=%.6g, sup0=%.6g, mass=%.12g",
        grid.n_cells, h, config.chi, sup0, u.mass,
    )

    while t < config.t_end:
        if config.chi == 0.0:
            bfaces = None
            dt = config.dt_max
        else:
            b = _drift_velocity(u, flux, config.chi)
            bfaces = [_face_velocities(b[ax], ax) for ax in range(3)]
            b_l1 = float((np.abs(b[0]) + np.abs(b[1]) + np.abs(b[2])).max())
            dt = config.dt_max if b_l1 == 0.0 else min(config.dt_max, config.cfl * h / b_l1)
            rate = _outflow_rate(bfaces, u.values.shape)
            if rate > 0.0:
                dt = min(dt, config.cfl * h / rate)
        if dt < config.dt_min:
            status = "NumericalBlowup"
            message = f"time step collapsed below dt_min ({dt:.3e} < {config.dt_min:.3e})"
            break
        dt = min(dt, config.t_end - t)

        adv = u.values if bfaces is None else _advect(u.values, bfaces, dt, h)
        vals = _diffuse(adv, grid, dt)
        if not np.all(np.isfinite(vals)):
            status = "Aborted"
            message = "non-finite values detected in the density field"
            logger.error("aborting at t=%.6g: %s", t, message)
            break
        u = DensityField(grid, vals)
        min_density = min(min_density, float(vals.min()))
        t += dt
        steps += 1

        while pending_snapshots and t >= pending_snapshots[0]:
            _snapshot(u, t)
            pending_snapshots.pop(0)
        if steps % config.diagnostics_every == 0:
            _record(u, t)
        sup = float(u.values.max())
        if sup >= config.blowup_factor * sup0:
            status = "NumericalBlowup"
            message = (
                f"sup norm reached {sup / sup0:.1f} x initial "
                f"(threshold {config.blowup_factor:g})"
            )
            break

    if not records or records[-1].t < t:
        _record(u, t)
    fill_dwdt_measured(records)
    growth = float(u.values.max()) / sup0
    outcome = SimOutcome(
        status=status,
        t_final=t,
        records=records,
        steps=steps,
        dt_at_stop=dt,
        sup_growth_factor=growth,
        min_density=min_density,
        message=message,
    )
    logger.info(
        "run end: %s at t=%.6g after %d steps (growth %.1fx, dt %.3e)",
        status, t, steps, growth, dt,
    )
    if config.output_dir:
        write_csv(records, os.path.join(config.output_dir, "diagnostics.csv"))
        write_outcome(outcome, os.path.join(config.output_dir, "outcome.txt"))
    return outcome


def write_outcome(outcome: SimOutcome, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"status={outcome.status}\n")
        fh.write(f"t_final={outcome.t_final:.12e}\n")
        fh.write(f"steps={outcome.steps}\n")
        fh.write(f"dt_at_stop={outcome.dt_at_stop:.12e}\n")
        fh.write(f"sup_growth_factor={outcome.sup_growth_factor:.12e}\n")
        if outcome.message:
            fh.write(f"message={outcome.message}\n")


# ---------------------------------------------------------------------------
# flat key=value config files ('#' comments); unknown keys are rejected
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "matrix", "matrix_file", "chi", "n_cells", "half_width",
    "init", "mass", "sigma", "center", "radius", "init_file", "epsilon",
    "t_end", "cfl", "dt_max", "dt_min", "blowup_factor",
    "diagnostics_every", "output_dir", "snapshot_times",
}


def parse_config(text: str, base_dir: str = ".") -> SimConfig:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigInvalid(f"line {lineno}: expected key=value, got {stripped!r}")
        key, val = stripped.split("=", 1)
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        kv[key] = val.strip()

    def need(key: str) -> str:
        if key not in kv:
            raise ConfigInvalid(f"missing required key {key!r}")
        return kv[key]

    def floats(key: str) -> tuple[float, ...]:
        return tuple(float(tok) for tok in kv[key].split(",") if tok.strip())

    try:
        if "matrix" in kv:
            matrix = parse_matrix_inline(kv["matrix"])
        elif "matrix_file" in kv:
            matrix = load_matrix(os.path.join(base_dir, kv["matrix_file"]))
        else:
            raise ConfigInvalid("config needs 'matrix' or 'matrix_file'")
        kind = need("init")
        sigma: tuple[float, float, float] = (1.0, 1.0, 1.0)
        if "sigma" in kv:
            s = floats("sigma")
            if len(s) == 1:
                sigma = (s[0], s[0], s[0])
            elif len(s) == 3:
                sigma = (s[0], s[1], s[2])
            else:
                raise ConfigInvalid("sigma must have 1 or 3 components")
        center: tuple[float, float, float] = (0.0, 0.0, 0.0)
        if "center" in kv:
            c = floats("center")
            if len(c) != 3:
                raise ConfigInvalid("center must have 3 components")
            center = (c[0], c[1], c[2])
        initial = InitialData(
            kind=kind,
            mass=float(kv.get("mass", "1.0")),
            sigma=sigma,
            center=center,
            radius=float(kv.get("radius", "1.0")),
            path=os.path.join(base_dir, kv["init_file"]) if "init_file" in kv else None,
        )
        config = SimConfig(
            matrix=matrix,
            chi=float(need("chi")),
            n_cells=int(need("n_cells")),
            half_width=float(need("half_width")),
            initial=initial,
            t_end=float(need("t_end")),
            epsilon=float(kv["epsilon"]) if "epsilon" in kv else None,
            cfl=float(kv.get("cfl", "0.4")),
            dt_max=float(kv.get("dt_max", "1e-2")),
            dt_min=float(kv.get("dt_min", "1e-8")),
            blowup_factor=float(kv.get("blowup_factor", "1e3")),
            diagnostics_every=int(kv.get("diagnostics_every", "10")),
            output_dir=kv.get("output_dir"),
            snapshot_times=floats("snapshot_times") if "snapshot_times" in kv else (),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    config.validate()
    return config


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))
