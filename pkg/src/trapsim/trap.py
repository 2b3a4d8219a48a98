"""Planar-electrode trap model.

Electrodes are rectangles in the y = 0 plane held at uniform voltage with the
rest of the plane grounded (gapless approximation). Both the potential and
the field have closed forms built from arctangent corner terms, so no grids
or relaxation solvers are involved anywhere.

Coordinates: the chip occupies the x-z plane, y points up toward the ion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import IonSpecies, TrapsimError, ValidationError

ROLE_RF = "RF"
ROLE_IDC = "IDC"
ROLE_ODC = "ODC"
_ROLES = (ROLE_RF, ROLE_IDC, ROLE_ODC)


@dataclass(frozen=True)
class ElectrodePatch:
    """Rectangular electrode [x1, x2] x [z1, z2] at a fixed voltage.

    For role "RF" the voltage is the drive amplitude; anything else is a
    static potential.
    """

    role: str
    x1: float
    x2: float
    z1: float
    z2: float
    voltage: float

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValidationError(f"unknown electrode role {self.role!r}",
                                  allowed=list(_ROLES))
        if not (self.x2 > self.x1 and self.z2 > self.z1):
            raise ValidationError("patch must have positive extent",
                                  x1=self.x1, x2=self.x2, z1=self.z1, z2=self.z2)

    def to_dict(self):
        return {"role": self.role, "x1": self.x1, "x2": self.x2,
                "z1": self.z1, "z2": self.z2, "voltage": self.voltage}


@dataclass(frozen=True)
class TrapLayout:
    patches: tuple[ElectrodePatch, ...]
    rf_drive_frequency_hz: float
    name: str = ""

    def __post_init__(self):
        if not (self.rf_drive_frequency_hz > 0):
            raise ValidationError("rf drive frequency must be positive")
        if not self.patches:
            raise ValidationError("layout needs at least one patch")
        object.__setattr__(self, "patches", tuple(self.patches))

    def by_role(self, role: str) -> tuple[ElectrodePatch, ...]:
        return tuple(p for p in self.patches if p.role == role)

    def to_dict(self):
        return {
            "name": self.name,
            "rf_drive_frequency_hz": self.rf_drive_frequency_hz,
            "patches": [p.to_dict() for p in self.patches],
        }


def _corner_stack(patches, use_voltage=True):
    """Flatten patches into corner-term arrays (xc, zc, sign * coef)."""
    xs, zs, cf = [], [], []
    for p in patches:
        v = p.voltage if use_voltage else 1.0
        for xc, su in ((p.x2, 1.0), (p.x1, -1.0)):
            for zc, sw in ((p.z2, 1.0), (p.z1, -1.0)):
                xs.append(xc)
                zs.append(zc)
                cf.append(su * sw * v / (2.0 * math.pi))
    return np.array(xs), np.array(zs), np.array(cf)


def _prep_points(point):
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValidationError("points must have 3 components")
    if np.any(pts[:, 1] <= 0):
        raise ValidationError("field model is defined for y > 0 only",
                              min_y=float(pts[:, 1].min()))
    return pts, single


def potential(point, patches):
    """Electrostatic potential (V) of the given patches at point(s)."""
    pts, single = _prep_points(point)
    xc, zc, cf = _corner_stack(patches)
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    z = pts[:, 2:3]
    u = xc[None, :] - x
    w = zc[None, :] - z
    r = np.sqrt(u * u + y * y + w * w)
    val = np.sum(cf[None, :] * np.arctan2(u * w, y * r), axis=1)
    return float(val[0]) if single else val


def field(point, patches):
    """Electric field E = -grad(potential), in V/m. Analytic, no differencing."""
    pts, single = _prep_points(point)
    xc, zc, cf = _corner_stack(patches)
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    z = pts[:, 2:3]
    u = xc[None, :] - x
    w = zc[None, :] - z
    uy = u * u + y * y
    wy = w * w + y * y
    r = np.sqrt(u * u + y * y + w * w)
    ex = np.sum(cf * y * w / (uy * r), axis=1)
    ez = np.sum(cf * y * u / (wy * r), axis=1)
    ey = np.sum(cf * u * w * (r * r + y * y) / (r * uy * wy), axis=1)
    out = np.stack([ex, ey, ez], axis=-1)
    return out[0] if single else out


def rf_field_amplitude(point, layout: TrapLayout):
    """Field amplitude vector of the RF patches (drive peak, not rms)."""
    rf = layout.by_role(ROLE_RF)
    if not rf:
        raise ValidationError("layout has no RF patches")
    return field(point, rf)


def dc_field(point, layout: TrapLayout):
    dc = [p for p in layout.patches if p.role != ROLE_RF]
    if not dc:
        z = np.zeros(3)
        pts, single = _prep_points(point)
        return z if single else np.zeros((pts.shape[0], 3))
    return field(point, dc)


def dc_potential(point, layout: TrapLayout):
    dc = [p for p in layout.patches if p.role != ROLE_RF]
    if not dc:
        pts, single = _prep_points(point)
        return 0.0 if single else np.zeros(pts.shape[0])
    return potential(point, dc)


def pseudopotential(point, layout: TrapLayout, species: IonSpecies):
    """Ponderomotive energy q^2 |E_rf|^2 / (4 m Omega^2) in joules."""
    e = rf_field_amplitude(point, layout)
    omega = 2.0 * math.pi * layout.rf_drive_frequency_hz
    e2 = np.sum(np.atleast_2d(e) ** 2, axis=-1)
    val = species.charge_c ** 2 * e2 / (4.0 * species.mass_kg * omega ** 2)
    return float(val[0]) if np.asarray(point).ndim == 1 else val


def total_energy(point, layout: TrapLayout, species: IonSpecies):
    """Pseudopotential plus static potential energy, in joules."""
    ps = pseudopotential(point, layout, species)
    return ps + species.charge_c * dc_potential(point, layout)


def _fd_gradient(f, p, h):
    g = np.zeros(3)
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        g[i] = (f(p + d) - f(p - d)) / (2.0 * h)
    return g


def _fd_hessian(f, p, h):
    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            di = np.zeros(3)
            dj = np.zeros(3)
            di[i] = h
            dj[j] = h
            out[i, j] = (f(p + di + dj) - f(p + di - dj)
                         - f(p - di + dj) + f(p - di - dj)) / (4.0 * h * h)
    return 0.5 * (out + out.T)


@dataclass
class TrapOperatingPoint:
    """Equilibrium position and the local harmonic description around it."""

    position_m: np.ndarray
    frequencies_hz: np.ndarray       # ordered (x-like, y-like, z-like)
    axes: np.ndarray                 # columns are the principal axes
    mathieu_q: np.ndarray            # per principal axis, radial entries matter
    height_m: float

    def to_dict(self):
        return {
            "position_m": [float(v) for v in self.position_m],
            "frequencies_hz": [float(v) for v in self.frequencies_hz],
            "axes": [[float(v) for v in row] for row in self.axes],
            "mathieu_q": [float(v) for v in self.mathieu_q],
            "height_m": float(self.height_m),
        }


_DEFAULT_BOX = ((-30e-6, 30e-6), (55e-6, 170e-6), (-60e-6, 60e-6))


def rf_null_and_frequencies(layout: TrapLayout, species: IonSpecies,
                            search_box=None, grid_shape=(13, 25, 13),
                            position_tol=1e-9) -> TrapOperatingPoint:
    """Locate the trap minimum and characterize it.

    Coarse grid over the search box, then damped Newton refinement on
    finite-difference derivatives of the total energy until the step falls
    below position_tol (1 nm by default). Secular frequencies come from the
    eigenvalues of the energy Hessian; Mathieu q per axis from the
    pseudopotential-only curvature.
    """
    box = search_box or _DEFAULT_BOX
    axes_1d = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, grid_shape)]
    X, Y, Z = np.meshgrid(*axes_1d, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    u_grid = total_energy(pts, layout, species)
    p = pts[int(np.argmin(u_grid))].copy()

    f = lambda q: total_energy(q, layout, species)
    cell = np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(box, grid_shape)])
    max_step = np.linalg.norm(cell)
    fd_h = 2e-9
    for _ in range(80):
        g = _fd_gradient(f, p, fd_h)
        H = _fd_hessian(f, p, fd_h)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            raise TrapsimError("singular Hessian during null refinement",
                               position=[float(v) for v in p])
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        p = p + step
        if np.linalg.norm(step) < position_tol:
            break
    else:
        raise TrapsimError("null refinement did not converge",
                           position=[float(v) for v in p])

    H = _fd_hessian(f, p, fd_h)
    lam, vec = np.linalg.eigh(H)
    if np.any(lam <= 0):
        raise TrapsimError("stationary point is not a minimum",
                           eigenvalues=[float(v) for v in lam])
    # order eigenpairs by their dominant coordinate
    order = []
    for ax in range(3):
        col = int(np.argmax(np.abs(vec[ax, :])))
        order.append(col)
    if len(set(order)) != 3:  # fall back to ascending order on ambiguity
        order = [0, 1, 2]
    freqs = np.array([math.sqrt(lam[c] / species.mass_kg) / (2.0 * math.pi)
                      for c in order])
    axes = vec[:, order]

    ps = lambda q: pseudopotential(q, layout, species)
    Hp = _fd_hessian(ps, p, fd_h)
    omega_rf = 2.0 * math.pi * layout.rf_drive_frequency_hz
    qs = []
    for c in order:
        curv = float(vec[:, c] @ Hp @ vec[:, c])
        w_ps = math.sqrt(max(curv, 0.0) / species.mass_kg)
        qs.append(2.0 * math.sqrt(2.0) * w_ps / omega_rf)
    return TrapOperatingPoint(position_m=p, frequencies_hz=freqs, axes=axes,
                              mathieu_q=np.array(qs), height_m=float(p[1]))


def compensation_gain(layout: TrapLayout, point, role: str = ROLE_IDC) -> float:
    """Vertical field per volt applied symmetrically to the `role` pair.

    The inner dc pair is symmetric about the ion, so its differential-free
    (common) drive produces a field along y only; the x and z components at
    the operating point are checked to be negligible.
    """
    pair = layout.by_role(role)
    if not pair:
        raise ValidationError(f"layout has no {role} patches")
    probe = [ElectrodePatch(role=p.role, x1=p.x1, x2=p.x2, z1=p.z1, z2=p.z2,
                            voltage=1.0) for p in pair]
    e = field(point, probe)
    if abs(e[1]) > 0 and max(abs(e[0]), abs(e[2])) > 1e-6 * abs(e[1]):
        raise TrapsimError("compensation pair is not symmetric about the point",
                           field_per_volt=[float(v) for v in e])
    return float(e[1])


def displacement_from_field(species: IonSpecies, frequency_hz: float,
                            e_field: float) -> float:
    """Static displacement q E / (m omega^2) along a mode of the given
    frequency. Sign follows the field."""
    if not (frequency_hz > 0):
        raise ValidationError("mode frequency must be positive")
    omega = 2.0 * math.pi * frequency_hz
    return species.charge_c * e_field / (species.mass_kg * omega ** 2)


def layout_from_dict(raw: dict) -> TrapLayout:
    """Build a layout from the JSON dict shape produced by to_dict."""
    try:
        patches = tuple(ElectrodePatch(**{k: p[k] for k in
                                          ("role", "x1", "x2", "z1", "z2",
                                           "voltage")})
                        for p in raw["patches"])
        return TrapLayout(patches=patches,
                          rf_drive_frequency_hz=raw["rf_drive_frequency_hz"],
                          name=raw.get("name", ""))
    except KeyError as exc:
        raise ValidationError(f"layout is missing key {exc.args[0]!r}") from exc


def default_layout() -> TrapLayout:
    """The calibrated layout shipped with the package."""
    text = resources.files("trapsim").joinpath("data/default_layout.json").read_text()
    raw = json.loads(text)
    if not raw.get("name"):
        raw["name"] = "default"
    return layout_from_dict(raw)
