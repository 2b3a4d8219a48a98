"""Command-line interface.

Subcommands map one-to-one onto the physics modules; see docs/formats.md
for the file formats. Usage errors exit 2 (argparse), physics and config
errors exit 1 with a JSON error report on stderr. Output is deterministic
for a fixed config and seed: floats are formatted with %.12g and files are
written with unix newlines.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import backend
from .config import (load_experiment, load_gate_params, load_schedule,
                     resolve_seed)
from .cooling import HeatingRate, heating_curve, run_schedule
from .core import (DriveParams, ModeSpec, RamanGeometry, TrapsimError, YB171,
                   lamb_dicke, thermal_pmf)
from .fitkit import seeded_rng
from .msgate import apply_confusion, fit_ms, ms_closed_form, propagate
from .rabi import fit_nbar, matrix_element, rabi_curve
from .scan import (ScanRecord, ScanSetup, StrayFieldTrajectory, fit_offset,
                   simulate_scan)
from .trap import compensation_gain, default_layout, layout_from_dict, \
    rf_null_and_frequencies

# Calibrated operating point of the shipped layout; regenerate with
# scripts/calibrate_layout.py after changing the layout.
SCAN_GAIN_VPM_PER_V = 1321.5662459072978
SCAN_MATHIEU_Q = 0.16037976592015546
SCAN_MODE_FREQS_HZ = (2.11e6, 1.84e6)
SCAN_RABI_HZ = 545e3


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _write_text(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _emit_json(obj, path: str | None):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row))
    return "\n".join(lines) + "\n"


def _read_csv(path: str, expected_header):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise TrapsimError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TrapsimError(f"{path}: empty CSV") from None
        if [h.strip() for h in header] != list(expected_header):
            raise TrapsimError(
                f"{path}: expected columns {','.join(expected_header)}",
                got=header)
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    return rows


def _default_scan_setup() -> tuple[ScanSetup, list]:
    """Probe on the vertical radial mode with a motionless carrier response.

    Thermal occupations skew the Bessel pattern's tails (a mixture of sin^2
    curves, not one), so the CLI probes the bare carrier and leaves thermal
    scans to the API.
    """
    geometry = RamanGeometry()
    modes = tuple(
        ModeSpec(frequency_hz=f,
                 lamb_dicke=lamb_dicke(YB171, geometry, f,
                                       geometry.projection_angles_deg[i]),
                 mode_id=f"radial{i + 1}")
        for i, f in enumerate(SCAN_MODE_FREQS_HZ))
    setup = ScanSetup(species=YB171, geometry=geometry, mode=modes[0],
                      mathieu_q=SCAN_MATHIEU_Q, gain=SCAN_GAIN_VPM_PER_V,
                      dw_modes=modes)
    return setup, []


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise TrapsimError(f"grid must be lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi <= lo:
        raise TrapsimError("grid needs hi > lo and step > 0")
    return np.arange(lo, hi + 0.5 * step, step)


def _parse_shots(text: str):
    if text == "inf":
        return None
    n = int(text)
    if n <= 0:
        raise TrapsimError("shots must be positive or inf")
    return n


def _scan_pulse(args) -> DriveParams:
    duration = args.duration if args.duration is not None \
        else 0.5 / args.rabi
    return DriveParams(rabi_hz=args.rabi, duration_s=duration)


def cmd_trap(args) -> int:
    layout = default_layout() if args.layout is None \
        else layout_from_dict(_load_layout_file(args.layout))
    op = rf_null_and_frequencies(layout, YB171)
    gain = compensation_gain(layout, op.position_m)
    report = op.to_dict()
    report["idc_gain_vpm_per_v"] = gain
    report["layout_name"] = layout.name
    report["backend"] = backend.backend_name()
    _emit_json(report, args.out)
    return 0


def _load_layout_file(path: str) -> dict:
    from .config import load_json
    return load_json(path)


def cmd_dc_scan(args) -> int:
    setup, dists = _default_scan_setup()
    grid = _parse_grid(args.grid)
    shots = _parse_shots(args.shots)
    pulse = _scan_pulse(args)
    trajectory = StrayFieldTrajectory.constant(args.stray)
    rec = simulate_scan(setup, trajectory, grid, pulse, shots=shots,
                        seed=resolve_seed(args.seed), time_s=args.time,
                        distributions=dists)
    rows = [(rec.timestamp_s, dv, p, "inf" if rec.shots is None else rec.shots)
            for dv, p in zip(rec.delta_v, rec.p1)]
    _write_text(args.out, _csv_text(("timestamp_s", "delta_v_V", "p1",
                                     "shots"), rows))
    return 0


def _records_from_scan_csv(path: str, gain: float, pulse: DriveParams):
    rows = _read_csv(path, ("timestamp_s", "delta_v_V", "p1", "shots"))
    groups: dict[float, list] = {}
    order = []
    for row in rows:
        t = float(row[0])
        if t not in groups:
            groups[t] = []
            order.append(t)
        groups[t].append(row)
    records = []
    for t in order:
        g = groups[t]
        dv = np.array([float(r[1]) for r in g])
        p1 = np.array([float(r[2]) for r in g])
        shots_txt = g[0][3].strip()
        shots = None if shots_txt == "inf" else int(float(shots_txt))
        records.append(ScanRecord(timestamp_s=t, delta_v=dv, delta_e=None,
                                  p1=p1, shots=shots, pulse=pulse, gain=gain))
    return records


def cmd_fit_scan(args) -> int:
    pulse = DriveParams(rabi_hz=SCAN_RABI_HZ, duration_s=0.5 / SCAN_RABI_HZ)
    records = _records_from_scan_csv(args.infile, args.gain, pulse)
    points = []
    for rec in records:
        res = fit_offset(rec)
        points.append({"t": rec.timestamp_s,
                       "e_y_estimate": res.e_y_estimate,
                       "sigma": res.sigma, "chi2red": res.chi2_red})
    _emit_json(points[0] if len(points) == 1 else points, args.out)
    return 0


def cmd_rabi(args) -> int:
    cfg = load_experiment(args.config)
    p = rabi_curve(cfg.times_s, cfg.drive, cfg.geometry, list(cfg.modes),
                   cfg.distributions())
    if cfg.shots is not None:
        rng = seeded_rng(resolve_seed(cfg.seed), "rabi")
        p = rng.binomial(cfg.shots, p) / float(cfg.shots)
    rows = list(zip(cfg.times_s * 1e6, p))
    _write_text(args.out or cfg.out, _csv_text(("t_us", "p1"), rows))
    return 0


def cmd_fit_rabi(args) -> int:
    cfg = load_experiment(args.config)
    rows = _read_csv(args.infile, ("t_us", "p1"))
    times = np.array([float(r[0]) for r in rows]) * 1e-6
    p1 = np.array([float(r[1]) for r in rows])
    res = fit_nbar(times, p1, cfg.drive, cfg.geometry, list(cfg.modes),
                   shots=cfg.shots)
    report = {
        "rabi_hz": res.extras["rabi_hz"],
        "nbar": list(res.extras["nbar"]),
        "nbar_sigma": list(res.extras["nbar_sigma"]),
        "chi2red": res.chi2_red,
        "converged": res.converged,
        "n_iter": res.n_iter,
    }
    _emit_json(report, args.out)
    return 0


def cmd_sbc(args) -> int:
    dists, etas, schedule = load_schedule(args.schedule)
    initial = {mid: d.nbar for mid, d in dists.items()}
    final, history = run_schedule(dists, schedule, etas)
    report = {
        "initial_nbar": initial,
        "final_nbar": {mid: d.nbar for mid, d in final.items()},
        "pulse_history": history,
        "n_pulses": len(schedule.pulses),
    }
    _emit_json(report, args.out)
    return 0


def cmd_heating(args) -> int:
    times = np.array([float(t) for t in args.times.split(",")])
    dist = thermal_pmf(args.nbar0)
    nbars = heating_curve(dist, HeatingRate(args.rate), times)
    _write_text(args.out, _csv_text(("t_s", "nbar"), zip(times, nbars)))
    return 0


def cmd_ms_gate(args) -> int:
    params, cm, times = load_gate_params(args.params)
    curve = propagate(params, times)
    seen = apply_confusion(curve, cm)
    rows = zip(times * 1e6, seen.p00, seen.p01, seen.p10, seen.p11)
    _write_text(args.out, _csv_text(("t_us", "p00", "p01", "p10", "p11"),
                                    rows))
    return 0


def cmd_fit_ms(args) -> int:
    guess, cm, _ = load_gate_params(args.params)
    rows = _read_csv(args.infile, ("t_us", "p00", "p01", "p10", "p11"))
    times = np.array([float(r[0]) for r in rows]) * 1e-6
    pops = np.array([[float(v) for v in r[1:5]] for r in rows])
    res = fit_ms(times, pops, args.shots, guess, confusion_guess=cm)
    _emit_json(res.to_dict(), args.out)
    return 0


def _selftest_checks():
    from .trap import field, potential

    def check_field_gradient():
        layout = default_layout()
        rng = seeded_rng(7, "selftest")
        pts = np.column_stack([rng.uniform(-40e-6, 40e-6, 25),
                               rng.uniform(60e-6, 160e-6, 25),
                               rng.uniform(-60e-6, 60e-6, 25)])
        worst = 0.0
        for p in pts:
            e = field(p, layout.patches)
            scale = max(float(np.max(np.abs(e))), 1e-3)
            for ax in range(3):
                dp = np.zeros(3)
                dp[ax] = 1.0

                def central(h):
                    return -(potential(p + h * dp, layout.patches)
                             - potential(p - h * dp, layout.patches)) / (2 * h)

                # Richardson-extrapolated central difference
                fd = (4.0 * central(1e-9) - central(2e-9)) / 3.0
                worst = max(worst, abs(e[ax] - fd) / scale)
        return worst < 1e-6, f"max rel dev {worst:.2e}"

    def check_hermiticity():
        eta = 0.09369506076154457
        worst = max(abs(matrix_element(n, +1, eta)
                        - matrix_element(n + 1, -1, eta))
                    for n in range(0, 60))
        return worst < 1e-12, f"max |M(n,+1)-M(n+1,-1)| = {worst:.2e}"

    def check_sideband_ratio():
        nbar = 0.73
        # Tight tail: the blue sum's topmost term pairs with a red term one
        # level above the cutoff, so the truncated tail leaks into the ratio.
        dist = thermal_pmf(nbar, tol=1e-14)
        eta, t_rabi = 0.1, 0.3
        up = dw_sum(dist, eta, +1, t_rabi)
        down = dw_sum(dist, eta, -1, t_rabi)
        got = down / up
        want = nbar / (nbar + 1.0)
        return abs(got - want) < 1e-12, f"ratio dev {abs(got - want):.2e}"

    def dw_sum(dist, eta, s, theta):
        from .rabi import dw_table
        m = dw_table(eta, s, dist.n_max)
        return float(np.sum(dist.populations * np.sin(0.5 * theta * m) ** 2))

    def check_ms_oracle():
        mode = ModeSpec(frequency_hz=1.9905e6, lamb_dicke=0.0682,
                        mode_id="tilt")
        from .msgate import MSGateParams
        params = MSGateParams(rabi_hz=50e3, detuning_hz=-9.4e3, mode=mode,
                              initial_nbar=0.2, n_max=30,
                              gate_duration_s=3e-4)
        times = np.linspace(0.0, 3e-4, 7)
        a = propagate(params, times).stacked()
        b = ms_closed_form(params, times).stacked()
        worst = float(np.max(np.abs(a - b)))
        return worst < 1e-6, f"max pop dev {worst:.2e}"

    def check_heating_mean():
        dist = thermal_pmf(0.1)
        got = heating_curve(dist, HeatingRate(1700.0), [1e-3])[0]
        return abs(got - 1.8) < 1e-5, f"nbar(1 ms) = {got:.6f}"

    return [("field-vs-gradient", check_field_gradient),
            ("sideband-hermiticity", check_hermiticity),
            ("thermal-sideband-ratio", check_sideband_ratio),
            ("ms-closed-form-vs-propagate", check_ms_oracle),
            ("heating-mean-law", check_heating_mean)]


def cmd_selftest(args) -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")
        failures += 0 if ok else 1
    print(f"backend: {backend.backend_name()}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapsim",
        description="Surface-trap electrostatics, micromotion compensation, "
                    "sideband dynamics, and two-qubit gate simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trap", help="locate the trap and report frequencies")
    p.add_argument("--layout", help="layout JSON (default: shipped layout)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(fn=cmd_trap)

    p = sub.add_parser("dc-scan", help="simulate a compensation-voltage scan")
    p.add_argument("--stray", type=float, required=True,
                   help="constant stray field in V/m")
    p.add_argument("--grid", default="-3:3:0.1",
                   help="voltage grid lo:hi:step (default -3:3:0.1)")
    p.add_argument("--shots", default="500",
                   help="shots per point, or inf for exact probabilities")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time", type=float, default=0.0,
                   help="lab timestamp of the sweep in seconds")
    p.add_argument("--rabi", type=float, default=SCAN_RABI_HZ,
                   help="probe Rabi frequency in Hz")
    p.add_argument("--duration", type=float, default=None,
                   help="probe pulse length in s (default: bare pi time)")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(fn=cmd_dc_scan)

    p = sub.add_parser("fit-scan", help="fit stray field from a scan CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--gain", type=float, default=SCAN_GAIN_VPM_PER_V,
                   help="field per probe volt, V/m per V")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fit_scan)

    p = sub.add_parser("rabi", help="simulate carrier flopping")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_rabi)

    p = sub.add_parser("fit-rabi", help="fit thermal occupation from flopping")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", required=True,
                   help="experiment config providing geometry and modes")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fit_rabi)

    p = sub.add_parser("sbc", help="run a sideband-cooling pulse schedule")
    p.add_argument("--schedule", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sbc)

    p = sub.add_parser("heating", help="evolve a thermal state under heating")
    p.add_argument("--rate", type=float, required=True, help="quanta/s")
    p.add_argument("--nbar0", type=float, required=True)
    p.add_argument("--times", required=True, help="comma list of seconds")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_heating)

    p = sub.add_parser("ms-gate", help="propagate the entangling gate")
    p.add_argument("--params", required=True, help="gate parameter JSON")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ms_gate)

    p = sub.add_parser("fit-ms", help="fit gate parameters from a CSV curve")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--params", required=True,
                   help="gate parameter JSON holding the starting guess")
    p.add_argument("--shots", type=int, default=300)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fit_ms)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(fn=cmd_selftest)

    return parser


_DASH_VALUE_FLAGS = {"--grid", "--times", "--stray"}


def _join_dash_values(argv):
    """Fold `--grid -3:3:0.1` into `--grid=-3:3:0.1`.

    argparse only recognizes bare negative numbers after an option, not
    colon grids or comma lists that merely start with a dash.
    """
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _DASH_VALUE_FLAGS and i + 1 < len(argv) \
                and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_join_dash_values(list(argv)))
    try:
        return args.fn(args)
    except TrapsimError as exc:
        sys.stderr.write(json.dumps(exc.to_json_dict(), sort_keys=True)
                         + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
