"""Command-line front end: ``se23align {align,mc,check,replay}``."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import errmodel, sim
from .earth import GeoPosition
from .errmodel import ModelKind
from .kf import AidingData, align_run
from .se23 import GroupElement, left_jacobian, left_jacobian_inv, se23_exp, se23_log, so3_exp
from .strapdown import ImuData, dcm_to_euler

log = logging.getLogger("se23align")

LOG_ENV = "SE23ALIGN_LOG"
IMU_COLUMNS = ("t", "gx", "gy", "gz", "ax", "ay", "az")
AIDING_COLUMNS = ("t", "lat_deg", "lon_deg", "h_m", "ve", "vn", "vu")
ALIGN_COLUMNS = (
    "t", "pitch_err_deg", "roll_err_deg", "yaw_err_deg",
    "p_att_x", "p_att_y", "p_att_z", "pitch_deg", "roll_deg", "yaw_deg",
)
SUMMARY_COLUMNS = (
    "kind", "trials", "converged_fraction",
    "steady_mean_pitch_deg", "steady_mean_roll_deg", "steady_mean_yaw_deg",
    "steady_std_pitch_deg", "steady_std_roll_deg", "steady_std_yaw_deg",
    "mean_abs_steady_yaw_deg",
)
TRIAL_COLUMNS = (
    "kind", "trial", "mis_pitch_deg", "mis_roll_deg", "mis_yaw_deg",
    "final_pitch_err_deg", "final_roll_err_deg", "final_yaw_err_deg",
    "steady_mean_pitch_deg", "steady_mean_roll_deg", "steady_mean_yaw_deg",
    "steady_std_pitch_deg", "steady_std_roll_deg", "steady_std_yaw_deg", "converged",
)
ALL_KINDS = tuple(k.value for k in ModelKind)
EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad configuration, arguments or input files (exit code 2)."""


# --- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    scenario: str
    sim: sim.SimConfig
    filter_overrides: dict
    kinds: tuple
    trials: int
    seed: int
    out: Path
    imu_csv: Path | None = None
    aiding_csv: Path | None = None
    truth_known: bool = True


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise UsageError(f"config [{section}] {key} = {raw!r}: {exc}") from None


def _triple(raw):
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    return tuple(float(p) for p in parts)


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def parse_kinds(raw):
    kinds = []
    for part in str(raw).split(","):
        part = part.strip()
        if part:
            kinds.append(ModelKind.parse(part))
    if not kinds:
        raise ValueError("no kinds given")
    return tuple(kinds)


KNOWN_KEYS = {
    "scenario": {"type"},
    "site": {"lat_deg", "lon_deg", "h_m"},
    "truth": {"pitch_deg", "roll_deg", "yaw_deg"},
    "imu": {"rate_hz", "duration_s", "gyro_bias_deg_h", "gyro_arw_deg_sqrt_h", "accel_bias_ug",
            "accel_vrw_ug_sqrt_hz"},
    "aiding": {"rate_hz", "vel_noise_mps"},
    "misalignment": {"mode", "values_deg", "bounds_deg"},
    "filter": {"kinds", "r_vel_mps", "p0_att_deg", "p0_vel_mps", "p0_pos_m", "p0_gyro_bias_deg_h",
               "p0_accel_bias_ug", "gyro_bias_rw", "accel_bias_rw", "compensate", "lse_transformed",
               "max_gap_s"},
    "mc": {"trials"},
    "replay": {"imu_csv", "aiding_csv"},
    "run": {"seed", "out"},
}


def load_config(path, seed=None, out=None, kinds=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    for section in cp.sections():
        if section not in KNOWN_KEYS:
            raise UsageError(f"config: unknown section [{section}]")
        for key in cp[section]:
            if key not in KNOWN_KEYS[section]:
                raise UsageError(f"config: unknown key [{section}] {key}")

    scenario = _get(cp, "scenario", "type", str, "static-sim").strip()
    if scenario not in ("static-sim", "replay"):
        raise UsageError(f"config [scenario] type = {scenario!r}: expected static-sim or replay")

    d = sim.SimConfig()
    try:
        site = GeoPosition.from_degrees(
            _get(cp, "site", "lat_deg", float, 34.0),
            _get(cp, "site", "lon_deg", float, 108.0),
            _get(cp, "site", "h_m", float, 0.0),
        )
    except ValueError as exc:
        raise UsageError(f"config [site]: {exc}") from None
    attitude = tuple(
        float(np.radians(_get(cp, "truth", k, float, 0.0))) for k in ("pitch_deg", "roll_deg", "yaw_deg")
    )
    misalignment_kw = dict(
        mode=_get(cp, "misalignment", "mode", str, "uniform").strip(),
        values=_get(cp, "misalignment", "values_deg", _triple, (0.0, 0.0, 0.0)),
        bounds=_get(cp, "misalignment", "bounds_deg", _triple, (90.0, 90.0, 180.0)),
    )
    try:
        mis = sim.MisalignmentSpec(**misalignment_kw)
    except ValueError as exc:
        raise UsageError(f"config [misalignment]: {exc}") from None

    run_seed = _get(cp, "run", "seed", int, 0) if seed is None else seed
    try:
        scfg = sim.SimConfig(
            site=site,
            attitude=attitude,
            duration=_get(cp, "imu", "duration_s", float, d.duration),
            imu_rate=_get(cp, "imu", "rate_hz", float, d.imu_rate),
            aiding_rate=_get(cp, "aiding", "rate_hz", float, d.aiding_rate),
            gyro_bias=tuple(np.full(3, sim.to_si(_get(cp, "imu", "gyro_bias_deg_h", float, 0.01), "deg/h"))),
            gyro_noise=float(sim.to_si(_get(cp, "imu", "gyro_arw_deg_sqrt_h", float, 0.001), "deg/sqrt(h)")),
            accel_bias=tuple(np.full(3, sim.to_si(_get(cp, "imu", "accel_bias_ug", float, 100.0), "ug"))),
            accel_noise=float(sim.to_si(_get(cp, "imu", "accel_vrw_ug_sqrt_hz", float, 10.0), "ug/sqrt(Hz)")),
            gnss_vel_noise=_get(cp, "aiding", "vel_noise_mps", float, 0.0),
            misalignment=mis,
            seed=run_seed,
        )
    except ValueError as exc:
        raise UsageError(f"config [imu]/[aiding]: {exc}") from None

    fo = {}
    conv = {
        "r_vel_mps": ("r_vel", float, 1.0),
        "p0_vel_mps": ("p0_vel", float, 1.0),
        "p0_pos_m": ("p0_pos", float, 1.0),
        "p0_gyro_bias_deg_h": ("p0_gyro_bias", float, float(sim.to_si(1.0, "deg/h"))),
        "p0_accel_bias_ug": ("p0_accel_bias", float, float(sim.to_si(1.0, "ug"))),
        "gyro_bias_rw": ("gyro_bias_rw", float, 1.0),
        "accel_bias_rw": ("accel_bias_rw", float, 1.0),
        "max_gap_s": ("max_gap", float, 1.0),
        "compensate": ("compensate", _bool, None),
        "lse_transformed": ("lse_transformed", _bool, None),
    }
    for key, (name, fn, scale) in conv.items():
        val = _get(cp, "filter", key, fn, None)
        if val is not None:
            fo[name] = val * scale if scale is not None else val
    p0_att = _get(cp, "filter", "p0_att_deg", _triple, None)
    if p0_att is not None:
        fo["p0_att"] = np.radians(p0_att)
    try:
        scfg.filter_config(**fo)
    except ValueError as exc:
        raise UsageError(f"config [filter]: {exc}") from None

    if kinds is None:
        kinds = _get(cp, "filter", "kinds", parse_kinds, tuple(ModelKind))
    trials = _get(cp, "mc", "trials", int, 20)

    imu_csv = aiding_csv = None
    if scenario == "replay":
        for key in ("imu_csv", "aiding_csv"):
            if not cp.has_option("replay", key):
                raise UsageError(f"config [replay] {key} is required for a replay scenario")
        imu_csv = (path.parent / cp.get("replay", "imu_csv")).resolve()
        aiding_csv = (path.parent / cp.get("replay", "aiding_csv")).resolve()
        for p in (imu_csv, aiding_csv):
            if not p.is_file():
                raise UsageError(f"input file not found: {p}")

    out_dir = Path(out) if out is not None else path.parent / _get(cp, "run", "out", str, "out")
    return RunConfig(
        scenario=scenario,
        sim=scfg,
        filter_overrides=fo,
        kinds=tuple(kinds),
        trials=trials,
        seed=run_seed,
        out=out_dir,
        imu_csv=imu_csv,
        aiding_csv=aiding_csv,
        truth_known=scenario == "static-sim" or cp.has_section("truth"),
    )


# --- CSV I/O ---------------------------------------------------------------------


def fmt(x):
    """Shortest representation that parses back to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv_atomic(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path, columns):
    """Parse a numeric CSV with exactly ``columns``; returns ``(rows, 1 + len(columns))`` lines."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != columns:
            raise UsageError(f"{path}:1: expected header {','.join(columns)}")
        data = []
        last_t = -np.inf
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(columns):
                raise UsageError(f"{path}:{line}: expected {len(columns)} fields, got {len(row)}")
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise UsageError(f"{path}:{line}: non-numeric field") from None
            if not all(np.isfinite(vals)):
                raise UsageError(f"{path}:{line}: non-finite value")
            if not vals[0] > last_t:
                raise UsageError(f"{path}:{line}: timestamps not strictly increasing")
            last_t = vals[0]
            data.append(vals)
    if not data:
        raise UsageError(f"{path}: no data rows")
    return np.array(data)


def write_imu_csv(path, imu: ImuData):
    rows = np.column_stack([imu.t, imu.gyro, imu.accel])
    write_csv_atomic(path, IMU_COLUMNS, rows.tolist())


def write_aiding_csv(path, aiding: AidingData):
    rows = np.column_stack([aiding.t, np.degrees(aiding.lat), np.degrees(aiding.lon), aiding.h, aiding.vel])
    write_csv_atomic(path, AIDING_COLUMNS, rows.tolist())


def read_imu_csv(path) -> ImuData:
    a = read_csv(path, IMU_COLUMNS)
    return ImuData(a[:, 0], a[:, 1:4], a[:, 4:7])


def read_aiding_csv(path) -> AidingData:
    a = read_csv(path, AIDING_COLUMNS)
    if np.any(np.abs(a[:, 1]) > 90.0):
        line = int(np.flatnonzero(np.abs(a[:, 1]) > 90.0)[0]) + 2
        raise UsageError(f"{path}:{line}: lat_deg outside [-90, 90]")
    return AidingData(a[:, 0], np.radians(a[:, 1]), np.radians(a[:, 2]), a[:, 3], a[:, 4:7])


# --- commands --------------------------------------------------------------------


def _run_alignment(rc: RunConfig, imu, aiding, misalignment, out, plots):
    cfg = rc.sim
    guess = sim.initial_guess(cfg, misalignment)
    overrides = dict(rc.filter_overrides)
    overrides.setdefault("p0_att", sim.p0_attitude(misalignment))
    fcfg = cfg.filter_config(**overrides)
    lines = []
    for kind in rc.kinds:
        run = align_run(imu, aiding, kind, fcfg, guess)
        euler = np.degrees(np.stack(dcm_to_euler(run.c_b_n[0]), axis=-1))
        if rc.truth_known:
            err = sim.attitude_error(cfg.c_b_n, run.c_b_n[0])
        else:
            err = np.full_like(euler, np.nan)
        rows = np.column_stack([run.t, err, run.p_att[0], euler])
        write_csv_atomic(out / f"align_{kind.value}.csv", ALIGN_COLUMNS, rows.tolist())
        if plots:
            _plot_alignment(out / f"align_{kind.value}.png", kind, run.t, err if rc.truth_known else euler,
                            rc.truth_known)
        fin = err[-1] if rc.truth_known else euler[-1]
        label = "final error" if rc.truth_known else "final attitude"
        lines.append(
            f"{kind.value}: {label} pitch={fin[0]:.6f} roll={fin[1]:.6f} yaw={fin[2]:.6f} deg; "
            f"warnings={len(run.warnings)}"
        )
        for w in run.warnings:
            log.warning("%s: %s", kind.value, w)
    for line in lines:
        print(line)


def cmd_align(rc: RunConfig, plots=False):
    if rc.scenario == "replay":
        return cmd_replay(rc, plots)
    mis, imu, aiding = sim.draw_trials(rc.sim, 1)
    out = rc.out
    write_imu_csv(out / "imu.csv", ImuData(imu.t, imu.gyro[0], imu.accel[0]))
    write_aiding_csv(out / "aiding.csv", aiding)
    _write_replay_config(out / "replay.ini", rc, mis[0])
    # align exactly what was written, so that a replay reproduces it bit for bit
    replay = load_config(out / "replay.ini", out=out, kinds=rc.kinds)
    replay.truth_known = rc.truth_known
    return cmd_replay(replay, plots)


def cmd_replay(rc: RunConfig, plots=False):
    if rc.scenario != "replay":
        raise UsageError("replay needs a config with [scenario] type = replay and a [replay] section")
    imu = read_imu_csv(rc.imu_csv)
    aiding = read_aiding_csv(rc.aiding_csv)
    mis = rc.sim.misalignment
    if mis.mode != "fixed":
        raise UsageError("config [misalignment] mode must be fixed for a replay")
    _run_alignment(rc, imu, aiding, np.asarray(mis.values, float), rc.out, plots)
    return EXIT_OK


def _write_replay_config(path, rc: RunConfig, misalignment):
    cfg = rc.sim
    cp = configparser.ConfigParser()
    cp["scenario"] = {"type": "replay"}
    cp["replay"] = {"imu_csv": "imu.csv", "aiding_csv": "aiding.csv"}
    cp["truth"] = {k: fmt(np.degrees(a)) for k, a in zip(("pitch_deg", "roll_deg", "yaw_deg"), cfg.attitude)}
    cp["imu"] = {
        "gyro_bias_deg_h": fmt(cfg.gyro_bias[0] / sim.UNITS["deg/h"]),
        "gyro_arw_deg_sqrt_h": fmt(cfg.gyro_noise / sim.UNITS["deg/sqrt(h)"]),
        "accel_bias_ug": fmt(cfg.accel_bias[0] / sim.UNITS["ug"]),
        "accel_vrw_ug_sqrt_hz": fmt(cfg.accel_noise / sim.UNITS["ug/sqrt(Hz)"]),
    }
    cp["aiding"] = {"rate_hz": fmt(cfg.aiding_rate)}
    cp["misalignment"] = {"mode": "fixed", "values_deg": ", ".join(fmt(v) for v in misalignment)}
    filt = {"kinds": ",".join(k.value for k in rc.kinds)}
    inv = {
        "r_vel": ("r_vel_mps", 1.0), "p0_vel": ("p0_vel_mps", 1.0), "p0_pos": ("p0_pos_m", 1.0),
        "p0_gyro_bias": ("p0_gyro_bias_deg_h", sim.UNITS["deg/h"]),
        "p0_accel_bias": ("p0_accel_bias_ug", sim.UNITS["ug"]),
        "gyro_bias_rw": ("gyro_bias_rw", 1.0), "accel_bias_rw": ("accel_bias_rw", 1.0),
        "max_gap": ("max_gap_s", 1.0),
    }
    for name, val in rc.filter_overrides.items():
        if name in inv:
            key, scale = inv[name]
            filt[key] = fmt(val / scale)
        elif name in ("compensate", "lse_transformed"):
            filt[name] = "true" if val else "false"
        elif name == "p0_att":
            filt["p0_att_deg"] = ", ".join(fmt(v) for v in np.degrees(val))
    cp["filter"] = filt
    cp["run"] = {"seed": str(rc.seed), "out": "replay_out"}
    buf = io.StringIO()
    cp.write(buf)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def cmd_mc(rc: RunConfig, plots=False):
    if rc.scenario != "static-sim":
        raise UsageError("mc needs [scenario] type = static-sim")
    if rc.trials < 1:
        raise UsageError(f"config [mc] trials = {rc.trials}: must be >= 1")
    results = sim.monte_carlo(rc.sim, rc.kinds, rc.trials, **rc.filter_overrides)
    summary, trials = [], []
    for kind, res in results.items():
        summary.append(
            [kind.value, res.trials, res.converged_fraction,
             *res.steady_mean.mean(axis=0), *res.steady_std.mean(axis=0), res.mean_abs_yaw]
        )
        for i in range(res.trials):
            trials.append(
                [kind.value, i, *res.misalignment[i], *res.errors[i, -1],
                 *res.steady_mean[i], *res.steady_std[i], bool(res.converged[i])]
            )
        print(
            f"{kind.value}: converged {res.converged_fraction:.2f} of {res.trials}; "
            f"mean |steady yaw| = {res.mean_abs_yaw:.6f} deg; warnings={len(res.warnings)}"
        )
    write_csv_atomic(rc.out / "mc_summary.csv", SUMMARY_COLUMNS, summary)
    write_csv_atomic(rc.out / "mc_trials.csv", TRIAL_COLUMNS, trials)
    if plots:
        _plot_mc(rc.out / "mc_yaw.png", results)
    return EXIT_OK


def _fault_builder(fault):
    if fault is None:
        return None
    if fault != "rse-sign":
        raise UsageError(f"unknown fault {fault!r}")

    def builder(kind, state, gyro, accel, g_i, transformed=False):
        m = errmodel.build(kind, state, gyro, accel, g_i, transformed)
        if ModelKind.parse(kind) is not ModelKind.RSE:
            return m
        F = m.F.copy()
        F[..., errmodel.VEL, errmodel.AB] *= -1.0
        return errmodel.SystemMatrices(F, m.G, m.H)

    return builder


def run_checks(seed=0, fault=None):
    """Verification suite; returns rows ``(name, value, tolerance, passed)``."""
    rng = np.random.default_rng(seed)
    rows = []

    def add(name, value, tol):
        rows.append((name, float(value), tol, bool(value <= tol)))

    n = 1000
    def rand_group():
        phi = rng.normal(size=(n, 3))
        phi *= (rng.uniform(0, np.pi, n) / np.linalg.norm(phi, axis=1))[:, None]
        return GroupElement(so3_exp(phi), rng.normal(scale=100.0, size=(n, 3)), rng.normal(scale=1e4, size=(n, 3)))
    res = errmodel.group_affine_residual(
        rand_group(), rand_group(), rng.normal(scale=0.1, size=(n, 3)),
        rng.normal(scale=10.0, size=(n, 3)), rng.normal(scale=10.0, size=(n, 3)),
    )
    add("group-affine residual (1000 triples)", np.max(res), 1e-11)

    w_b, _ = sim.static_truth(sim.SimConfig())
    worst = 0.0
    for _ in range(3):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        worst = max(worst, errmodel.log_linear_check(w_b, np.radians(170.0) * axis))
    add("log-linear deviation, 600 s static, 170 deg (rad)", worst, 1e-6)

    phi = rng.normal(size=(n, 3))
    phi *= (rng.uniform(0, np.pi - 1e-3, n) / np.linalg.norm(phi, axis=1))[:, None]
    jj = left_jacobian(phi) @ left_jacobian_inv(phi) - np.eye(3)
    add("J_l J_l^-1 - I", np.max(np.abs(jj)), 1e-10)
    zeta = np.concatenate([phi, rng.normal(size=(n, 6))], axis=1)
    add("se23 log(exp(x)) - x", np.max(np.abs(se23_log(se23_exp(zeta)) - zeta)), 1e-9)

    builder = _fault_builder(fault)
    for kind in ModelKind:
        fd = errmodel.finite_difference_check(kind, builder=builder)
        add(f"finite-difference F, {kind.value}", max(fd.values()), 1e-2)
        cc = errmodel.coupling_check(kind, builder=builder)
        add(f"finite-difference F blocks, {kind.value}", max(cc.values()), 1e-2)
    return rows


def cmd_check(seed=0, fault=None):
    rows = run_checks(seed, fault)
    width = max(len(r[0]) for r in rows)
    print(f"{'check':<{width}}  {'max residual':>12}  {'tolerance':>9}  result")
    for name, value, tol, ok in rows:
        print(f"{name:<{width}}  {value:12.3e}  {tol:9.1e}  {'PASS' if ok else 'FAIL'}")
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        print("failed: " + "; ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# --- plots -----------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_alignment(path, kind, t, values, is_error):
    plt = _pyplot()
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    for ax, col, name in zip(axes, values.T, ("pitch", "roll", "yaw")):
        ax.plot(t, col)
        ax.set_ylabel(f"{name} {'error ' if is_error else ''}(deg)")
        ax.grid(True)
    axes[-1].set_xlabel("time (s)")
    fig.suptitle(f"{kind.value.upper()} alignment")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _plot_mc(path, results):
    plt = _pyplot()
    fig, axes = plt.subplots(len(results), 1, sharex=True, figsize=(7, 2.2 * len(results)), squeeze=False)
    for ax, (kind, res) in zip(axes[:, 0], results.items()):
        ax.plot(res.t, res.errors[:, :, 2].T, lw=0.7)
        ax.set_ylabel(f"{kind.value} yaw err (deg)")
        ax.grid(True)
    axes[-1, 0].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# --- entry point -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="se23align", description="Inertial-frame initial alignment experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="INI configuration file")
        sp.add_argument("--out", help="output directory (overrides [run] out)")
        sp.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        sp.add_argument("--kinds", help="comma-separated subset of " + ",".join(ALL_KINDS))
        sp.add_argument("--plots", action="store_true", help="also write PNG plots")

    common(sub.add_parser("align", help="run one alignment per filter kind"))
    common(sub.add_parser("mc", help="Monte Carlo comparison of filter kinds"))
    common(sub.add_parser("replay", help="align recorded IMU/aiding CSV files"))
    chk = sub.add_parser("check", help="run the verification suite")
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--inject-fault", choices=["rse-sign"], help=argparse.SUPPRESS)
    return p


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args.seed, args.inject_fault)
        kinds = None
        if args.kinds is not None:
            try:
                kinds = parse_kinds(args.kinds)
            except ValueError as exc:
                raise UsageError(f"--kinds: {exc}") from None
        rc = load_config(args.config, seed=args.seed, out=args.out, kinds=kinds)
        if args.command == "align":
            return cmd_align(rc, args.plots)
        if args.command == "mc":
            return cmd_mc(rc, args.plots)
        return cmd_replay(rc, args.plots)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
