"""Batch runner and comparison harness.

``qfluor run`` executes any subset of the four methods (davydov, tlme,
rwa_tlme, heom) for one configuration and writes per-method CSV files plus
structured-text metadata into an output directory; ``qfluor compare``
computes agreement metrics between two run directories; ``qfluor
emit-plots`` writes self-contained matplotlib scripts that render the CSVs
(no rendering happens inside the toolkit).

Outputs are deterministic: a given config file and seed fix every byte of
every file.  The environment variable QFLUOR_THREADS caps the number of
methods executed concurrently (default: sequential).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import davydov as dv
from . import heom as hm
from .floquet import FloquetConvergenceError, compute_floquet_basis
from .io import fmt, read_csv, read_keyvals, write_csv, write_keyvals
from .master_eq import correlator_grid, evolve_rho, spectrum_from_correlator
from .model import ConfigError, DiscretizedBath, ModelConfig, discretize_bath

KNOWN_METHODS = ("davydov", "tlme", "rwa_tlme", "heom")
DESK_N_MODES = 60
DESK_MULTIPLICITY = 4
DEFAULT_SEED = 12345
DEFAULT_HEOM_DEPTH = 4

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    """What a run produced; serialized as manifest.txt in the output dir."""

    config_path: str
    methods: list
    out_dir: str
    seed: int
    desk_scale: bool
    run_ids: dict = field(default_factory=dict)
    status: dict = field(default_factory=dict)

    def to_mapping(self) -> dict:
        out = {
            "config_path": self.config_path,
            "methods": ",".join(self.methods),
            "out_dir": self.out_dir,
            "seed": self.seed,
            "desk_scale": self.desk_scale,
        }
        for m in self.methods:
            out[f"run_id.{m}"] = self.run_ids.get(m, "")
            out[f"status.{m}"] = self.status.get(m, "pending")
        return out

    def write(self) -> None:
        write_keyvals(Path(self.out_dir) / "manifest.txt", self.to_mapping())


@dataclass
class PairMetrics:
    """Agreement metrics for one (method_a, method_b) pair."""

    method_a: str
    method_b: str
    pz_linf: float
    pz_l2: float
    n_disc_per_mode: np.ndarray | None
    n_disc_aggregate: float | None
    asymmetry_a: float | None
    asymmetry_b: float | None
    asymmetry_time: float | None
    omega_ref: float | None


@dataclass
class ComparisonReport:
    dir_a: str
    dir_b: str
    pairs: list

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# qfluor comparison report\nrun_a = {self.dir_a}\nrun_b = {self.dir_b}\n")
            for p in self.pairs:
                fh.write(f"\n[pair {p.method_a} vs {p.method_b}]\n")
                fh.write(f"pz_linf = {fmt(p.pz_linf)}\n")
                fh.write(f"pz_l2 = {fmt(p.pz_l2)}\n")
                if p.n_disc_aggregate is not None:
                    fh.write(f"spectrum_disc_aggregate = {fmt(p.n_disc_aggregate)}\n")
                    fh.write(f"spectrum_disc_max_mode = {fmt(np.max(p.n_disc_per_mode))}\n")
                if p.asymmetry_a is not None:
                    fh.write(f"asymmetry_a = {fmt(p.asymmetry_a)}\n")
                    fh.write(f"asymmetry_b = {fmt(p.asymmetry_b)}\n")
                    fh.write(f"asymmetry_time = {fmt(p.asymmetry_time)}\n")
                    fh.write(f"asymmetry_omega_ref = {fmt(p.omega_ref)}\n")


def spectrum_asymmetry(omegas, values, omega_ref: float) -> float:
    """Relative L1 mirror asymmetry of one spectrum cut about omega_ref.

    Pairs N(omega_ref + delta) with N(omega_ref - delta) on a uniform delta
    ladder spanned by the mode grid (linear interpolation between modes);
    returns sum|N+ - N-| / sum|N+ + N-|, in [0, 1], 0 for a mirror-symmetric
    spectrum.
    """
    omegas = np.asarray(omegas, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = omegas[0], omegas[-1]
    step = (hi - lo) / max(omegas.size - 1, 1)
    max_delta = min(omega_ref - lo, hi - omega_ref)
    if max_delta <= step:
        return 0.0
    deltas = np.arange(1, int(max_delta / step) + 1) * step
    upper = np.interp(omega_ref + deltas, omegas, values)
    lower = np.interp(omega_ref - deltas, omegas, values)
    denom = float(np.sum(np.abs(upper + lower)))
    if denom == 0.0:
        return 0.0
    return float(np.sum(np.abs(upper - lower)) / denom)


def _sample_grid(cfg: ModelConfig) -> tuple[np.ndarray, float]:
    """Observable sample times: dt-aligned, ~0.1/omega0 spacing."""
    stride = max(int(round(0.1 / (cfg.omega0 * cfg.dt))), 1)
    dt_corr = stride * cfg.dt
    n_steps = int(round(cfg.t_final / cfg.dt))
    steps = np.arange(0, n_steps + 1, stride)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps * cfg.dt, dt_corr


def _run_davydov(cfg, bath, out, seed, meta):
    times, _ = _sample_grid(cfg)
    state = dv.init_state(cfg, bath, seed=seed)
    traj = dv.evolve(state, cfg, bath, sample_times=times)
    # full trajectory layout: t, P_z, norm, sigma2, then one N column per mode
    names = ["t", "P_z", "norm", "sigma2"] + [f"N@{fmt(w)}" for w in bath.omegas]
    cols = [traj.times, traj.pz, traj.norms, traj.sigma2]
    cols += [traj.photons[:, k] for k in range(bath.n_modes)]
    write_csv(out / "davydov_dynamics.csv", names, cols, meta)
    _write_spectrum_csv(out / "davydov_spectrum.csv", traj.times, bath.omegas,
                        traj.photons, meta)
    extra = dict(meta)
    extra["norm_warnings"] = len(traj.norm_warnings)
    write_keyvals(out / "davydov_meta.txt", extra)


def _run_tlme(cfg, bath, out, seed, meta, rwa: bool):
    name = "rwa_tlme" if rwa else "tlme"
    times, dt_corr = _sample_grid(cfg)
    basis = compute_floquet_basis(cfg)
    rho = evolve_rho(cfg, basis, None, cfg.t_final, cfg.dt, rwa=rwa)
    grid = correlator_grid(cfg, basis, cfg.t_final, dt_corr, cfg.dt, rwa=rwa,
                           rho_traj=rho)
    spec_times = times[np.isclose(times / dt_corr, np.round(times / dt_corr))]
    frame = spectrum_from_correlator(grid, bath, spec_times, method=name)
    pz = rho.population_difference()
    idx = [rho.index_of(t) for t in times]
    write_csv(out / f"{name}_dynamics.csv", ["t", "P_z"], [times, pz[idx]], meta)
    _write_spectrum_csv(out / f"{name}_spectrum.csv", frame.times, bath.omegas,
                        frame.values, meta)
    extra = dict(meta)
    extra["dt_corr"] = fmt(dt_corr)
    extra["trace_error"] = fmt(rho.trace_error())
    extra["quasienergies"] = " ".join(fmt(e) for e in basis.quasienergies)
    write_keyvals(out / f"{name}_meta.txt", extra)


def _run_heom(cfg, bath, out, seed, meta, depth: int, depth_check: bool):
    times, _ = _sample_grid(cfg)
    fit = hm.fit_correlation(cfg, seed=seed + 7)
    stride = max(int(round((times[1] - times[0]) / cfg.dt)), 1) if times.size > 1 else 1
    traj = hm.evolve_heom(cfg, fit, depth, cfg.t_final, cfg.dt, sample_stride=stride)
    write_csv(out / "heom_dynamics.csv", ["t", "P_z"], [traj.times, traj.pz], meta)
    (out / "heom_fit.txt").write_text(fit.to_text())
    extra = dict(meta)
    extra["n_trun"] = depth
    extra["fit_residual_r"] = fmt(fit.residual_r)
    extra["fit_residual_i"] = fmt(fit.residual_i)
    if depth_check:
        deeper = hm.evolve_heom(cfg, fit, depth + 1, cfg.t_final, cfg.dt,
                                sample_stride=stride)
        delta = float(np.abs(deeper.pz - traj.pz).max())
        extra["depth_delta"] = fmt(delta)
        extra["depth_delta_depths"] = f"{depth}->{depth + 1}"
    write_keyvals(out / "heom_meta.txt", extra)


def _write_spectrum_csv(path, times, omegas, values, meta):
    cols = [np.asarray(times)] + [values[:, k] for k in range(len(omegas))]
    names = ["t"] + [f"N@{fmt(w)}" for w in omegas]
    write_csv(path, names, cols, meta)


def _read_spectrum_csv(path):
    meta, names, data = read_csv(path)
    omegas = np.array([float(n.split("@", 1)[1]) for n in names[1:]])
    return data[:, 0], omegas, data[:, 1:]


def run(config_file, methods, out_dir, *, seed: int = DEFAULT_SEED,
        desk_scale: bool = False, heom_depth: int = DEFAULT_HEOM_DEPTH,
        heom_depth_check: bool = True, max_workers: int | None = None) -> RunManifest:
    """Execute the requested methods for one configuration.

    Per-method CSVs and metadata land in ``out_dir``; the manifest records
    completion status.  Raises CliError with the appropriate exit code on
    configuration or numerical failure.
    """
    methods = list(methods)
    for m in methods:
        if m not in KNOWN_METHODS:
            raise CliError(f"unknown method {m!r}; known: {', '.join(KNOWN_METHODS)}",
                           EXIT_CONFIG)
    if not methods:
        raise CliError("no methods requested", EXIT_CONFIG)
    try:
        cfg = ModelConfig.from_file(config_file)
    except ConfigError as exc:
        raise CliError(f"bad config {config_file}: {exc}", EXIT_CONFIG) from exc
    except OSError as exc:
        raise CliError(f"cannot read config {config_file}: {exc}", EXIT_CONFIG) from exc
    if desk_scale:
        cfg = cfg.replace(n_modes=DESK_N_MODES,
                          multiplicity=min(cfg.multiplicity, DESK_MULTIPLICITY))
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output dir {out_dir} not writable: {exc}", EXIT_CONFIG) from exc

    bath = discretize_bath(cfg)
    config_text = cfg.to_text()
    (out / "config.txt").write_text(config_text)
    bath.to_csv(out / "bath.csv")

    manifest = RunManifest(
        config_path=str(config_file), methods=methods, out_dir=str(out_dir),
        seed=seed, desk_scale=desk_scale,
    )
    digest_base = config_text + f"|seed={seed}|desk={desk_scale}"
    for m in methods:
        manifest.run_ids[m] = hashlib.sha256(
            (digest_base + "|" + m).encode()).hexdigest()[:12]

    base_meta = {
        "seed": seed,
        "multiplicity": cfg.multiplicity,
        "n_modes": cfg.n_modes,
        "dt": fmt(cfg.dt),
        "config": config_text.replace("\n", "; ").rstrip("; "),
    }

    def execute(m: str):
        meta = dict(base_meta)
        meta["method"] = m
        meta["run_id"] = manifest.run_ids[m]
        if m == "davydov":
            _run_davydov(cfg, bath, out, seed, meta)
        elif m == "tlme":
            _run_tlme(cfg, bath, out, seed, meta, rwa=False)
        elif m == "rwa_tlme":
            _run_tlme(cfg, bath, out, seed, meta, rwa=True)
        elif m == "heom":
            _run_heom(cfg, bath, out, seed, meta, heom_depth, heom_depth_check)

    workers = max_workers
    if workers is None:
        env = os.environ.get("QFLUOR_THREADS", "")
        workers = int(env) if env.strip() else 1
    errors = {}
    if workers > 1 and len(methods) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {m: pool.submit(execute, m) for m in methods}
        for m, fut in futures.items():
            exc = fut.exception()
            if exc is not None:
                errors[m] = exc
            manifest.status[m] = "failed" if exc is not None else "complete"
    else:
        for m in methods:
            try:
                execute(m)
                manifest.status[m] = "complete"
            except Exception as exc:          # noqa: BLE001 - recorded and re-raised
                errors[m] = exc
                manifest.status[m] = "failed"
    manifest.write()
    if errors:
        m, exc = next(iter(errors.items()))
        if isinstance(exc, (ConfigError, ValueError)):
            raise CliError(f"method {m}: {exc}", EXIT_CONFIG) from exc
        raise CliError(f"method {m}: {exc}", EXIT_NUMERICAL) from exc
    return manifest


def _load_run(run_dir):
    out = Path(run_dir)
    manifest = read_keyvals(out / "manifest.txt")
    methods = [m for m in manifest.get("methods", "").split(",") if m]
    bath = DiscretizedBath.from_csv(out / "bath.csv")
    dyn, spec = {}, {}
    for m in methods:
        path = out / f"{m}_dynamics.csv"
        if path.exists():
            _, names, data = read_csv(path)
            dyn[m] = (data[:, 0], data[:, names.index("P_z")])
        spath = out / f"{m}_spectrum.csv"
        if spath.exists():
            spec[m] = _read_spectrum_csv(spath)
    return manifest, bath, dyn, spec


def compare(run_a, run_b, *, omega_ref: float | None = None,
            asym_time: float | None = None) -> ComparisonReport:
    """Agreement metrics for every method pair across two run directories.

    Requires identical bath discretizations and overlapping time grids.  The
    spectrum asymmetry is evaluated per side about ``omega_ref`` (default:
    the configured drive frequency) at ``asym_time`` (default: the last
    common spectrum time).
    """
    man_a, bath_a, dyn_a, spec_a = _load_run(run_a)
    man_b, bath_b, dyn_b, spec_b = _load_run(run_b)
    if bath_a.n_modes != bath_b.n_modes or not np.allclose(
            bath_a.omegas, bath_b.omegas, rtol=0, atol=1e-12):
        raise CliError("bath discretizations differ between runs", EXIT_CONFIG)
    if omega_ref is None:
        cfg_a = ModelConfig.from_file(Path(run_a) / "config.txt")
        omega_ref = cfg_a.omega_x

    pairs = []
    for ma, (ta, pa) in sorted(dyn_a.items()):
        for mb, (tb, pb) in sorted(dyn_b.items()):
            common = np.intersect1d(np.round(ta, 9), np.round(tb, 9))
            if common.size < 2:
                raise CliError(
                    f"time grids of {ma} and {mb} do not overlap", EXIT_CONFIG)
            ia = np.searchsorted(np.round(ta, 9), common)
            ib = np.searchsorted(np.round(tb, 9), common)
            diff = pa[ia] - pb[ib]
            pz_linf = float(np.abs(diff).max())
            pz_l2 = float(np.sqrt(np.trapezoid(diff**2, common)))
            n_disc = agg = asy_a = asy_b = t_asym = None
            if ma in spec_a and mb in spec_b:
                sta, oma, va = spec_a[ma]
                stb, omb, vb = spec_b[mb]
                sc = np.intersect1d(np.round(sta, 9), np.round(stb, 9))
                if sc.size:
                    ja = np.searchsorted(np.round(sta, 9), sc)
                    jb = np.searchsorted(np.round(stb, 9), sc)
                    da, db = va[ja], vb[jb]
                    peak_mode = np.maximum(np.abs(da), np.abs(db)).max(axis=0)
                    safe = np.where(peak_mode > 0, peak_mode, 1.0)
                    n_disc = np.abs(da - db).max(axis=0) / safe
                    gpeak = peak_mode.max()
                    agg = float(np.abs(da - db).max() / gpeak) if gpeak > 0 else 0.0
                    t_asym = asym_time if asym_time is not None else float(sc[-1])
                    row_a = da[np.argmin(np.abs(sc - t_asym))]
                    row_b = db[np.argmin(np.abs(sc - t_asym))]
                    asy_a = spectrum_asymmetry(oma, row_a, omega_ref)
                    asy_b = spectrum_asymmetry(omb, row_b, omega_ref)
            pairs.append(PairMetrics(ma, mb, pz_linf, pz_l2, n_disc, agg,
                                     asy_a, asy_b, t_asym, omega_ref))
    return ComparisonReport(dir_a=str(run_a), dir_b=str(run_b), pairs=pairs)


_PLOT_DYNAMICS = '''\
"""Render P_z(t) curves from the run CSVs (written by qfluor emit-plots)."""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

here = Path(__file__).parent
fig, ax = plt.subplots(figsize=(7, 4))
for path in sorted(here.glob("*_dynamics.csv")):
    rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    names = rows[0].split(",")
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    ax.plot(data[:, 0], data[:, names.index("P_z")], label=path.stem.replace("_dynamics", ""))
ax.set_xlabel("t [1/omega0]"); ax.set_ylabel("P_z"); ax.legend()
fig.tight_layout(); fig.savefig(here / "dynamics.png", dpi=150)
'''

_PLOT_DEVIATION = '''\
"""Render the variational deviation sigma^2(t) (written by qfluor emit-plots)."""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

here = Path(__file__).parent
path = here / "davydov_dynamics.csv"
rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
names = rows[0].split(",")
data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
fig, ax = plt.subplots(figsize=(7, 4))
ax.semilogy(data[:, 0], np.maximum(data[:, names.index("sigma2")], 1e-30))
ax.set_xlabel("t [1/omega0]"); ax.set_ylabel("sigma^2")
fig.tight_layout(); fig.savefig(here / "deviation.png", dpi=150)
'''

_PLOT_SPECTRUM = '''\
"""Render N(omega, t) heatmap and cuts for METHOD (written by qfluor emit-plots)."""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from pathlib import Path

here = Path(__file__).parent
path = here / "METHOD_spectrum.csv"
rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
names = rows[0].split(",")
omegas = np.array([float(n.split("@", 1)[1]) for n in names[1:]])
data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
t, vals = data[:, 0], data[:, 1:]
fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4))
pm = ax0.pcolormesh(omegas, t, vals, shading="nearest")
fig.colorbar(pm, ax=ax0, label="N(omega, t)")
ax0.set_xlabel("omega [omega0]"); ax0.set_ylabel("t [1/omega0]")
for frac in (0.33, 0.66, 1.0):
    i = min(int(frac * (len(t) - 1)), len(t) - 1)
    ax1.plot(omegas, vals[i], label=f"t={t[i]:.1f}")
ax1.set_xlabel("omega [omega0]"); ax1.set_ylabel("N"); ax1.legend()
fig.tight_layout(); fig.savefig(here / "METHOD_spectrum.png", dpi=150)
'''


def emit_plots(run_dir) -> list:
    """Write self-contained matplotlib scripts next to the run CSVs."""
    out = Path(run_dir)
    if not (out / "manifest.txt").exists():
        raise CliError(f"{run_dir} does not look like a run directory", EXIT_CONFIG)
    written = []
    if any(out.glob("*_dynamics.csv")):
        (out / "plot_dynamics.py").write_text(_PLOT_DYNAMICS)
        written.append(out / "plot_dynamics.py")
    if (out / "davydov_dynamics.csv").exists():
        (out / "plot_deviation.py").write_text(_PLOT_DEVIATION)
        written.append(out / "plot_deviation.py")
    for spath in sorted(out.glob("*_spectrum.csv")):
        method = spath.name.replace("_spectrum.csv", "")
        script = out / f"plot_spectrum_{method}.py"
        script.write_text(_PLOT_SPECTRUM.replace("METHOD", method))
        written.append(script)
    if not written:
        raise CliError(f"no CSV outputs found in {run_dir}", EXIT_CONFIG)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qfluor",
        description="Driven-qubit fluorescence toolkit: batch runner and comparison harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute methods for one configuration")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--methods", required=True,
                       help="comma-separated subset of: " + ",".join(KNOWN_METHODS))
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_run.add_argument("--desk-scale", action="store_true",
                       help=f"override to N_b={DESK_N_MODES}, M<={DESK_MULTIPLICITY}")
    p_run.add_argument("--heom-depth", type=int, default=DEFAULT_HEOM_DEPTH)
    p_run.add_argument("--no-heom-depth-check", action="store_true")

    p_cmp = sub.add_parser("compare", help="agreement metrics between two runs")
    p_cmp.add_argument("--a", required=True)
    p_cmp.add_argument("--b", required=True)
    p_cmp.add_argument("--omega-ref", type=float, default=None)
    p_cmp.add_argument("--out", default=None, help="report path (default: <a>/compare.txt)")

    p_plt = sub.add_parser("emit-plots", help="write plot scripts for a run directory")
    p_plt.add_argument("--run", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            manifest = run(args.config, methods, args.out, seed=args.seed,
                           desk_scale=args.desk_scale, heom_depth=args.heom_depth,
                           heom_depth_check=not args.no_heom_depth_check)
            print(f"run complete: {manifest.out_dir} ({', '.join(methods)})")
        elif args.command == "compare":
            report = compare(args.a, args.b, omega_ref=args.omega_ref)
            target = args.out or (Path(args.a) / "compare.txt")
            report.write(target)
            print(f"comparison written: {target}")
        elif args.command == "emit-plots":
            written = emit_plots(args.run)
            print("wrote: " + ", ".join(str(w) for w in written))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloquetConvergenceError, hm.FitError, hm.HierarchyDivergenceError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
