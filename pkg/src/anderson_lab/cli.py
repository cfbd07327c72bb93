"""Command-line front end.

Every subcommand writes its outputs to ``<outdir>/<experiment>/<timestamp>-<hash>/``
together with ``manifest.json`` listing the merged configuration, versions,
wall time and a SHA-256 digest of each file. Exit codes: 0 success, 2 verdict
failure, 1 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import config as config_mod
from .anderson_operator import (
    assemble,
    diagonalize,
    eigen_residual,
    gram_defect,
    weyl_profile,
)
from .config import EXPERIMENTS, RunConfig
from .errors import AndersonLabError, ConfigError
from .experiments import convergence_suite, invariance_test, tail_test
from .gaussian_fields import (
    coupled_sample,
    pseudo_wick_agff,
    sample_agff,
    sample_gff,
    scale_cross_correlation,
    shift_regularity_profile,
    wick_comparison_profile,
)
from .gibbs_measure import partition_estimate, sample_gibbs
from .parallel import set_workers
from .serialization import write_csv, write_field_csv, write_fields, write_spectral, write_spectrum_csv
from .spectral_core import (
    Mollifier,
    TorusGrid,
    besov_norm,
    enhanced_noise,
    sobolev_norm,
    zero_noise,
)
from .wave_dynamics import (
    PhasePoint,
    dpd_local_solve,
    flow_config,
    galerkin_flow,
    hamiltonian_energy,
    hs_matrix,
    local_time_estimate,
    sample_initial_data,
    theta_coords,
    theta_norms,
)

ENV_OUTDIR = "ANDERSON_LAB_OUTDIR"
MAX_STORED_FIELDS = 16


class Run:
    """Output directory of one invocation with its file registry."""

    def __init__(self, cfg: RunConfig, root: Path):
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        base = root / cfg.experiment / f"{stamp}-{cfg.hash()}"
        path, i = base, 1
        while path.exists():
            path = base.with_name(f"{base.name}-{i}")
            i += 1
        path.mkdir(parents=True)
        self.path = path
        self.files: list[Path] = []

    def file(self, name: str) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def csv(self, name, header, rows):
        return write_csv(self.file(name), header, rows)

    def text(self, name, text):
        self.file(name).write_text(text, encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# shared builders


def _mollifier(cfg: RunConfig) -> Mollifier:
    return Mollifier(cfg.epsilon, cfg.mollifier)


def _noise(cfg: RunConfig):
    grid = TorusGrid(cfg.grid)
    m = _mollifier(cfg)
    return zero_noise(grid, m) if cfg.zero_noise else enhanced_noise(grid, cfg.seed, m)


def _operator(cfg: RunConfig):
    noise = _noise(cfg)
    mat = assemble(noise, cfg.k_max, cfg.counterterm)
    return noise, mat, diagonalize(mat)


def _report(run: Run, report) -> bool:
    run.text("report.json", report.to_json() + "\n")
    run.text("report.md", report.to_markdown())
    run.csv("observables.csv", ["name", "before", "after", "std_error", "z_score", "passed"],
            report.observable_rows())
    return report.verdict


# --------------------------------------------------------------------------
# subcommands; each returns True (pass) or False (verdict failure)


def cmd_sample_noise(cfg: RunConfig, run: Run) -> bool:
    noise = _noise(cfg)
    write_fields(run.file("noise.bin"), [noise.xi, noise.xi_eps, noise.xi2_eps])
    write_field_csv(run.file("xi.csv"), noise.xi)
    write_field_csv(run.file("xi_eps.csv"), noise.xi_eps)
    rows = [("c_eps", noise.c_eps), ("trace", noise.trace)]
    for name, f in (("xi", noise.xi), ("xi_eps", noise.xi_eps), ("xi2_eps", noise.xi2_eps)):
        rows.append((f"{name}_C^-1.1", besov_norm(f, -1.1, np.inf, np.inf)))
        rows.append((f"{name}_H^-1.1", sobolev_norm(f, -1.1)))
    run.csv("summary.csv", ["quantity", "value"], rows)
    return True


def cmd_build_operator(cfg: RunConfig, run: Run) -> bool:
    _, mat, s = _operator(cfg)
    write_spectral(run.file("operator.bin"), s)
    write_spectrum_csv(run.file("spectrum.csv"), s)
    run.csv("diagnostics.csv", ["quantity", "value"], [
        ("size", s.size), ("shift_K", s.shift_K), ("counterterm", s.counterterm),
        ("eigen_residual", eigen_residual(mat, s)), ("gram_defect", gram_defect(s)),
    ])
    return True


def cmd_spectrum(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    write_spectrum_csv(run.file("spectrum.csv"), s)
    run.csv("weyl.csv", ["n", "lambda_shifted_over_n"], weyl_profile(s))
    return True


def cmd_sample_fields(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    grid = s.grid
    stored, rows = [], []
    for i in range(cfg.n_samples):
        g = sample_gff(grid, cfg.mass_K, cfg.seed, i)
        a = sample_agff(s, cfg.seed, i)
        if len(stored) < MAX_STORED_FIELDS:
            stored += [g, a]
        for kind, f in (("gff", g), ("agff", a)):
            rows.append((i, kind, f.l2_norm(), sobolev_norm(f, -cfg.delta)))
    write_fields(run.file("fields.bin"), stored)
    run.csv("fields.csv", ["index", "kind", "l2_norm", "h_minus_delta_norm"], rows)
    return True


def cmd_couple(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    rows, slopes = [], []

    def pairs():
        for i in range(cfg.n_samples):
            pair = coupled_sample(s, cfg.seed, i)
            prof = shift_regularity_profile(pair, 1.0 - cfg.delta)
            slopes.append((i, prof.slope, sobolev_norm(pair.h, 1.0 - cfg.delta) ** 2))
            rows.extend((i, int(j), e) for j, e in zip(prof.blocks, prof.energies))
            yield pair

    corr = scale_cross_correlation(pairs())
    run.csv("shift_blocks.csv", ["index", "block", "weighted_energy"], rows)
    run.csv("shift_summary.csv", ["index", "tail_slope", "h_norm_sq"], slopes)
    run.csv("scale_correlation.csv", ["block_G", "block_h", "correlation", "std_error"],
            ((int(bj), int(bi), corr.r[j, i], corr.se[j, i])
             for j, bj in enumerate(corr.blocks) for i, bi in enumerate(corr.blocks)))
    return True


def cmd_wick(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    m = _mollifier(cfg)
    rows = []
    for i in range(cfg.n_samples):
        pw = pseudo_wick_agff(coupled_sample(s, cfg.seed, i), cfg.wick_order, m)
        rows.append((i, pw.direct.integral(), pw.max_discrepancy()))
    run.csv("pseudo_wick.csv", ["index", "integral", "binomial_discrepancy"], rows)
    prof = wick_comparison_profile(s, m, max(cfg.n_samples, 2), cfg.seed)
    n = prof.exact.shape[0]
    run.csv("wick_profile.csv", ["ix", "iy", "monte_carlo", "exact", "std_error"],
            ((ix, iy, prof.monte_carlo[ix, iy], prof.exact[ix, iy], prof.std_error[ix, iy])
             for ix in range(n) for iy in range(n)))
    return True


def cmd_gibbs(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    m = _mollifier(cfg)
    ens = sample_gibbs(s, m, cfg.galerkin_N, cfg.n_samples, cfg.seed, cfg.gibbs_variant,
                       mode=cfg.sampler, interacting=cfg.interacting)
    run.csv("samples.csv", ["index", "V", "log_weight", "u_1", "u_2"],
            ((i, v, lw, c[0], c[1]) for i, (v, lw, c) in enumerate(zip(ens.V, ens.log_weights, ens.coords))))
    z, se = partition_estimate(s, m, cfg.galerkin_N, cfg.n_samples, cfg.seed, cfg.gibbs_variant)
    run.csv("summary.csv", ["quantity", "value"], [
        ("acceptance_rate", ens.acceptance_rate), ("effective_sample_size", ens.effective_sample_size),
        ("partition_Z", z), ("partition_Z_se", se),
    ])
    return True


def _flow(cfg: RunConfig, s, T: float):
    return flow_config(s, cfg.galerkin_N, _mollifier(cfg), cfg.dt, T, cfg.wick_reference,
                       cfg.interacting, cfg.focusing, variant=cfg.gibbs_variant)


def cmd_evolve(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    fc = _flow(cfg, s, cfg.T)
    p0 = sample_initial_data(s, cfg.seed)
    traj = galerkin_flow(p0, fc)
    energy = hamiltonian_energy(PhasePoint(traj.u, traj.ut), fc)
    h01 = hs_matrix(s, s.size, -0.1)
    norms = np.linalg.norm(traj.u @ h01, axis=1)
    run.csv("trajectory.csv", ["t", "energy", "h_minus_0.1_norm", "u_1", "u_2"],
            zip(traj.times, energy, norms, traj.u[:, 0], traj.u[:, 1]))
    return True


def cmd_local_solve(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    p0 = sample_initial_data(s, cfg.seed)
    fc = _flow(cfg, s, cfg.T)
    probe = np.arange(int(round(1.0 / cfg.dt)) + 1) * cfg.dt
    norms = theta_norms(theta_coords(p0, s, probe), fc, probe, cfg.p, cfg.delta)
    t_local = local_time_estimate(norms, cfg.p)
    T = min(cfg.T, t_local)
    steps = max(1, int(T / cfg.dt))
    times = np.arange(steps + 1) * cfg.dt
    res = dpd_local_solve(theta_coords(p0, s, times), fc, steps * cfg.dt, delta=cfg.delta)
    run.csv("picard.csv", ["iteration", "increment", "ratio"],
            ((i + 1, inc, res.ratios[i - 1] if i else float("nan")) for i, inc in enumerate(res.increments)))
    run.csv("summary.csv", ["quantity", "value"], [
        ("theta3_norm", norms[0]), ("theta2_norm", norms[1]), ("theta_norm", norms[2]),
        ("local_time", t_local), ("solve_time", steps * cfg.dt), ("iterations", res.iterations),
        ("contraction", res.contraction), ("residual", res.residual),
    ])
    return res.contraction < 0.5


def cmd_invariance(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    rep = invariance_test(s, _mollifier(cfg), cfg.galerkin_N, cfg.t_evolve, cfg.n_samples, cfg.seed,
                          dt=cfg.dt,
                          variant=cfg.gibbs_variant, mode=cfg.sampler, interacting=cfg.interacting)
    return _report(run, rep)


def cmd_tails(cfg: RunConfig, run: Run) -> bool:
    _, _, s = _operator(cfg)
    rep = tail_test(s, _mollifier(cfg), cfg.n_samples, cfg.wick_order, seed_base=cfg.seed,
                    p=cfg.p, delta=cfg.delta)
    run.csv("survival.csv", ["R", "survival"], zip(rep.details["thresholds"], rep.details["survival"]))
    return _report(run, rep)


def cmd_converge(cfg: RunConfig, run: Run) -> bool:
    rep = convergence_suite(dict(grid=cfg.grid, k_max=cfg.k_max, epsilon=cfg.epsilon, seed=cfg.seed,
                                 mollifier=cfg.mollifier, zero_noise=cfg.zero_noise,
                                 wick_order=cfg.wick_order, T=cfg.T))
    run.csv("ladders.csv", ["study", "parameter", "distance"],
            ((k, p, d) for k, v in rep.details.items() for p, d in zip(v["params"], v["distances"])))
    return _report(run, rep)


COMMANDS = {
    "sample-noise": cmd_sample_noise,
    "build-operator": cmd_build_operator,
    "spectrum": cmd_spectrum,
    "sample-fields": cmd_sample_fields,
    "couple": cmd_couple,
    "wick": cmd_wick,
    "gibbs": cmd_gibbs,
    "evolve": cmd_evolve,
    "local-solve": cmd_local_solve,
    "invariance": cmd_invariance,
    "tails": cmd_tails,
    "converge": cmd_converge,
}
assert set(COMMANDS) == set(EXPERIMENTS)


# --------------------------------------------------------------------------
# entry points


def run(subcommand: str, config_path=None, overrides=(), seed: int | None = None,
        outdir=None, threads: int | None = None) -> tuple[int, Path | None]:
    """Execute one subcommand; returns ``(exit_code, run_directory)``."""
    env = os.environ.get(ENV_OUTDIR)
    try:
        cfg = config_mod.load(config_path, overrides, defaults={"outdir": env} if env else None,
                              experiment=subcommand, seed=seed,
                              outdir=None if outdir is None else str(outdir))
    except ConfigError as exc:
        print(f"error: configuration key {exc.key!r}: {exc}", file=sys.stderr)
        return 1, None
    set_workers(threads)
    out = Run(cfg, Path(cfg.outdir))
    t0 = time.perf_counter()
    try:
        passed = COMMANDS[subcommand](cfg, out)
        code = 0 if passed else 2
        error = None
    except (AndersonLabError, ValueError, ArithmeticError) as exc:
        code, error = 1, f"{type(exc).__name__}: {exc}"
        print(f"error: {subcommand}: {error}", file=sys.stderr)
    manifest = dict(
        experiment=subcommand, config=cfg.to_dict(), config_hash=cfg.hash(), seed=cfg.seed,
        exit_code=code, error=error, wall_time=time.perf_counter() - t0, threads=threads,
        versions=dict(anderson_lab=__version__, python=platform.python_version(),
                      numpy=np.__version__, scipy=scipy.__version__),
        files={p.name: _sha256(p) for p in out.files},
    )
    (out.path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    return code, out.path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anderson-lab",
                                     description="Anderson Hamiltonian and wave-dynamics laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="seed (u64), overrides the file")
        p.add_argument("--outdir", type=Path, help=f"output root (default ${ENV_OUTDIR} or ./runs)")
        p.add_argument("--threads", type=int, help="worker-count hint; results do not depend on it")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
    v = sub.add_parser("validate", help="check a configuration without running")
    v.add_argument("--config", type=Path)
    v.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def validate_command(config_path, overrides) -> int:
    d = {}
    if config_path is not None:
        try:
            d = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config: cannot read ({exc})")
            return 1
    try:
        d.update(dict(config_mod.parse_override(o) for o in overrides))
    except ConfigError as exc:
        print(f"{exc.key}: {exc}")
        return 1
    diags = config_mod.validate(d)
    for line in diags:
        print(line)
    return 1 if diags else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return validate_command(args.config, args.overrides)
    code, path = run(args.command, args.config, args.overrides, args.seed, args.outdir, args.threads)
    if path is not None:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
