"""Command-line front end: circuit | sample | fit | latency | distill."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from . import analytics, distill, timing
from .baselines import baseline_memory_circuit
from .circuit import CircuitError, emit_text, lower
from .config import ConfigError, ExperimentConfig, load_config, task_seed
from .decoder import DecoderError, estimate_ler
from .geometry import GeometryError, assign_waves, make_patch
from .schedule import ScheduleError, build_memory_experiment, build_se_round, validate

__all__ = ["main", "cmd_circuit", "cmd_sample", "cmd_fit", "cmd_latency", "cmd_distill",
           "memory_circuit"]

LER_FIELDS = ["arch", "d", "rho", "p_g", "p_sh", "p_id", "shots", "failures", "p_L",
              "ci_low", "ci_high"]


class CliError(RuntimeError):
    """Validation failure; exits nonzero."""


def _meta(cfg: ExperimentConfig) -> str:
    return f"# config={cfg.digest()} seed={cfg.seed}\n"


def _write(cfg: ExperimentConfig, name: str, body: str, meta: bool = True) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w") as f:
        f.write((_meta(cfg) if meta else "") + body)
    return path


def _csv(rows: list[dict], fieldnames=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames or list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def memory_circuit(cfg: ExperimentConfig, d: int, basis: str):
    rounds = cfg.rounds or d
    if cfg.arch != "SNAQ":
        return baseline_memory_circuit(cfg.arch, d, rounds, basis, cfg.noise, cfg.timing)
    patch = make_patch(d)
    sched = build_memory_experiment(patch, rounds, basis, assign_waves(patch, cfg.rho),
                                    cfg.timing, cfg.mode)
    report = validate(sched)
    if not report.ok:
        raise CliError(f"schedule for d={d} basis {basis} failed validation: {report}")
    return lower(sched, cfg.noise)


def cmd_circuit(cfg: ExperimentConfig) -> list[str]:
    """One circuit text file per distance and basis."""
    paths = []
    for d in sorted(cfg.distances):
        for b in cfg.bases:
            if cfg.arch == "SNAQ" and cfg.mode == "two_column":
                patch = make_patch(d)
                sched = build_se_round(patch, assign_waves(patch, cfg.rho), cfg.timing,
                                       cfg.mode, cfg.rounds or d)
                if not validate(sched).ok:
                    raise CliError(f"schedule for d={d} failed validation")
                text = emit_text(lower(sched, cfg.noise))
            else:
                text = emit_text(memory_circuit(cfg, d, b))
            paths.append(_write(cfg, f"circuit_{cfg.arch}_d{d}_{b}.stim", text))
    return paths


def cmd_sample(cfg: ExperimentConfig) -> str:
    rows = []
    for d in sorted(cfg.distances):
        cx = memory_circuit(cfg, d, "X") if "X" in cfg.bases else None
        cz = memory_circuit(cfg, d, "Z") if "Z" in cfg.bases else None
        est = estimate_ler(cx, cz, cfg.shots, task_seed(cfg.seed, "sample", cfg.arch, d),
                           cfg.decoder, cfg.threads)
        rows.append({"arch": cfg.arch, "d": d, "rho": cfg.rho, "p_g": cfg.noise.p_g,
                     "p_sh": cfg.noise.p_sh, "p_id": cfg.noise.p_id, "shots": est.shots,
                     "failures": est.failures, "p_L": repr(est.p_L),
                     "ci_low": repr(est.ci_low), "ci_high": repr(est.ci_high)})
    return _write(cfg, f"ler_{cfg.arch}.csv", _csv(rows, LER_FIELDS))


def read_ler_csv(path) -> list[dict]:
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_fit(cfg: ExperimentConfig, ler_csv: str, arch: str | None = None,
            rho: float | None = None) -> str:
    rows = read_ler_csv(ler_csv)
    arch = arch or (rows[0]["arch"] if rows else cfg.arch)
    rho = rho if rho is not None else float(rows[0]["rho"]) if rows else cfg.rho
    pts = []
    for r in rows:
        if r["arch"] != arch:
            continue
        p = float(r["p_L"])
        if p <= 0:
            raise CliError(f"d={r['d']} has no failures; rerun with more shots")
        pts.append((int(r["d"]), p, (float(r["ci_low"]), float(r["ci_high"]))))
    fit = analytics.fit_scaling(pts, rho, arch, seed=task_seed(cfg.seed, "fit", arch))
    body = json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n"
    return _write(cfg, f"fit_{arch}.json", body, meta=False)


def cmd_latency(cfg: ExperimentConfig, target: float | None = None,
                fit_paths=()) -> list[str]:
    rows = timing.latency_table(sorted(cfg.distances), (cfg.rho,), cfg.separations, cfg.timing)
    paths = [_write(cfg, "latency.csv", _csv(rows))]
    fit_paths = list(fit_paths) or list(cfg.fits)
    if target is not None and fit_paths:
        fits = {}
        for p in fit_paths:
            f = analytics.load_fit(p)
            fits[f.arch] = f
        cmp = timing.clock_speed_comparison(fits, target, cfg.rho, cfg.timing)
        out = []
        for arch, r in cmp["archs"].items():
            out.append({"arch": arch, "target_p_L": target, "rho": cmp["rho"], "d": r["d"],
                        "operation": r["operation"], "time_ns": r["time_ns"],
                        "speedup_of_snaq": 1.0 if arch == "SNAQ" else cmp["speedup"][arch]})
        paths.append(_write(cfg, "speedup.csv", _csv(out)))
    return paths


def cmd_distill(cfg: ExperimentConfig, distances=None) -> str:
    ds = distances or (7, 15)
    rows = distill.table2(ds, cfg.rho, cfg.timing)
    return _write(cfg, "distill.csv", distill.to_csv(rows))


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snaqsim", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--shots", type=int)
    common.add_argument("--threads", type=int)
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("circuit", parents=[common], help="emit noisy circuits")
    sub.add_parser("sample", parents=[common], help="estimate logical error rates")
    f = sub.add_parser("fit", parents=[common], help="fit the scaling model to a LER CSV")
    f.add_argument("ler_csv")
    f.add_argument("--arch")
    f.add_argument("--rho", type=float)
    lat = sub.add_parser("latency", parents=[common], help="latency and speedup tables")
    lat.add_argument("--target", type=float)
    lat.add_argument("--fits", nargs="*", default=[])
    dist = sub.add_parser("distill", parents=[common], help="15-to-1 distillation costs")
    dist.add_argument("--distances", type=int, nargs="*")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    if args.shots is not None and args.shots < 1:
        ap.error("--shots must be a positive integer")
    if args.threads is not None and args.threads < 1:
        ap.error("--threads must be a positive integer")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, shots=args.shots,
                                 threads=args.threads)
        if args.cmd == "circuit":
            out = cmd_circuit(cfg)
        elif args.cmd == "sample":
            out = cmd_sample(cfg)
        elif args.cmd == "fit":
            out = cmd_fit(cfg, args.ler_csv, args.arch, args.rho)
        elif args.cmd == "latency":
            out = cmd_latency(cfg, args.target, args.fits)
        else:
            out = cmd_distill(cfg, args.distances)
    except (ConfigError, GeometryError, ScheduleError, CircuitError, DecoderError,
            analytics.FitError, analytics.ErrorFloorError, CliError, OSError) as e:
        print(f"snaqsim {args.cmd}: {e}", file=sys.stderr)
        return 1
    for p in out if isinstance(out, list) else [out]:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
