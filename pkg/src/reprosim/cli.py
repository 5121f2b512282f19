"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 audit
mismatch, 4 audit indeterminate.
"""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from pathlib import Path

from .collaboratorium import run_closed, run_open
from .config import ConfigError, ScenarioConfig, load_scenario, shipped_scenario_path, shipped_scenarios
from .experiment import (
    BackgroundKnowledge,
    RecordFormatError,
    audit,
    deserialize,
    derive_seed,
    dumps_canonical,
    run_experiment,
    serialize,
)
from .reproducibility import (
    EpistemicUnavailabilityError,
    Scenario,
    is_reproduced,
    replicate,
    reproducibility_rate,
)

log = logging.getLogger("reprosim")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_MISMATCH, EXIT_INDETERMINATE = 0, 1, 2, 3, 4

REPORT_VERSION = 1


def _report(kind: str, cfg: ScenarioConfig, seed: int, body: dict) -> bytes:
    resolved = copy.deepcopy(cfg.raw)
    resolved["master_seed"] = seed
    return dumps_canonical(
        {
            "format": f"reprosim/{kind}-report",
            "version": REPORT_VERSION,
            "master_seed": seed,
            "config": resolved,
            "report": body,
        }
    )


def _write(path: Path, blob: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    log.info("wrote %s", path)


def _fmt(x) -> str:
    return str(x)


# -- commands ----------------------------------------------------------------


def cmd_run(cfg: ScenarioConfig, out: Path, seed: int, **_) -> int:
    exp = cfg.experiment
    record = run_experiment(
        cfg.mechanism,
        exp.model,
        exp.method,
        BackgroundKnowledge(exp.prior),
        derive_seed(seed, 0),
        experiment_id="xi",
        forced_values=exp.forced_values,
        theta_star=exp.theta_star,
    )
    _write(out / "record.json", serialize(record))
    r = record.result
    _write(out / "run.json", _report("run", cfg, seed, {"record_file": "record.json", "result": r.to_dict()}))
    print(
        f"estimate={_fmt(r.estimate.value)} posterior_mean={_fmt(r.posterior.mean)} "
        f"verdict={r.confirmation.value if r.confirmation else 'none'} "
        f"b={record.data.structure.black_count} n={record.data.structure.sample_size}"
    )
    return EXIT_OK


def cmd_replicate(cfg: ScenarioConfig, out: Path, seed: int, **_) -> int:
    if cfg.original_record is not None:
        try:
            original = deserialize(Path(cfg.original_record).read_bytes())
        except OSError as exc:
            raise ConfigError(f"original_record: {exc}") from None
    else:
        exp = cfg.experiment
        original = run_experiment(
            cfg.mechanism,
            exp.model,
            exp.method,
            BackgroundKnowledge(exp.prior),
            derive_seed(seed, 0),
            experiment_id="xi",
            forced_values=exp.forced_values,
            theta_star=exp.theta_star,
        )
        _write(out / "original.json", serialize(original))
    rep = replicate(
        original,
        cfg.replication,
        cfg.mechanism,
        derive_seed(seed, 1),
        experiment_id="xi-prime",
        forced_values=cfg.replication_forced_values,
    )
    _write(out / "replication.json", serialize(rep))
    try:
        verdict = is_reproduced(original.result, rep.result, cfg.criterion, rep.knowledge)
        status = "reproduced" if verdict else "not-reproduced"
    except EpistemicUnavailabilityError as exc:
        verdict, status = None, f"unavailable: {exc}"
    body = {
        "original_estimate": _fmt(original.result.estimate.value),
        "replication_estimate": _fmt(rep.result.estimate.value),
        "criterion": cfg.criterion.to_dict(),
        "reproduced": verdict,
        "status": status,
    }
    _write(out / "replicate.json", _report("replicate", cfg, seed, body))
    print(
        f"original={body['original_estimate']} replication={body['replication_estimate']} {status}"
    )
    return EXIT_OK


def cmd_repro_rate(cfg: ScenarioConfig, out: Path, seed: int, threads: int = 1, log_pairs: bool = False, **_) -> int:
    exp = cfg.experiment
    scenario = Scenario(
        cfg.mechanism,
        exp.model,
        exp.method,
        cfg.replication,
        cfg.criterion,
        exp.prior,
        exp.theta_star,
    )
    report = reproducibility_rate(scenario, cfg.pairs, seed, workers=threads, log_pairs=log_pairs)
    _write(out / "report.json", _report("repro-rate", cfg, seed, report.to_dict()))
    if log_pairs:
        _write(out / "pairs.csv", report.pair_table().encode("utf-8"))
    print(
        f"rate={report.rate:.6f} se={report.mc_std_error:.6f} "
        f"reproduced={report.reproduced}/{report.pairs_run}"
    )
    return EXIT_OK


def cmd_collaboratorium(cfg: ScenarioConfig, out: Path, seed: int, **_) -> int:
    c = cfg.collaboratorium
    forced = (c.lab1.forced_values, c.lab2_forced_values)
    if c.mode == "closed":
        report = run_closed(
            cfg.mechanism,
            c.space,
            c.lab1.lab_config(),
            seed,
            forced_values=forced,
            criterion=cfg.criterion,
            observer_prior=c.observer_prior,
            theta_star=c.lab1.theta_star,
            mc_draws=c.mc_draws,
        )
    else:
        report = run_open(
            cfg.mechanism,
            c.lab1.lab_config(),
            c.transmitted,
            seed,
            forced_values=forced,
            criterion=cfg.criterion,
            theta_star=c.lab1.theta_star,
        )
    body = report.to_dict()
    _write(out / "report.json", _report("collaboratorium", cfg, seed, body))
    line = (
        f"mode={c.mode} means={' -> '.join(body['posterior_means'])} "
        f"chained={body['chained_posterior_mean']} epistemic={body['epistemic_reproduction']}"
    )
    if report.observer is not None:
        line += f" observer_connected={report.observer.connected_verdict}"
    print(line)
    return EXIT_OK


def cmd_audit(path: str) -> int:
    try:
        record = deserialize(Path(path).read_bytes())
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecordFormatError as exc:
        print(f"unreadable record {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rep = audit(record)
    if rep.matches is None:
        print(f"audit {record.id}: INDETERMINATE (missing {', '.join(rep.missing_components)})")
        return EXIT_INDETERMINATE
    if not rep.matches:
        print(f"audit {record.id}: MISMATCH")
        for m in rep.mismatches:
            print(f"  {m}")
        return EXIT_MISMATCH
    for r in rep.recomputed:
        print(f"audit {record.id}: OK {r.result_id} estimate={_fmt(r.estimate.value)}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "replicate": cmd_replicate,
    "repro-rate": cmd_repro_rate,
    "collaboratorium": cmd_collaboratorium,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reprosim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("-c", "--config", help="scenario YAML file")
        src.add_argument("--scenario", help=f"shipped scenario: {', '.join(shipped_scenarios())}")
        p.add_argument("-o", "--out", help="output directory (default: config output_dir or .)")
        p.add_argument("--seed", type=int, help="override master_seed")
        if name == "repro-rate":
            p.add_argument("--log-pairs", action="store_true", help="write pairs.csv")
            p.add_argument("--threads", "--workers", type=int, default=1, dest="threads")
    p = sub.add_parser("audit")
    p.add_argument("path", help="experiment record file")
    sub.add_parser("list-scenarios")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "audit":
        return cmd_audit(args.path)
    if args.command == "list-scenarios":
        print("\n".join(shipped_scenarios()))
        return EXIT_OK

    try:
        path = args.config or shipped_scenario_path(args.scenario)
        cfg = load_scenario(path)
        if cfg.kind != args.command:
            raise ConfigError(f"scenario kind is {cfg.kind!r}, not {args.command!r}")
        seed = cfg.master_seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ConfigError("master seed must lie in [0, 2**64)")
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out or cfg.output_dir or ".")
        return COMMANDS[args.command](
            cfg,
            out,
            seed,
            threads=getattr(args, "threads", 1),
            log_pairs=getattr(args, "log_pairs", False),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
