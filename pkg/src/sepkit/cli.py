"""``sepkit <command> --config <path> --out <dir> [--seed N] [--quiet]``.

Exit codes: 0 success, 1 invalid input (config, manifest, checkpoint),
2 runtime failure (divergence, I/O, failed self-test).
"""

from __future__ import annotations

import os

# BLAS pools are sized at numpy import, so the thread cap must be exported first
_THREADS = os.environ.get("SEPKIT_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from dataclasses import dataclass  # noqa: E402
from pathlib import Path  # noqa: E402

from . import __version__  # noqa: E402
from .config import ConfigError, RunConfig, describe_defaults, parse_config  # noqa: E402
from .datagen import DatasetManifest, generate_dataset, load_manifest  # noqa: E402
from .metrics import EvalReport  # noqa: E402
from .models import (  # noqa: E402
    CheckpointError,
    load_separator,
    load_speaker_embedder,
    save_separator,
    save_speaker_embedder,
)
from .signals import WavError  # noqa: E402
from .tensorgrad import ShapeError  # noqa: E402
from .training import (  # noqa: E402
    RunReport,
    TrainingDiverged,
    evaluate_model,
    pretrain_speaker_embedder,
    run_ablation,
    train_basic,
    train_conditioned,
    write_table_csv,
)

COMMANDS = ("gen-data", "train", "eval", "ablate", "gradcheck")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("sepkit")


@dataclass
class RunSpec:
    command: str
    config_path: Path
    out_dir: Path
    seed: int | None = None
    quiet: bool = False


class SelfTestFailed(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# reports


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def report_write(reports: list[EvalReport], out_dir, table: str = "summary.csv", details: str | None = "details.jsonl") -> list[Path]:
    """Summary CSV (model, si_snr_db, stoi), one row per report, plus per-example JSON lines."""
    if not reports:
        raise ValueError("no reports to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / table]
    with open(out / table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "si_snr_db", "stoi"])
        for r in reports:
            agg = r.aggregates()
            w.writerow([r.model, _fmt(agg["mean_si_snr"]), _fmt(agg["mean_stoi"])])
    if details:
        with open(out / details, "w") as fh:
            for r in reports:
                for row in r.rows:
                    fh.write(json.dumps({"model": r.model, **row.to_dict()}) + "\n")
        written.append(out / details)
    return written


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_report(path: Path, report: RunReport) -> None:
    # wall time lives in run.json so metrics files are identical across reruns
    _write_json(path, report.metrics_dict())


# ----------------------------------------------------------------------------
# commands


def _manifest(cfg: RunConfig, out: Path) -> DatasetManifest:
    if cfg.data.manifest:
        return load_manifest(cfg.data.manifest)
    d = cfg.data
    log.info("generating %d-speaker corpus under %s", d.num_speakers, out / "data")
    return generate_dataset(d.num_speakers, d.utterances_per_pair, d.duration_s, d.sample_rate, out / "data", d.seed)


def cmd_gen_data(cfg: RunConfig, out: Path) -> dict:
    d = cfg.data
    manifest = generate_dataset(d.num_speakers, d.utterances_per_pair, d.duration_s, d.sample_rate, out / "data", d.seed)
    return {"entries": len(manifest), "manifest": "data/manifest.jsonl"}


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    manifest = _manifest(cfg, out)
    if cfg.pipeline.kind == "basic":
        model, report = train_basic(manifest, cfg.train, cfg.model, name="basic")
        save_separator(out / "model.ckpt", model, {"train": report.config})
        _write_report(out / "report.json", report)
        report_write([report.final], out)
        return {"wall_time": report.wall_time}

    times = {}
    if cfg.pipeline.basic_checkpoint:
        basic = load_separator(cfg.pipeline.basic_checkpoint)
        basic_eval = None
    else:
        basic, basic_report = train_basic(manifest, cfg.train, cfg.model, name="basic")
        save_separator(out / "basic.ckpt", basic)
        _write_report(out / "report_basic.json", basic_report)
        basic_eval = basic_report.final
        times["basic"] = basic_report.wall_time
    if cfg.pipeline.embedder_checkpoint:
        embedder = load_speaker_embedder(cfg.pipeline.embedder_checkpoint)
        emb_summary = None
    else:
        e = cfg.embedder
        embedder, emb_summary = pretrain_speaker_embedder(
            manifest, cfg.embedder_config(), e.epochs, e.batch_size, e.lr, cfg.train.seed, cfg.train.val_fraction
        )
        save_speaker_embedder(out / "embedder.ckpt", embedder, {"val_accuracy": emb_summary["val_accuracy"]})
    pipeline, report = train_conditioned(manifest, cfg.train, basic, embedder, oracle=cfg.pipeline.oracle)
    pipeline.save(out / "model.ckpt")
    _write_report(out / "report.json", report)
    report_write([r for r in (basic_eval, report.final) if r is not None], out)
    times["conditioned"] = report.wall_time
    return {"wall_time": times, "embedder": emb_summary}


def cmd_eval(cfg: RunConfig, out: Path) -> dict:
    if not cfg.eval.checkpoint:
        raise ConfigError("eval.checkpoint must name a checkpoint to evaluate")
    manifest = _manifest(cfg, out)
    report = evaluate_model(cfg.eval.checkpoint, manifest, cfg.eval.stoi, cfg.eval.parallel)
    report_write([report], out)
    return {"rows": len(report.rows)}


def cmd_ablate(cfg: RunConfig, out: Path) -> dict:
    manifest = _manifest(cfg, out)
    result = run_ablation(manifest, cfg.train, cfg.model)
    write_table_csv(result.table, out / "comparison.csv")
    for r in result.reports:
        _write_report(out / f"report_{r.name}.json", r)
    return {"wall_time": {r.name: r.wall_time for r in result.reports}}


def cmd_gradcheck(cfg: RunConfig, out: Path) -> dict:
    from .gradcheck import run_suite

    lines = []
    results = run_suite(seeds=20, log=lines.append)
    ok = all(r.passed for r in results)
    (out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        log.info(line)
    if not ok:
        raise SelfTestFailed("finite-difference gradient checks failed; see gradcheck.txt")
    return {"checks": len(results)}


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sepkit",
        description="Synthetic-speech separation: data generation, training, evaluation and ablation.",
        epilog="config keys and defaults (section.key = JSON value):\n" + describe_defaults()
        + "\n\nexit codes: 0 ok, 1 invalid input, 2 runtime failure. SEPKIT_THREADS caps worker threads.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="plain-text config file")
    p.add_argument("--out", required=True, type=Path, help="directory receiving every artifact of the run")
    p.add_argument("--seed", type=int, default=None, help="override train.seed and data.seed")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def dispatch(spec: RunSpec) -> int:
    logging.basicConfig(
        level=logging.WARNING if spec.quiet else logging.INFO, format="%(levelname)s %(message)s", force=True
    )
    try:
        cfg = parse_config(spec.config_path)
    except (ConfigError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    if spec.seed is not None:
        cfg.with_seed(spec.seed)
    out = spec.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_RUNTIME
    t0 = time.perf_counter()
    try:
        extra = HANDLERS[spec.command](cfg, out)
    except (ConfigError, CheckpointError, ShapeError, WavError, FileNotFoundError, ValueError) as exc:
        log.error("%s: %s", spec.command, exc)
        return EXIT_INVALID
    except (TrainingDiverged, SelfTestFailed, OSError, RuntimeError, FloatingPointError) as exc:
        log.error("%s failed: %s", spec.command, exc)
        return EXIT_RUNTIME
    _write_json(
        out / "run.json",
        {
            "command": spec.command,
            "config_hash": cfg.digest(),
            "config": cfg.to_dict(),
            "config_text": cfg.text,
            "seed": cfg.train.seed,
            "version": __version__,
            "threads": _THREADS,
            "elapsed_s": time.perf_counter() - t0,
            "result": extra,
        },
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(RunSpec(args.command, args.config, args.out, args.seed, args.quiet))


if __name__ == "__main__":
    sys.exit(main())
