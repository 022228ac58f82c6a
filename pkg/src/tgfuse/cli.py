import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

from deepmerge import always_merger
from dotenv import load_dotenv

from .autodiff.tensor import set_debug
from .config import RunConfig, load_config
from .data.dataset import MANIFEST_NAME, build_dataset, load_samples
from .evaluation import evaluate_model
from .exceptions import ConfigurationError, GradcheckError, PathError, TgFuseError
from .metrics.report import (
    compare_reports,
    format_compare,
    format_summary,
    read_report_csv,
    write_compare_csv,
    write_report_csv,
)
from .model.checkpoint import load_into
from .model.segmenter import TextGuidedSegmenter
from .model.vocab import Vocabulary
from .models import DescriptionLevel, ErrorCategory, MetricsReport
from .training import BEST_CHECKPOINT, Trainer, build_model, run_gradcheck

logger = logging.getLogger("tgfuse")

DEBUG_ENV = "TGFUSE_DEBUG"
SPLITS = ("train", "val", "test")
ABLATION_COLUMNS = ["level", "dsc", "hd95", "asd", "undefined_hd95"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise ConfigurationError(f"usage: {message}")


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    overrides: Dict[str, Dict[str, Any]] = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("train", {})["seed"] = args.seed
    if getattr(args, "level", None) is not None:
        overrides.setdefault("train", {})["level"] = args.level
    if getattr(args, "freeze_encoders", False):
        overrides.setdefault("train", {})["freeze_encoders"] = True
    return overrides


def _config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _vocab(config: RunConfig) -> Vocabulary:
    return Vocabulary.from_file(config.paths.vocab or None)


def _split_manifest(data_dir: Path, split: str) -> Path:
    manifest = data_dir / split / MANIFEST_NAME
    if not manifest.is_file():
        raise PathError(f"dataset manifest missing: {manifest} (run `tgfuse gen` first)")
    return manifest


def _generate(config: RunConfig, out: Path, vocab: Vocabulary) -> None:
    sizes = {"train": config.data.n_train, "val": config.data.n_val, "test": config.data.n_test}
    for split in SPLITS:
        build_dataset(out, config.train.seed, sizes[split], split, DescriptionLevel(config.train.level),
                      config.data, vocab)


def _write_eval(report: MetricsReport, out: Path) -> str:
    write_report_csv(report, out / "report.csv")
    summary = format_summary(report)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    return summary


def cmd_gen(args: argparse.Namespace) -> int:
    config = _config(args)
    out = Path(args.out or config.paths.data_dir)
    _generate(config, out, _vocab(config))
    print(f"dataset written to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    data_dir = Path(args.data or config.paths.data_dir)
    train_samples = load_samples(_split_manifest(data_dir, "train"))
    val_path = data_dir / "val" / MANIFEST_NAME
    val_samples = load_samples(val_path) if val_path.is_file() else []
    out = Path(args.out or config.paths.out_dir)
    model = build_model(config, _vocab(config))
    log = Trainer(config, model, out).fit(train_samples, val_samples)
    print(f"best_val_dsc={log.best_val_dsc:.4f} best={log.best_checkpoint} last={log.last_checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    manifest = Path(args.manifest) if args.manifest else _split_manifest(Path(config.paths.data_dir), "test")
    samples = load_samples(manifest)
    model = TextGuidedSegmenter(config.model, len(_vocab(config)), seed=config.train.seed)
    if not args.oracle:
        checkpoint = Path(args.checkpoint or Path(config.paths.out_dir) / BEST_CHECKPOINT)
        load_into(model, checkpoint, expected=config)
    report = evaluate_model(model, samples, config, oracle=args.oracle)
    out = Path(args.out or config.paths.out_dir)
    print(_write_eval(report, out), end="")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    base = _config(args)
    if not base.data.ambiguous:
        logger.info("ablation forces data.ambiguous=true")
    out = Path(args.out or base.paths.out_dir)
    vocab = _vocab(base)
    rows: List[List[str]] = []
    for level in DescriptionLevel:
        config = load_config(args.config, always_merger.merge(
            _overrides(args), {"train": {"level": level.value}, "data": {"ambiguous": True}}))
        data_dir = out / "data" / level.value
        _generate(config, data_dir, vocab)
        run_dir = out / level.value
        model = build_model(config, vocab)
        trainer = Trainer(config, model, run_dir)
        trainer.fit(load_samples(data_dir / "train"), load_samples(data_dir / "val"))
        load_into(model, run_dir / BEST_CHECKPOINT, expected=config)
        report = evaluate_model(model, load_samples(data_dir / "test"), config)
        _write_eval(report, run_dir)
        s = report.summary
        rows.append([level.value, f"{s['dsc'].mean:.4f}±{s['dsc'].std:.4f}",
                     f"{s['hd95'].mean:.4f}±{s['hd95'].std:.4f}", f"{s['asd'].mean:.4f}±{s['asd'].std:.4f}",
                     str(report.undefined_count)])

    out.mkdir(parents=True, exist_ok=True)
    with (out / "ablation.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        writer.writerows(rows)
    widths = [max(len(r[i]) for r in [ABLATION_COLUMNS] + rows) for i in range(len(ABLATION_COLUMNS))]
    for row in [ABLATION_COLUMNS] + rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    results = compare_reports(read_report_csv(args.report_a), read_report_csv(args.report_b))
    if args.out:
        write_compare_csv(results, Path(args.out) / "compare.csv")
    print(format_compare(results), end="")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = _config(args)
    report = run_gradcheck(config, _vocab(config))
    for module, err in sorted(report.per_module().items()):
        print(f"module={module} max_rel_error={err:.3e}")
    print(f"entries={report.checked_entries} max_rel_error={report.max_rel_error:.3e} worst={report.worst_param}")
    tolerance = config.train.gradcheck_tolerance
    if not report.passed(tolerance):
        raise GradcheckError(f"max relative error {report.max_rel_error:.3e} >= {tolerance:g} "
                             f"(worst parameter {report.worst_param})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgfuse", description="Text-guided segmentation on synthetic shape scenes")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, with_level: bool = True) -> None:
        p.add_argument("--config", help="config file (INI sections, key = value)")
        p.add_argument("--seed", type=int)
        if with_level:
            p.add_argument("--level", choices=[level.value for level in DescriptionLevel])
        p.add_argument("--out", help="output directory")

    gen = sub.add_parser("gen", help="generate train/val/test datasets")
    common(gen)
    gen.set_defaults(handler=cmd_gen)

    train = sub.add_parser("train", help="train a model")
    common(train)
    train.add_argument("--freeze-encoders", action="store_true")
    train.add_argument("--data", help="dataset directory (default: paths.data_dir)")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint")
    common(evaluate, with_level=False)  # token ids come from the manifest
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--manifest")
    evaluate.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    evaluate.set_defaults(handler=cmd_eval)

    ablate = sub.add_parser("ablate", help="none/simple/complex description ablation")
    common(ablate, with_level=False)
    ablate.add_argument("--freeze-encoders", action="store_true")
    ablate.set_defaults(handler=cmd_ablate)

    compare = sub.add_parser("compare", help="Wilcoxon signed-rank test between two reports")
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    compare.add_argument("--out")
    compare.set_defaults(handler=cmd_compare)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    common(gradcheck)
    gradcheck.set_defaults(handler=cmd_gradcheck)
    return parser


def exit_code(error: TgFuseError) -> int:
    return 2 if error.error_type.category is ErrorCategory.CONFIGURATION_ERROR else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                            format="%(asctime)s %(levelname)s %(name)s %(message)s")
        if os.environ.get(DEBUG_ENV, "").strip().lower() in ("1", "true", "yes"):
            set_debug(True)
        return int(args.handler(args))
    except TgFuseError as error:
        print(error.one_line(), file=sys.stderr)
        return exit_code(error)
    except OSError as error:
        print(PathError(str(error)).one_line(), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
