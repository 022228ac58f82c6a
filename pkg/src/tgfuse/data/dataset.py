import csv
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from ..config import DataConfig
from ..exceptions import PathError, ValidationError
from ..models import Description, DescriptionLevel, Sample
from ..model.vocab import Vocabulary
from ..utils.model_utils import create_sample, format_bbox
from ..utils.worker_pool import WorkerPool
from .describe import describe
from .pgm import write_pgm
from .scenes import generate_scene, render

logger = logging.getLogger(__name__)

SPLIT_OFFSETS: Dict[str, int] = {"train": 0, "val": 1_000_000, "test": 2_000_000}
MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["sample_id", "image_path", "mask_path", "bbox", "description", "token_ids",
                    "target_kind", "ambiguous"]


def sample_seed(seed: int, split: str, index: int) -> int:
    if split not in SPLIT_OFFSETS:
        raise ValidationError(f"unknown split {split!r}; expected one of {sorted(SPLIT_OFFSETS)}")
    return seed + SPLIT_OFFSETS[split] + index


def make_sample(seed: int, split: str, index: int, level: DescriptionLevel, config: DataConfig,
                vocab: Vocabulary) -> Tuple[Sample, Description]:
    spec = generate_scene(sample_seed(seed, split, index), config)
    image, mask, bbox = render(spec)
    description = describe(spec, level, vocab)
    sample = Sample(sample_id=f"{split}-{index:05d}", image=image[..., None], token_ids=description.token_ids,
                    gt_mask=mask, gt_bbox=bbox, target_kind=spec.target.kind, scene=spec)
    return sample, description


def build_dataset(out_dir: Union[str, Path], seed: int, n: int, split: str, level: DescriptionLevel,
                  config: DataConfig, vocab: Optional[Vocabulary] = None,
                  pool: Optional[WorkerPool] = None) -> Path:
    """
    Write `n` samples of one split under `out_dir/split/` and return the manifest path.

    Samples are independent (seed = base seed + split offset + index), so they
    are generated on the worker pool and written in index order.
    """
    if n < 1:
        raise ValidationError(f"dataset size must be >= 1, got {n}")
    if n > SPLIT_OFFSETS["val"]:
        raise ValidationError(f"dataset size {n} would overlap the seeds of another split")
    vocab = vocab or Vocabulary.from_file()
    level = DescriptionLevel(level)
    root = Path(out_dir) / split
    pool = pool or WorkerPool()

    def _write(index: int) -> List[str]:
        sample, description = make_sample(seed, split, index, level, config, vocab)
        image_rel = f"images/{sample.sample_id}.pgm"
        mask_rel = f"masks/{sample.sample_id}.pgm"
        write_pgm(sample.image, root / image_rel)
        write_pgm(sample.gt_mask, root / mask_rel, is_mask=True)
        return [
            sample.sample_id, image_rel, mask_rel, format_bbox(sample.gt_bbox),
            description.text,
            " ".join(str(t) for t in sample.token_ids),
            sample.target_kind.value if sample.target_kind else "",
            "true" if description.ambiguous else "false",
        ]

    try:
        rows = pool.map(_write, range(n))
        manifest = root / MANIFEST_NAME
        with manifest.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            writer.writerows(rows)
    except OSError as exc:
        raise PathError(f"cannot write dataset under {root}: {exc}") from exc
    logger.info("dataset split=%s n=%d level=%s path=%s", split, n, level.value, manifest)
    return manifest


def read_manifest(path: Union[str, Path]) -> List[Dict[str, str]]:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.is_file():
        raise PathError(f"manifest not found: {p}")
    with p.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in MANIFEST_COLUMNS[:6] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{p}: manifest is missing columns {missing}")
        return list(reader)


def load_samples(path: Union[str, Path]) -> List[Sample]:
    """Read a manifest and every image/mask it references."""
    p = Path(path)
    manifest = p / MANIFEST_NAME if p.is_dir() else p
    return [create_sample(row, manifest.parent) for row in read_manifest(manifest)]


def flip_horizontal(sample: Sample) -> Sample:
    """Mirror image and mask left-right; the bbox x-range is mirrored with them."""
    x1, y1, x2, y2 = sample.gt_bbox
    return replace(sample, image=sample.image[:, ::-1].copy(), gt_mask=sample.gt_mask[:, ::-1].copy(),
                   gt_bbox=(1.0 - x2, y1, 1.0 - x1, y2), scene=None)
