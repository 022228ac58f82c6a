import math

import numpy as np
import pytest

from tgfuse.config import DataConfig
from tgfuse.data import (
    SPLIT_OFFSETS,
    build_dataset,
    describe,
    flip_horizontal,
    generate_scene,
    load_samples,
    make_sample,
    quadrant_of,
    rasterize,
    read_manifest,
    read_pgm,
    relation_of,
    render,
    write_pgm,
)
from tgfuse.data.dataset import sample_seed
from tgfuse.data.pgm import decode_pgm, encode_pgm
from tgfuse.data.scenes import tight_bbox
from tgfuse.exceptions import ConfigurationError, GenerationError, PathError, PgmParseError, ValidationError
from tgfuse.model.vocab import Vocabulary
from tgfuse.models import DescriptionLevel, Quadrant, Relation, SceneSpec, Shape, ShapeKind


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.from_file()


def _scene(*shapes, target=0, canvas=64):
    return SceneSpec(canvas=canvas, shapes=tuple(shapes), target_index=target)


def test_scene_generation_is_deterministic():
    config = DataConfig()
    for seed in (0, 1, 99, 123456):
        assert generate_scene(seed, config) == generate_scene(seed, config)
    assert generate_scene(0, config) != generate_scene(1, config)


def test_scenes_have_disjoint_shapes_and_unique_targets():
    config = DataConfig()
    for seed in range(1000):
        spec = generate_scene(seed, config)
        assert 2 <= len(spec.shapes) <= 4
        coverage = np.zeros((config.canvas, config.canvas), dtype=np.int64)
        for shape in spec.shapes:
            coverage += rasterize(shape, config.canvas)
        assert coverage.max() == 1, f"seed {seed} has overlapping shapes"
        target = spec.target
        same_quadrant = [s for s in spec.shapes
                         if s.kind is target.kind and quadrant_of(s, config.canvas) is quadrant_of(target, config.canvas)]
        assert len(same_quadrant) == 1


def test_ambiguous_scenes_carry_same_kind_distractor():
    config = DataConfig(ambiguous=True)
    for seed in range(200):
        spec = generate_scene(seed, config)
        assert spec.ambiguous
        assert sum(1 for s in spec.shapes if s.kind is spec.target.kind) >= 2


def test_generation_errors():
    test_cases = [
        {"config": DataConfig(canvas=16), "error": ConfigurationError},
        {"config": DataConfig(min_shapes=1), "error": ConfigurationError},
        {"config": DataConfig(max_size=20), "error": ConfigurationError},
        {"config": DataConfig(min_shapes=4, max_shapes=4, min_size=7, max_size=7, max_attempts=3),
         "error": GenerationError},
    ]
    for case in test_cases:
        with pytest.raises(case["error"]):
            generate_scene(5, case["config"])


def test_rasterized_disk_area():
    for r in range(2, 12):
        pixels = int(rasterize(Shape(ShapeKind.DISK, (32, 32), r, 1.0), 64).sum())
        assert abs(pixels - math.pi * r * r) <= 4 * r


def test_render_mask_and_bbox():
    square = Shape(ShapeKind.SQUARE, (20, 30), 5, 0.6)
    disk = Shape(ShapeKind.DISK, (45, 45), 6, 1.0)
    image, mask, bbox = render(_scene(square, disk))

    assert mask.dtype == np.uint8
    assert int(mask.sum()) == 11 * 11
    assert bbox == (15 / 64, 25 / 64, 26 / 64, 36 / 64)
    assert image.max() == 1.0
    assert image[30, 20] == 0.6
    assert image[0, 0] == 0.0
    assert tight_bbox(np.zeros((4, 4))) == (0.0, 0.0, 0.0, 0.0)


def test_triangle_points_up():
    footprint = rasterize(Shape(ShapeKind.TRIANGLE, (10, 10), 4, 1.0), 32)
    rows = footprint.sum(axis=1)
    assert rows[6] == 1
    assert rows[14] == 9
    assert rows[5] == 0 and rows[15] == 0


def test_quadrants_and_relations():
    test_cases = [
        {"center": (10, 10), "quadrant": Quadrant.UPPER_LEFT},
        {"center": (40, 10), "quadrant": Quadrant.UPPER_RIGHT},
        {"center": (10, 40), "quadrant": Quadrant.LOWER_LEFT},
        {"center": (32, 32), "quadrant": Quadrant.LOWER_RIGHT},
    ]
    for case in test_cases:
        assert quadrant_of(Shape(ShapeKind.DISK, case["center"], 3, 1.0), 64) is case["quadrant"]

    origin = Shape(ShapeKind.DISK, (30, 30), 3, 1.0)
    assert relation_of(origin, Shape(ShapeKind.SQUARE, (50, 32), 3, 1.0)) is Relation.LEFT
    assert relation_of(origin, Shape(ShapeKind.SQUARE, (10, 35), 3, 1.0)) is Relation.RIGHT
    assert relation_of(origin, Shape(ShapeKind.SQUARE, (28, 50), 3, 1.0)) is Relation.ABOVE
    assert relation_of(origin, Shape(ShapeKind.SQUARE, (31, 5), 3, 1.0)) is Relation.BELOW


def test_description_levels(vocab):
    spec = _scene(Shape(ShapeKind.DISK, (10, 10), 4, 0.8), Shape(ShapeKind.SQUARE, (30, 12), 4, 0.5))

    none = describe(spec, DescriptionLevel.NONE, vocab)
    simple = describe(spec, DescriptionLevel.SIMPLE, vocab)
    complex_ = describe(spec, DescriptionLevel.COMPLEX, vocab)

    assert none.token_ids == [Vocabulary.SOS, Vocabulary.EOS]
    assert simple.token_ids == [Vocabulary.SOS, vocab.id_of("disk"), Vocabulary.EOS]
    assert complex_.text == "the disk in the upper left quadrant left of the square"
    assert complex_.token_ids[0] == Vocabulary.SOS and complex_.token_ids[-1] == Vocabulary.EOS
    assert vocab.decode(complex_.token_ids) == complex_.words
    assert not complex_.ambiguous


def test_description_without_other_kind_drops_relation(vocab):
    spec = _scene(Shape(ShapeKind.DISK, (10, 10), 4, 0.8), Shape(ShapeKind.DISK, (50, 50), 4, 0.5))
    assert describe(spec, DescriptionLevel.COMPLEX, vocab).text == "the disk in the upper left quadrant"


def test_description_flags_non_unique_target(vocab):
    spec = _scene(Shape(ShapeKind.DISK, (8, 8), 3, 0.8), Shape(ShapeKind.DISK, (22, 22), 3, 0.5))
    assert describe(spec, DescriptionLevel.COMPLEX, vocab).ambiguous


def test_generated_descriptions_stay_in_vocabulary(vocab):
    config = DataConfig()
    used = set()
    for seed in range(500):
        description = describe(generate_scene(seed, config), DescriptionLevel.COMPLEX, vocab)
        assert Vocabulary.UNK not in description.token_ids
        assert len(description.token_ids) <= 16
        used.update(description.words)
    assert used == set(vocab.words)


def test_ambiguous_scenes_still_get_unique_complex_descriptions(vocab):
    config = DataConfig(ambiguous=True)
    for seed in range(300):
        description = describe(generate_scene(seed, config), DescriptionLevel.COMPLEX, vocab)
        assert not description.ambiguous, f"seed {seed}"


def test_bbox_is_tight_on_every_side():
    config = DataConfig()
    for seed in range(200):
        _, mask, (x1, y1, x2, y2) = render(generate_scene(seed, config))
        w = config.canvas
        left, top, right, bottom = round(x1 * w), round(y1 * w), round(x2 * w) - 1, round(y2 * w) - 1
        # shrinking the box by one pixel on any side would drop part of the mask
        assert mask[:, left].any() and mask[:, right].any()
        assert mask[top, :].any() and mask[bottom, :].any()
        assert int(mask[top:bottom + 1, left:right + 1].sum()) == int(mask.sum())


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(64, 64)) / 255.0
    mask = (rng.random((64, 64)) < 0.3).astype(np.uint8)

    image_path = write_pgm(image, tmp_path / "image.pgm")
    mask_path = write_pgm(mask, tmp_path / "mask.pgm", is_mask=True)

    assert image_path.stat().st_size == len(b"P5\n64 64\n255\n") + 64 * 64
    np.testing.assert_array_equal(read_pgm(image_path), image)
    np.testing.assert_array_equal(read_pgm(mask_path, as_mask=True), mask)
    assert set(np.unique(np.frombuffer(mask_path.read_bytes()[13:], dtype=np.uint8))) <= {0, 255}


def test_pgm_parse_errors_report_offset():
    valid = encode_pgm(np.zeros((2, 3)))
    mask_blob = b"P5\n2 1\n255\n" + bytes([0, 7])
    test_cases = [
        {"blob": b"P6\n3 2\n255\n" + bytes(6), "offset": 0},
        {"blob": b"P5\n64 x4\n255\n", "offset": 6},
        {"blob": b"P5\n3 2\n65535\n" + bytes(6), "offset": 12},
        {"blob": valid[:-1], "offset": len(valid) - 6},
    ]
    for case in test_cases:
        with pytest.raises(PgmParseError) as exc_info:
            decode_pgm(case["blob"])
        assert exc_info.value.offset == case["offset"]

    with pytest.raises(PgmParseError) as exc_info:
        decode_pgm(mask_blob, as_mask=True)
    assert exc_info.value.offset == len(mask_blob) - 1

    with pytest.raises(ValidationError):
        encode_pgm(np.full((2, 2), 1.5))
    with pytest.raises(PathError):
        read_pgm("does/not/exist.pgm")


def test_split_seeds_are_disjoint():
    assert SPLIT_OFFSETS == {"train": 0, "val": 1_000_000, "test": 2_000_000}
    train = {sample_seed(7, "train", i) for i in range(1000)}
    val = {sample_seed(7, "val", i) for i in range(1000)}
    test = {sample_seed(7, "test", i) for i in range(1000)}
    assert not (train & val or train & test or val & test)
    with pytest.raises(ValidationError):
        sample_seed(7, "holdout", 0)


def test_build_dataset_writes_manifest_and_files(tmp_path, vocab):
    config = DataConfig()
    manifest = build_dataset(tmp_path / "a", 7, 10, "train", DescriptionLevel.COMPLEX, config, vocab)

    rows = read_manifest(manifest)
    assert [r["sample_id"] for r in rows] == [f"train-{i:05d}" for i in range(10)]
    files = sorted(p for p in (tmp_path / "a" / "train").rglob("*.pgm"))
    assert len(files) == 20

    samples = load_samples(manifest)
    first, _ = make_sample(7, "train", 0, DescriptionLevel.COMPLEX, config, vocab)
    np.testing.assert_array_equal(samples[0].gt_mask, first.gt_mask)
    assert samples[0].token_ids == first.token_ids
    assert samples[0].gt_bbox == first.gt_bbox
    assert samples[0].image.shape == (64, 64, 1)

    build_dataset(tmp_path / "b", 7, 10, "train", DescriptionLevel.COMPLEX, config, vocab)
    for path in [manifest] + files:
        twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
        assert twin.read_bytes() == path.read_bytes()

    with pytest.raises(ValidationError):
        build_dataset(tmp_path / "c", 7, 0, "train", DescriptionLevel.COMPLEX, config, vocab)
    with pytest.raises(PathError):
        read_manifest(tmp_path / "missing")


def test_flip_horizontal_mirrors_box(vocab):
    sample, _ = make_sample(3, "train", 0, DescriptionLevel.SIMPLE, DataConfig(), vocab)
    flipped = flip_horizontal(sample)

    np.testing.assert_array_equal(flipped.gt_mask, sample.gt_mask[:, ::-1])
    x1, y1, x2, y2 = sample.gt_bbox
    assert flipped.gt_bbox == (1.0 - x2, y1, 1.0 - x1, y2)
    assert tight_bbox(flipped.gt_mask) == pytest.approx(flipped.gt_bbox, abs=1e-12)
    assert flipped.token_ids == sample.token_ids
