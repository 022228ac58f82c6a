import logging
from typing import List, Optional

from ..models import Description, DescriptionLevel, Relation, SceneSpec, Shape
from ..model.vocab import Vocabulary
from .scenes import quadrant_of

logger = logging.getLogger(__name__)


def relation_of(target: Shape, reference: Shape) -> Relation:
    """Dominant-axis relation of target to reference; image y grows downward."""
    dx = target.center[0] - reference.center[0]
    dy = target.center[1] - reference.center[1]
    if abs(dx) >= abs(dy):
        return Relation.LEFT if dx < 0 else Relation.RIGHT
    return Relation.ABOVE if dy < 0 else Relation.BELOW


def _reference_shape(spec: SceneSpec) -> Optional[Shape]:
    """Nearest shape of a different kind than the target."""
    target = spec.target
    others = [s for s in spec.shapes if s.kind is not target.kind]
    if not others:
        return None
    return min(others, key=lambda s: (s.center[0] - target.center[0]) ** 2 + (s.center[1] - target.center[1]) ** 2)


def _quadrant_unique(spec: SceneSpec) -> bool:
    target = spec.target
    quadrant = quadrant_of(target, spec.canvas)
    return sum(1 for s in spec.shapes
               if s.kind is target.kind and quadrant_of(s, spec.canvas) is quadrant) == 1


def description_words(spec: SceneSpec, level: DescriptionLevel) -> Description:
    target = spec.target
    level = DescriptionLevel(level)
    if level is DescriptionLevel.NONE:
        return Description(words=[], token_ids=[])
    if level is DescriptionLevel.SIMPLE:
        return Description(words=[target.kind.value], token_ids=[])

    quadrant = quadrant_of(target, spec.canvas)
    words = ["the", target.kind.value, "in", "the", *quadrant.words, "quadrant"]
    reference = _reference_shape(spec)
    unique = _quadrant_unique(spec)
    if not unique:
        logger.warning("description fallback seed=%s: target kind and quadrant are not unique", spec.seed)
        return Description(words=words, token_ids=[], ambiguous=True)
    if reference is not None:
        words += [relation_of(target, reference).value, "of", "the", reference.kind.value]
    return Description(words=words, token_ids=[])


def describe(spec: SceneSpec, level: DescriptionLevel, vocab: Vocabulary) -> Description:
    """
    Templated description of the target.

        none    -> [SOS, EOS]
        simple  -> [SOS, kind, EOS]
        complex -> [SOS, the, kind, in, the, <v>, <h>, quadrant, <rel>, of, the, <other kind>, EOS]

    A complex description drops the relation clause when no shape of another
    kind exists, and is flagged ambiguous when kind plus quadrant does not
    single out the target.
    """
    description = description_words(spec, level)
    description.token_ids = vocab.encode(description.words)
    return description
