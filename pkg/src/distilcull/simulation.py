"""Seeded synthetic fixed-camera domains with detector and training models.

The generator mimics a stationary surveillance view: a fixed population of
backdrop objects appears in every frame, stochastic foreground objects come
and go, and a configurable fraction of frames is drawn from a hard regime
that adds small, high-difficulty objects. Detectors are parametric error
models over that ground truth; training moves a detector profile toward
its ceiling as a saturating function of how much difficult content the
training set covers.

Determinism rules, relied on throughout:

* every operation takes an explicit seed; per-frame random streams derive
  from (seed, purpose, frame_index), so a sliced domain simulates exactly
  like the same frames inside the full domain, independent of order;
* detector draws are shared across profiles (common random numbers): for
  a fixed seed, raising a recall only turns misses into detections,
  lowering the false-positive rate only removes existing spurious boxes,
  and shrinking localization noise scales the same jitter vectors toward
  zero. Comparisons across training budgets therefore reflect the budgets,
  not resampling noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError, ValidationError
from .types import BoundingBox, CuratedDataset, Detection, DetectionStream, FrameDetections

SIM_SCHEMA_VERSION = "distilcull-sim/1"

# difficulty at or above this marks an object as hard
HARD_DIFFICULTY_CUTOFF = 0.5

# rng purpose tags; distinct streams so e.g. false-positive sampling can
# never perturb scene generation
_PURPOSE_BACKDROP = 11
_PURPOSE_SCENE = 12
_PURPOSE_DETECT = 13

_CLASS_NAMES = ("car", "person", "bus", "truck", "bicycle", "motorbike", "van", "dog")


def class_names(count: int) -> tuple[str, ...]:
    """Deterministic class table for a synthetic domain of `count` classes."""
    names = list(_CLASS_NAMES[:count])
    names += [f"class_{i}" for i in range(len(names), count)]
    return tuple(names)


@dataclass(frozen=True, slots=True)
class SceneObject:
    """One ground-truth object with its intrinsic detection difficulty."""

    box: BoundingBox
    class_id: int
    difficulty: float


@dataclass(frozen=True, slots=True)
class SceneFrame:
    frame_index: int
    image_ref: str
    objects: tuple[SceneObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True, slots=True)
class DomainParams:
    """Knobs of the scene generator; defaults give a plausible street view."""

    num_frames: int = 7200
    class_count: int = 4
    hard_frame_fraction: float = 0.25
    width: float = 960.0
    height: float = 540.0
    backdrop_objects: int = 3
    foreground_rate: float = 4.0   # mean easy foreground objects per frame
    hard_object_rate: float = 3.0  # mean extra hard objects in a hard frame

    def __post_init__(self):
        if not isinstance(self.num_frames, int) or self.num_frames < 1:
            raise UsageError(f"num_frames must be an integer >= 1, got {self.num_frames!r}")
        if not isinstance(self.class_count, int) or self.class_count < 1:
            raise UsageError(f"class_count must be an integer >= 1, got {self.class_count!r}")
        if not 0.0 <= self.hard_frame_fraction <= 1.0:
            raise UsageError(
                f"hard_frame_fraction must be in [0, 1], got {self.hard_frame_fraction!r}"
            )
        if self.width < 64 or self.height < 64:
            raise UsageError("scene must be at least 64x64 pixels")
        if self.backdrop_objects < 0 or self.foreground_rate < 0 or self.hard_object_rate < 0:
            raise UsageError("object counts and rates must be non-negative")


@dataclass(frozen=True, slots=True)
class SyntheticDomain:
    """A generated scene sequence; bit-reproducible from (seed, params)."""

    seed: int
    params: DomainParams
    frames: tuple[SceneFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def class_count(self) -> int:
        return self.params.class_count

    @property
    def class_table(self) -> tuple[str, ...]:
        return class_names(self.params.class_count)

    def subset(self, start: int, stop: int | None = None) -> "SyntheticDomain":
        """The same domain restricted to frames[start:stop]; simulating the
        subset reproduces the corresponding frames of the full domain."""
        return replace(self, frames=self.frames[start:stop])


@dataclass(frozen=True, slots=True)
class ScoreModel:
    """Uniform confidence ranges keyed on whether a detection is real."""

    true_low: float = 0.55
    true_high: float = 0.95
    false_low: float = 0.15
    false_high: float = 0.65

    def __post_init__(self):
        for name in ("true_low", "true_high", "false_low", "false_high"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"score_model.{name} must be in [0, 1], got {value!r}")
        if self.true_low > self.true_high or self.false_low > self.false_high:
            raise UsageError("score_model ranges must satisfy low <= high")


@dataclass(frozen=True, slots=True)
class DetectorProfile:
    """Parametric error behavior of a synthetic detector."""

    recall_easy: float
    recall_hard: float
    fp_rate: float
    localization_noise: float
    score_model: ScoreModel = ScoreModel()

    def __post_init__(self):
        for name in ("recall_easy", "recall_hard"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"{name} must be in [0, 1], got {value!r}")
        if self.fp_rate < 0 or self.localization_noise < 0:
            raise UsageError("fp_rate and localization_noise must be >= 0")


@dataclass(frozen=True, slots=True)
class TrainingParams:
    """Where training can take a profile, and how fast gains saturate."""

    recall_easy_ceiling: float = 0.98
    recall_hard_ceiling: float = 0.9
    fp_rate_floor: float = 0.1
    noise_floor: float = 0.8
    curvature: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.recall_easy_ceiling <= 1.0 or not 0.0 <= self.recall_hard_ceiling <= 1.0:
            raise UsageError("recall ceilings must be in [0, 1]")
        if self.fp_rate_floor < 0 or self.noise_floor < 0:
            raise UsageError("floors must be >= 0")
        if not self.curvature > 0:
            raise UsageError(f"curvature must be > 0, got {self.curvature!r}")


def teacher_profile() -> DetectorProfile:
    """Reference high-accuracy profile used as the labelling teacher."""
    return DetectorProfile(
        recall_easy=0.99,
        recall_hard=0.95,
        fp_rate=0.1,
        localization_noise=1.0,
        score_model=ScoreModel(true_low=0.75, true_high=0.99, false_low=0.3, false_high=0.6),
    )


def pretrained_student_profile() -> DetectorProfile:
    """Reference compact-model profile before any domain training.

    Solid on easy foreground (general pretraining transfers), poor on the
    small occluded objects this camera happens to produce.
    """
    return DetectorProfile(
        recall_easy=0.93,
        recall_hard=0.15,
        fp_rate=0.6,
        localization_noise=3.0,
        score_model=ScoreModel(true_low=0.55, true_high=0.95, false_low=0.15, false_high=0.65),
    )


def _check_seed(seed: int) -> int:
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise UsageError(f"seed must be an integer >= 0, got {seed!r}")
    return seed


class _FrameRng:
    """Per-frame random streams from one keyed counter-based generator.

    Frame i's stream is Philox keyed on (seed, purpose) at counter block i:
    fully determined by those three values, so frames can be generated in
    any order, in parallel, or as a slice of a larger domain without
    changing a single draw.
    """

    def __init__(self, seed: int, purpose: int):
        key = np.array([seed & 0xFFFFFFFFFFFFFFFF, purpose], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)
        self._template = self._bits.state
        self._counter = self._template["state"]["counter"]
        self.generator = np.random.Generator(self._bits)

    def frame(self, frame_index: int) -> np.random.Generator:
        self._counter[3] = frame_index
        self._template["buffer_pos"] = 4
        self._template["has_uint32"] = 0
        self._bits.state = self._template
        return self.generator


def _poisson_count(u: float, rate: float, cap: int = 1000) -> int:
    """Poisson inverse CDF on one uniform draw.

    Monotone in `rate` for a fixed u, which is what keeps false-positive
    sets nested when training lowers the rate.
    """
    if rate <= 0.0:
        return 0
    pmf = math.exp(-rate)
    cdf = pmf
    k = 0
    while u >= cdf and k < cap:
        k += 1
        pmf *= rate / k
        cdf += pmf
    return k


def _draw_object(rng: np.random.Generator, params: DomainParams, difficulty: float) -> SceneObject:
    # harder objects are smaller, mimicking distant or occluded targets
    base = 45.0 + 75.0 * rng.random()
    scale = 1.0 - 0.62 * difficulty
    w = max(8.0, base * scale)
    h = max(8.0, w * (0.6 + 0.8 * rng.random()))
    x = (params.width - w) * rng.random()
    y = (params.height - h) * rng.random()
    class_id = min(int(rng.random() * params.class_count), params.class_count - 1)
    return SceneObject(BoundingBox(x, y, w, h), class_id, difficulty)


def _backdrop(seed: int, params: DomainParams) -> tuple[SceneObject, ...]:
    rng = _FrameRng(seed, _PURPOSE_BACKDROP).frame(0)
    objects = []
    for _ in range(params.backdrop_objects):
        difficulty = 0.35 * rng.random()
        objects.append(_draw_object(rng, params, difficulty))
    return tuple(objects)


def generate_domain(seed: int, params: DomainParams = DomainParams()) -> SyntheticDomain:
    """Generate a scene sequence; identical for identical (seed, params).

    Backdrop objects repeat in every frame; foreground objects are drawn
    per frame, with hard frames receiving extra small high-difficulty
    objects on top of the easy population.
    """
    _check_seed(seed)
    backdrop = _backdrop(seed, params)
    streams = _FrameRng(seed, _PURPOSE_SCENE)
    frames = []
    for frame_index in range(params.num_frames):
        rng = streams.frame(frame_index)
        hard_frame = rng.random() < params.hard_frame_fraction
        objects = list(backdrop)
        n_easy = _poisson_count(rng.random(), params.foreground_rate)
        for _ in range(n_easy):
            difficulty = HARD_DIFFICULTY_CUTOFF * rng.random()
            objects.append(_draw_object(rng, params, difficulty))
        if hard_frame:
            # at least one hard object, so every hard frame has signal to find
            n_hard = 1 + _poisson_count(rng.random(), max(params.hard_object_rate - 1.0, 0.0))
            for _ in range(n_hard):
                difficulty = HARD_DIFFICULTY_CUTOFF + (1.0 - HARD_DIFFICULTY_CUTOFF) * rng.random()
                objects.append(_draw_object(rng, params, difficulty))
        frames.append(
            SceneFrame(frame_index, f"sim://{seed}/{frame_index:06d}", tuple(objects))
        )
    return SyntheticDomain(seed, params, tuple(frames))


def simulate_detector(
    domain: SyntheticDomain,
    profile: DetectorProfile,
    seed: int,
    source_id: str = "sim",
) -> DetectionStream:
    """Run a parametric detector over the domain's ground truth.

    Per object: detected with probability recall_easy or recall_hard by
    difficulty, emitted with jittered geometry and a confidence from the
    score model. Per frame: a Poisson number of spurious boxes is added.
    Deterministic in (domain, profile, seed).
    """
    _check_seed(seed)
    params = domain.params
    table = domain.class_table
    sm = profile.score_model
    true_span = sm.true_high - sm.true_low
    false_span = sm.false_high - sm.false_low
    sigma = profile.localization_noise
    streams = _FrameRng(seed, _PURPOSE_DETECT)
    frames = []
    for scene in domain.frames:
        rng = streams.frame(scene.frame_index)
        n = len(scene.objects)
        # fixed draw layout per frame: hits, jitter, scores, fp count, fp rows
        u_hit = rng.random(n)
        jitter = rng.standard_normal((n, 4))
        u_score = rng.random(n)
        n_fp = _poisson_count(rng.random(), profile.fp_rate)
        fp_rows = rng.random((n_fp, 6))
        detections = []
        for i, obj in enumerate(scene.objects):
            recall = (
                profile.recall_hard
                if obj.difficulty >= HARD_DIFFICULTY_CUTOFF
                else profile.recall_easy
            )
            if u_hit[i] >= recall:
                continue
            box = obj.box
            jittered = BoundingBox(
                box.x + sigma * jitter[i, 0],
                box.y + sigma * jitter[i, 1],
                max(1.0, box.w + sigma * jitter[i, 2]),
                max(1.0, box.h + sigma * jitter[i, 3]),
            )
            score = sm.true_low + true_span * u_score[i]
            detections.append(Detection(jittered, obj.class_id, score))
        for j in range(n_fp):
            w = 18.0 + 72.0 * fp_rows[j, 2]
            h = 18.0 + 72.0 * fp_rows[j, 3]
            spurious = BoundingBox(
                (params.width - w) * fp_rows[j, 0],
                (params.height - h) * fp_rows[j, 1],
                w,
                h,
            )
            class_id = min(int(fp_rows[j, 4] * params.class_count), params.class_count - 1)
            score = sm.false_low + false_span * fp_rows[j, 5]
            detections.append(Detection(spurious, class_id, score))
        frames.append(FrameDetections(scene.frame_index, scene.image_ref, tuple(detections)))
    return DetectionStream(source_id, table, tuple(frames))


def _miss_mass(profile: DetectorProfile, frame: SceneFrame) -> float:
    """Difficulty-weighted mass the profile is expected to miss in a frame.

    Objects the detector already finds reliably contribute almost nothing;
    they carry no training signal.
    """
    total = 0.0
    for obj in frame.objects:
        recall = (
            profile.recall_hard
            if obj.difficulty >= HARD_DIFFICULTY_CUTOFF
            else profile.recall_easy
        )
        total += obj.difficulty * (1.0 - recall)
    return total


def simulate_training(
    profile: DetectorProfile,
    dataset: CuratedDataset,
    domain: SyntheticDomain,
    params: TrainingParams = TrainingParams(),
) -> DetectorProfile:
    """Model a training run over the curated dataset.

    Gains saturate with the covered fraction of the domain's hard-content
    mass: recalls rise toward their ceilings, false-positive rate and
    localization noise fall toward their floors. An empty dataset changes
    nothing; covering every frame reaches the ceilings exactly. Adding
    entries can only increase the result's recalls.
    """
    frame_set = {f.frame_index for f in domain.frames}
    covered = {e.frame_index for e in dataset.entries}
    unknown = sorted(covered - frame_set)
    if unknown:
        raise UsageError(f"dataset entries refer to frames outside the domain: {unknown}")
    signal = 0.0
    total = 0.0
    for frame in domain.frames:
        mass = _miss_mass(profile, frame)
        total += mass
        if frame.frame_index in covered:
            signal += mass
    if total <= 0.0:
        return profile  # nothing left to learn from this domain
    k = params.curvature
    gain = (1.0 - math.exp(-k * (signal / total))) / (1.0 - math.exp(-k))

    def _toward(value: float, target: float) -> float:
        return (1.0 - gain) * value + gain * target

    return DetectorProfile(
        recall_easy=_toward(profile.recall_easy, max(params.recall_easy_ceiling, profile.recall_easy)),
        recall_hard=_toward(profile.recall_hard, max(params.recall_hard_ceiling, profile.recall_hard)),
        fp_rate=_toward(profile.fp_rate, min(params.fp_rate_floor, profile.fp_rate)),
        localization_noise=_toward(profile.localization_noise, min(params.noise_floor, profile.localization_noise)),
        score_model=profile.score_model,
    )


# --- JSON fixtures -----------------------------------------------------------

def profile_to_dict(profile: DetectorProfile) -> dict:
    return {
        "recall_easy": profile.recall_easy,
        "recall_hard": profile.recall_hard,
        "fp_rate": profile.fp_rate,
        "localization_noise": profile.localization_noise,
        "score_model": {
            "true_low": profile.score_model.true_low,
            "true_high": profile.score_model.true_high,
            "false_low": profile.score_model.false_low,
            "false_high": profile.score_model.false_high,
        },
    }


def profile_from_dict(doc: dict) -> DetectorProfile:
    """Build a profile from plain JSON fields; bad fields are usage errors."""
    known = {"recall_easy", "recall_hard", "fp_rate", "localization_noise", "score_model"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UsageError(f"detector profile: unknown keys {unknown}")
    try:
        sm = doc.get("score_model") or {}
        if not isinstance(sm, dict):
            raise UsageError("score_model must be an object")
        return DetectorProfile(
            recall_easy=float(doc["recall_easy"]),
            recall_hard=float(doc["recall_hard"]),
            fp_rate=float(doc["fp_rate"]),
            localization_noise=float(doc["localization_noise"]),
            score_model=ScoreModel(
                true_low=float(sm.get("true_low", 0.55)),
                true_high=float(sm.get("true_high", 0.95)),
                false_low=float(sm.get("false_low", 0.15)),
                false_high=float(sm.get("false_high", 0.65)),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"detector profile malformed: {exc!r}") from exc


def write_profile(profile: DetectorProfile) -> bytes:
    doc = {"schema_version": SIM_SCHEMA_VERSION, "kind": "detector_profile"}
    doc.update(profile_to_dict(profile))
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def parse_profile(data: bytes | str) -> DetectorProfile:
    doc = _load_sim_doc(data, "detector_profile")
    body = {k: v for k, v in doc.items() if k not in ("schema_version", "kind", "name")}
    try:
        return profile_from_dict(body)
    except UsageError as exc:
        raise ValidationError(f"detector profile invalid: {exc}") from exc


def write_domain(domain: SyntheticDomain) -> bytes:
    p = domain.params
    doc = {
        "schema_version": SIM_SCHEMA_VERSION,
        "kind": "domain",
        "seed": domain.seed,
        "params": {
            "num_frames": p.num_frames,
            "class_count": p.class_count,
            "hard_frame_fraction": p.hard_frame_fraction,
            "width": p.width,
            "height": p.height,
            "backdrop_objects": p.backdrop_objects,
            "foreground_rate": p.foreground_rate,
            "hard_object_rate": p.hard_object_rate,
        },
        "frames": [
            {
                "frame_index": f.frame_index,
                "image_ref": f.image_ref,
                "objects": [
                    {
                        "bbox": [o.box.x, o.box.y, o.box.w, o.box.h],
                        "class_id": o.class_id,
                        "difficulty": o.difficulty,
                    }
                    for o in f.objects
                ],
            }
            for f in domain.frames
        ],
    }
    return (json.dumps(doc, allow_nan=False) + "\n").encode("utf-8")


def parse_domain(data: bytes | str) -> SyntheticDomain:
    doc = _load_sim_doc(data, "domain")
    try:
        params = DomainParams(**doc["params"])
        frames = tuple(
            SceneFrame(
                frame_index=int(f["frame_index"]),
                image_ref=str(f["image_ref"]),
                objects=tuple(
                    SceneObject(
                        BoundingBox(*(float(v) for v in o["bbox"])),
                        int(o["class_id"]),
                        float(o["difficulty"]),
                    )
                    for o in f["objects"]
                ),
            )
            for f in doc["frames"]
        )
        return SyntheticDomain(int(doc["seed"]), params, frames)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"domain document malformed: {exc!r}") from exc
    except UsageError as exc:
        raise ValidationError(f"domain invalid: {exc}") from exc


def _load_sim_doc(data: bytes | str, kind: str) -> dict:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc.msg} at position {exc.pos}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("simulation document must be a JSON object")
    version = doc.get("schema_version")
    if version != SIM_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported simulation schema_version {version!r}, expected {SIM_SCHEMA_VERSION!r}"
        )
    if doc.get("kind") != kind:
        raise ValidationError(f"expected document kind {kind!r}, got {doc.get('kind')!r}")
    return doc
