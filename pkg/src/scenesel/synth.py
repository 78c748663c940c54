"""Deterministic synthetic scene pools and a noisy predictor stand-in.

Everything is reproducible from (spec, seed). Per-scene randomness derives
from independent seed streams keyed by scene index or id, so determinism
survives parallel or out-of-order evaluation.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AnchorTable,
    Box3D,
    ClassCatalog,
    DEFAULT_ANCHORS,
    MixtureParams,
    RESIDUAL_DIMS,
    Scene,
    ScoredDetection,
)

MIX_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PoolSpec:
    n_scenes: int
    class_mix: tuple[float, ...]
    objects_min: int = 2
    objects_max: int = 6
    spatial_extent: float = 60.0
    redundancy_groups: int | None = None  # None: every scene is its own group
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ValueError("n_scenes must be >= 1")
        if abs(sum(self.class_mix) - 1.0) > MIX_SUM_TOL:
            raise ValueError(f"class_mix must sum to 1, got {sum(self.class_mix)}")
        if any(p < 0 for p in self.class_mix):
            raise ValueError("class_mix entries must be non-negative")
        if not (1 <= self.objects_min <= self.objects_max):
            raise ValueError("need 1 <= objects_min <= objects_max")
        if self.spatial_extent <= 0:
            raise ValueError("spatial_extent must be positive")
        g = self.redundancy_groups
        if g is not None and not (1 <= g <= self.n_scenes):
            raise ValueError("redundancy_groups must be in [1, n_scenes]")

    @property
    def groups(self) -> int:
        return self.redundancy_groups if self.redundancy_groups is not None else self.n_scenes


@dataclass(frozen=True)
class NoiseModel:
    confidence_noise: float = 0.0  # std of the confidence logit jitter
    position_noise_per_meter: float = 0.0  # residual std growth per meter of range
    false_positive_rate: float = 0.0  # per-scene Poisson mean
    misclass_rate: float = 0.0
    mixture_components: int = 1
    mean_spread: float = 0.0  # scale of component-mean disagreement (drives EU)

    def __post_init__(self):
        for name in ("confidence_noise", "position_noise_per_meter", "false_positive_rate", "mean_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 <= self.misclass_rate <= 1.0):
            raise ValueError("misclass_rate must be in [0, 1]")
        if self.mixture_components < 1:
            raise ValueError("mixture_components must be >= 1")


def _scene_id(index: int) -> str:
    return f"scene_{index:06d}"


def _template(rng, spec: PoolSpec, catalog: ClassCatalog, anchors: AnchorTable):
    n_obj = int(rng.integers(spec.objects_min, spec.objects_max + 1))
    objs = []
    for _ in range(n_obj):
        cls = catalog.classes[int(rng.choice(len(catalog.classes), p=spec.class_mix))]
        a = anchors.for_class(cls)
        ext = spec.spatial_extent
        objs.append(
            {
                "class": cls,
                "x": float(rng.uniform(-ext, ext)),
                "y": float(rng.uniform(-ext, ext)),
                "z": float(rng.uniform(-0.5, 0.5)),
                "l": a.length * float(np.exp(rng.normal(0.0, 0.08))),
                "w": a.width * float(np.exp(rng.normal(0.0, 0.08))),
                "h": a.height * float(np.exp(rng.normal(0.0, 0.08))),
                "theta": float(rng.uniform(-math.pi, math.pi)),
            }
        )
    return objs


def generate_pool(
    spec: PoolSpec,
    catalog: ClassCatalog,
    anchors: AnchorTable = DEFAULT_ANCHORS,
) -> dict[str, Scene]:
    """Ground-truth pool keyed by scene id (confidence 1.0, no mixtures).

    Scenes are grouped into ``groups`` near-duplicate clusters: members of a
    cluster share the cluster's object layout up to small jitter.
    """
    if len(spec.class_mix) != catalog.num_classes:
        raise ValueError("class_mix length must match the catalog")
    anchors.check_covers(catalog)
    g = spec.groups
    templates = [
        _template(
            np.random.default_rng(np.random.SeedSequence([spec.rng_seed, 1, t])),
            spec,
            catalog,
            anchors,
        )
        for t in range(g)
    ]
    pool: dict[str, Scene] = {}
    for i in range(spec.n_scenes):
        rng = np.random.default_rng(np.random.SeedSequence([spec.rng_seed, 2, i]))
        dets = []
        for obj in templates[i % g]:
            dets.append(
                ScoredDetection(
                    class_label=obj["class"],
                    confidence=1.0,
                    box=Box3D(
                        x=obj["x"] + float(rng.normal(0.0, 0.05)),
                        y=obj["y"] + float(rng.normal(0.0, 0.05)),
                        z=obj["z"] + float(rng.normal(0.0, 0.02)),
                        w=obj["w"] * float(np.exp(rng.normal(0.0, 0.01))),
                        l=obj["l"] * float(np.exp(rng.normal(0.0, 0.01))),
                        h=obj["h"] * float(np.exp(rng.normal(0.0, 0.01))),
                        theta=obj["theta"] + float(rng.normal(0.0, 0.01)),
                    ),
                )
            )
        sid = _scene_id(i)
        pool[sid] = Scene(id=sid, detections=tuple(dets))
    return pool


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def _residual_mixture(
    noise: NoiseModel,
    rng,
    nominal: dict[str, float],
    rng_range: float,
    var_scale: float = 1.0,
) -> MixtureParams:
    k = noise.mixture_components
    var = (noise.position_noise_per_meter * max(rng_range, 1.0)) ** 2 * var_scale
    spread = noise.mean_spread * (rng_range / 60.0)
    weights, means, variances = [], [], []
    for dim in RESIDUAL_DIMS:
        mu = nominal[dim]
        if spread > 0:
            row_means = [mu + spread * float(rng.normal()) for _ in range(k)]
        else:
            row_means = [mu] * k
        weights.append(tuple([1.0 / k] * k))
        means.append(tuple(row_means))
        variances.append(tuple([var] * k))
    return MixtureParams(weights=tuple(weights), means=tuple(means), variances=tuple(variances))


def simulate_predictions(
    gt_scene: Scene,
    noise: NoiseModel,
    anchors: AnchorTable,
    catalog: ClassCatalog,
    rng: np.random.Generator,
) -> Scene:
    """Noisy predictions with mixture parameters for one ground-truth scene.

    Residual variance grows with range; component-mean disagreement (and so
    the epistemic term) scales with ``mean_spread``. False positives are
    appended per a Poisson draw. A zero noise model reproduces the ground
    truth exactly with confidence 1.0 and all component means equal.
    """
    preds = []
    for det in gt_scene.detections:
        rng_range = det.box.range_to_origin()
        pos_std = noise.position_noise_per_meter * rng_range
        box = Box3D(
            x=det.box.x + float(rng.normal(0.0, pos_std)) if pos_std else det.box.x,
            y=det.box.y + float(rng.normal(0.0, pos_std)) if pos_std else det.box.y,
            z=det.box.z + float(rng.normal(0.0, pos_std)) if pos_std else det.box.z,
            w=det.box.w * float(np.exp(rng.normal(0.0, noise.position_noise_per_meter))),
            l=det.box.l * float(np.exp(rng.normal(0.0, noise.position_noise_per_meter))),
            h=det.box.h * float(np.exp(rng.normal(0.0, noise.position_noise_per_meter))),
            theta=det.box.theta + float(rng.normal(0.0, noise.position_noise_per_meter)),
        )
        label = det.class_label
        if noise.misclass_rate > 0 and rng.random() < noise.misclass_rate:
            others = [c for c in catalog.classes if c != label]
            if others:
                label = others[int(rng.integers(len(others)))]
        if noise.confidence_noise > 0:
            conf = _sigmoid(2.5 - rng_range / 60.0 + float(rng.normal(0.0, noise.confidence_noise)))
        else:
            conf = 1.0
        anchor = anchors.for_class(label)
        nominal = {
            "x": (box.x - det.box.x) / anchor.diagonal,
            "y": (box.y - det.box.y) / anchor.diagonal,
            "z": (box.z - det.box.z) / anchor.height,
            "w": math.log(box.w / anchor.width),
            "h": math.log(box.h / anchor.height),
            "l": math.log(box.l / anchor.length),
            "theta": box.theta - det.box.theta,
        }
        mixture = _residual_mixture(noise, rng, nominal, rng_range)
        preds.append(ScoredDetection(label, conf, box, mixture))

    if noise.false_positive_rate > 0:
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            cls = catalog.classes[int(rng.integers(catalog.num_classes))]
            a = anchors.for_class(cls)
            box = Box3D(
                x=float(rng.uniform(-60.0, 60.0)),
                y=float(rng.uniform(-60.0, 60.0)),
                z=float(rng.uniform(-0.5, 0.5)),
                w=a.width * float(np.exp(rng.normal(0.0, 0.1))),
                l=a.length * float(np.exp(rng.normal(0.0, 0.1))),
                h=a.height * float(np.exp(rng.normal(0.0, 0.1))),
                theta=float(rng.uniform(-math.pi, math.pi)),
            )
            nominal = {
                "x": 0.0,
                "y": 0.0,
                "z": 0.0,
                "w": math.log(box.w / a.width),
                "h": math.log(box.h / a.height),
                "l": math.log(box.l / a.length),
                "theta": 0.0,
            }
            mixture = _residual_mixture(noise, rng, nominal, box.range_to_origin(), var_scale=4.0)
            preds.append(
                ScoredDetection(cls, float(rng.uniform(0.05, 0.95)), box, mixture)
            )
    return Scene(id=gt_scene.id, detections=tuple(preds))


def _stable_id_seed(scene_id: str) -> int:
    return int.from_bytes(hashlib.sha256(scene_id.encode()).digest()[:8], "big")


def make_predictor(
    noise: NoiseModel,
    anchors: AnchorTable,
    catalog: ClassCatalog,
    seed: int,
):
    """Deterministic scene -> predictions callable.

    Each scene gets its own seed stream derived from (seed, scene id), so the
    output does not depend on invocation order.
    """

    def predictor(scene: Scene) -> Scene:
        rng = np.random.default_rng(np.random.SeedSequence([seed, _stable_id_seed(scene.id)]))
        return simulate_predictions(scene, noise, anchors, catalog, rng)

    return predictor
