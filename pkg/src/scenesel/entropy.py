"""Stage-1 metric: category entropy of confidence-filtered predicted classes."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ClassCatalog, Scene


@dataclass(frozen=True)
class EntropyConfig:
    tau: float = 0.3
    zeta: float = 1e-12

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")


def filtered_class_counts(
    scene: Scene, catalog: ClassCatalog, config: EntropyConfig
) -> dict[str, int]:
    """Count detections per class, keeping only those with confidence >= tau."""
    counts = {c: 0 for c in catalog.classes}
    for det in scene.detections:
        if det.confidence >= config.tau and det.class_label in counts:
            counts[det.class_label] += 1
    return counts


def category_entropy(scene: Scene, catalog: ClassCatalog, config: EntropyConfig) -> float:
    """Shannon entropy (natural log) of the filtered class proportions.

    A scene with no surviving detections scores 0: no class evidence means no
    balance contribution, placing it last in stage-1 ranking.
    """
    counts = filtered_class_counts(scene, catalog, config)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    ent = 0.0
    for n in counts.values():
        p = n / total
        if p > 0.0:
            ent -= p * math.log(p + config.zeta)
    # The stability constant makes a pure single-class scene come out at
    # -ln(1 + zeta) < 0; clamp so the range contract [0, ln C + C*zeta] holds.
    return max(ent, 0.0)


def rank_by_entropy(
    scenes: list[Scene], catalog: ClassCatalog, config: EntropyConfig, top_n: int
) -> list[str]:
    """Ids of the top_n scenes by descending entropy, ties by ascending id."""
    if top_n > len(scenes):
        raise ValueError(f"top_n={top_n} exceeds pool size {len(scenes)}")
    scored = sorted(
        ((category_entropy(s, catalog, config), s.id) for s in scenes),
        key=lambda pair: (-pair[0], pair[1]),
    )
    return [sid for _, sid in scored[:top_n]]
