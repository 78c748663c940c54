"""Dataset-level diagnostics: class balance, similarity spread, uncertainty.

These embody the selection objectives as measurable quantities over a chosen
subset: KL of the class histogram against the uniform target, summary stats
of sampled pairwise similarities, and binned per-scene uncertainty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AnchorTable, ClassCatalog, DataError, Scene
from .entropy import EntropyConfig, filtered_class_counts
from .kernel import KernelConfig, KernelEvalCounter
from .sampler import SimilarityCache
from .uncertainty import UncertaintyConfig, scene_uncertainty


@dataclass
class DiagReport:
    class_histogram: dict[str, int]
    object_count: int
    discrete_entropy: float | None
    category_kl: float | None
    similarity_mean: float | None
    similarity_std: float | None
    pair_sample_count: int
    uncertainty_histogram: dict[str, list] = field(default_factory=dict)


def counts_entropy(class_counts: dict[str, int]) -> float:
    """Shannon entropy (nats) of a count histogram; zero-total gives 0."""
    total = sum(class_counts.values())
    if total == 0:
        return 0.0
    ent = 0.0
    for n in class_counts.values():
        if n > 0:
            p = n / total
            ent -= p * math.log(p)
    return ent


def category_kl_to_uniform(class_counts: dict[str, int], num_classes: int) -> float:
    """KL divergence of the count histogram against the uniform distribution.

    Equals ln(C) minus the histogram entropy; zero iff counts are uniform
    over the full catalog.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    total = sum(class_counts.values())
    if total == 0:
        raise DataError("cannot compute category KL of an empty histogram")
    return math.log(num_classes) - counts_entropy(class_counts)


def similarity_gaussian_kl(
    mu_s: float,
    sigma_s: float,
    mu_t: float,
    sigma_t: float,
    squared_mean_term: bool = True,
) -> float:
    """KL divergence between two univariate Gaussians (sigmas are std devs).

    The default uses the standard squared mean-offset term, which guarantees
    non-negativity. ``squared_mean_term=False`` switches to an unsquared
    offset for fidelity audits of the derivation variant; that form can go
    negative and is not a divergence.
    """
    if not (sigma_s > 0 and sigma_t > 0):
        raise ValueError("sigmas must be positive")
    offset = mu_s - mu_t
    num = sigma_s**2 + (offset**2 if squared_mean_term else offset)
    return math.log(sigma_t / sigma_s) + num / (2.0 * sigma_t**2) - 0.5


def sample_pair_similarities(
    scenes: list[Scene],
    n_pairs: int,
    rng_seed: int,
    catalog: ClassCatalog,
    kernel_cfg: KernelConfig,
    cache: SimilarityCache | None = None,
    counter: KernelEvalCounter | None = None,
) -> list[float]:
    """Similarity of n_pairs random unordered scene pairs, seeded.

    Pairs are drawn without replacement across pairs; n_pairs is capped at
    the number of distinct pairs.
    """
    n = len(scenes)
    if n < 2:
        raise DataError("need at least two scenes to sample pairs")
    total_pairs = n * (n - 1) // 2
    n_pairs = min(n_pairs, total_pairs)
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(total_pairs, size=n_pairs, replace=False)
    if cache is None:
        cache = SimilarityCache(catalog, kernel_cfg)
    values = []
    for flat in sorted(int(c) for c in chosen):
        # Unrank the flat upper-triangle index into (i, j).
        i = int((2 * n - 1 - math.sqrt((2 * n - 1) ** 2 - 8 * flat)) // 2)
        j = flat - i * (2 * n - i - 1) // 2 + i + 1
        values.append(cache.similarity(scenes[i], scenes[j], counter))
    return values


def selection_report(
    selected: list[Scene],
    pool: list[Scene],
    catalog: ClassCatalog,
    entropy_cfg: EntropyConfig,
    kernel_cfg: KernelConfig,
    uncertainty_cfg: UncertaintyConfig,
    anchors: AnchorTable,
    rng_seed: int = 0,
    n_pairs: int = 200,
    cache: SimilarityCache | None = None,
) -> DiagReport:
    """Summarize a selection: class balance, similarity spread, uncertainty.

    An empty selection yields a zeroed report with KL marked not applicable.
    """
    pool_ids = {s.id for s in pool}
    for s in selected:
        if s.id not in pool_ids:
            raise ValueError(f"selected scene {s.id!r} not in pool")

    counts = {c: 0 for c in catalog.classes}
    for s in selected:
        for c, n in filtered_class_counts(s, catalog, entropy_cfg).items():
            counts[c] += n
    total = sum(counts.values())

    if not selected or total == 0:
        return DiagReport(
            class_histogram=counts,
            object_count=total,
            discrete_entropy=None,
            category_kl=None,
            similarity_mean=None,
            similarity_std=None,
            pair_sample_count=0,
        )

    entropy = counts_entropy(counts)
    kl = math.log(catalog.num_classes) - entropy

    sim_mean = sim_std = None
    pair_count = 0
    if len(selected) >= 2:
        sims = sample_pair_similarities(
            selected, n_pairs, rng_seed, catalog, kernel_cfg, cache=cache
        )
        sim_mean = float(np.mean(sims))
        sim_std = float(np.std(sims))
        pair_count = len(sims)

    unc_hist: dict[str, list] = {}
    try:
        unc = [scene_uncertainty(s, anchors, uncertainty_cfg) for s in selected]
        hist, edges = np.histogram(unc, bins=10)
        unc_hist = {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in hist]}
    except DataError:
        pass  # no sidecars: uncertainty histogram omitted

    return DiagReport(
        class_histogram=counts,
        object_count=total,
        discrete_entropy=entropy,
        category_kl=kl,
        similarity_mean=sim_mean,
        similarity_std=sim_std,
        pair_sample_count=pair_count,
        uncertainty_histogram=unc_hist,
    )
