"""Farthest sampling, the three-stage joint selector, and the round driver.

Stage scoring is pure and parallelizable; stage transitions and state
updates are strictly sequential, with a single writer over the round state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import AnchorTable, ClassCatalog, Scene
from .entropy import EntropyConfig, category_entropy, filtered_class_counts, rank_by_entropy
from .kernel import (
    KernelConfig,
    KernelEvalCounter,
    build_scene_graph,
    marginalized_kernel,
)
from .state import RoundState
from .uncertainty import UncertaintyConfig, rank_by_uncertainty, scene_uncertainty
from .core import DataError

log = logging.getLogger(__name__)

STAGE_NAMES = ("entropy", "similarity", "uncertainty")
STRATEGIES = ("random", "entropy-only", "fs-only", "uncertainty-only", "tscenejal")


@dataclass(frozen=True)
class StagePlan:
    n_r: int
    k1: float = 3.0
    k2: float = 2.5
    order: tuple[str, str, str] = STAGE_NAMES

    def __post_init__(self):
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if not (self.k1 >= self.k2 >= 1.0):
            raise ValueError(f"need k1 >= k2 >= 1, got k1={self.k1} k2={self.k2}")
        if sorted(self.order) != sorted(STAGE_NAMES):
            raise ValueError(f"order must be a permutation of {STAGE_NAMES}")

    def stage_sizes(self) -> tuple[int, int, int]:
        """Candidate-set sizes after each stage. Fractional multipliers floor."""
        return (math.floor(self.k1 * self.n_r), math.floor(self.k2 * self.n_r), self.n_r)


class SimilarityCache:
    """Memoizes graphs, self-kernels, and pairwise similarities by scene id.

    Assumes a stable id -> scene mapping for the lifetime of the cache (true
    for a fixed pool under a deterministic predictor).
    """

    def __init__(self, catalog: ClassCatalog, config: KernelConfig):
        self.catalog = catalog
        self.config = config
        self._graphs = {}
        self._self_k = {}
        self._pairs = {}

    def _graph(self, scene: Scene):
        g = self._graphs.get(scene.id)
        if g is None:
            g = build_scene_graph(scene, self.catalog, self.config)
            self._graphs[scene.id] = g
        return g

    def _self_kernel(self, scene: Scene, counter: KernelEvalCounter | None):
        k = self._self_k.get(scene.id)
        if k is None:
            k = marginalized_kernel(self._graph(scene), self._graph(scene), self.config, counter)
            self._self_k[scene.id] = k
        return k

    def similarity(self, s1: Scene, s2: Scene, counter: KernelEvalCounter | None = None) -> float:
        if s1.id == s2.id:
            return 1.0
        key = (s1.id, s2.id) if s1.id < s2.id else (s2.id, s1.id)
        val = self._pairs.get(key)
        if val is None:
            cross = marginalized_kernel(self._graph(s1), self._graph(s2), self.config, counter)
            val = cross / math.sqrt(
                self._self_kernel(s1, counter) * self._self_kernel(s2, counter)
            )
            self._pairs[key] = val
        return val

    def matrix(self, scenes: list[Scene], counter: KernelEvalCounter | None = None) -> np.ndarray:
        n = len(scenes)
        sim = np.eye(n)
        for i in range(n):
            for j in range(i + 1, n):
                sim[i, j] = sim[j, i] = self.similarity(scenes[i], scenes[j], counter)
        return sim


def _argbest(ids: list[str], values, candidates, maximize: bool) -> int:
    """Index of the best value among candidates; ties go to the smallest id."""
    best = None
    for i in candidates:
        if best is None:
            best = i
            continue
        v, b = values[i], values[best]
        if (v > b if maximize else v < b) or (v == b and ids[i] < ids[best]):
            best = i
    return best


def farthest_sampling(pool_ids: list[str], similarity_matrix, k: int) -> list[str]:
    """Greedy max-min selection of k ids in a [0, 1] similarity space.

    The initial point is the scene least similar to the "hub" (the scene with
    the largest similarity row sum); each later pick maximizes the minimum
    dissimilarity (1 - S) to the already-selected set. All ties break toward
    the ascending id. Output order is selection order.
    """
    n = len(pool_ids)
    if k > n:
        raise ValueError(f"k={k} exceeds pool size {n}")
    if k < 1:
        return []
    sim = np.asarray(similarity_matrix, dtype=float)
    if sim.shape != (n, n):
        raise ValueError("similarity matrix shape mismatch")
    if n == 1:
        return [pool_ids[0]]

    row_sums = sim.sum(axis=1)
    hub = _argbest(pool_ids, row_sums, range(n), maximize=True)
    first = _argbest(pool_ids, sim[:, hub], [i for i in range(n) if i != hub], maximize=False)

    selected = [first]
    remaining = set(range(n)) - {first}
    min_dissim = 1.0 - sim[:, first]
    while len(selected) < k:
        pick = _argbest(pool_ids, min_dissim, remaining, maximize=True)
        selected.append(pick)
        remaining.discard(pick)
        min_dissim = np.minimum(min_dissim, 1.0 - sim[:, pick])
    return [pool_ids[i] for i in selected]


@dataclass
class SelectionLog:
    pool_size: int
    stage_order: tuple[str, str, str]
    stage_sizes: tuple[int, int, int]
    kernel_evals: int
    entropy_sorts: int
    degraded: bool


def three_stage_select(
    unlabeled_scenes: list[Scene],
    plan: StagePlan,
    catalog: ClassCatalog,
    anchors: AnchorTable,
    entropy_cfg: EntropyConfig,
    kernel_cfg: KernelConfig,
    uncertainty_cfg: UncertaintyConfig,
    cache: SimilarityCache | None = None,
    counter: KernelEvalCounter | None = None,
    allow_degraded: bool = False,
) -> tuple[list[str], SelectionLog]:
    """Run the three metric stages in the configured order.

    Stage target sizes are floor(k1*n_r), floor(k2*n_r), n_r regardless of
    which metric runs at which position. If the pool is smaller than the
    first stage and ``allow_degraded`` is set, the multipliers shrink
    proportionally so stage 1 consumes the whole pool (logged); otherwise the
    shortfall is an error.
    """
    pool_size = len(unlabeled_scenes)
    sizes = list(plan.stage_sizes())
    degraded = False
    if pool_size < sizes[0]:
        if not allow_degraded or pool_size < plan.n_r:
            raise ValueError(
                f"pool of {pool_size} scenes is below the required first-stage size {sizes[0]}"
            )
        degraded = True
        sizes[0] = pool_size
        sizes[1] = min(sizes[1], max(plan.n_r, math.floor(plan.k2 * pool_size / plan.k1)))
        log.warning(
            "degraded round: pool %d < floor(k1*n_r)=%d, stage sizes now %s",
            pool_size,
            math.floor(plan.k1 * plan.n_r),
            tuple(sizes),
        )

    if counter is None:
        counter = KernelEvalCounter()
    if cache is None:
        cache = SimilarityCache(catalog, kernel_cfg)

    by_id = {s.id: s for s in unlabeled_scenes}
    candidates = sorted(by_id)
    entropy_sorts = 0
    for stage, size in zip(plan.order, sizes):
        scenes = [by_id[i] for i in candidates]
        if stage == "entropy":
            candidates = rank_by_entropy(scenes, catalog, entropy_cfg, size)
            entropy_sorts += 1
        elif stage == "similarity":
            sim = cache.matrix(scenes, counter)
            candidates = farthest_sampling([s.id for s in scenes], sim, size)
        elif stage == "uncertainty":
            candidates = rank_by_uncertainty(scenes, anchors, uncertainty_cfg, size)
    return list(candidates), SelectionLog(
        pool_size=pool_size,
        stage_order=plan.order,
        stage_sizes=tuple(sizes),
        kernel_evals=counter.count,
        entropy_sorts=entropy_sorts,
        degraded=degraded,
    )


@dataclass
class RoundReport:
    round_index: int
    strategy: str
    selected_ids: tuple[str, ...]
    stage_sizes: tuple[int, int, int] | None
    kernel_evals: int
    selection_entropy: float
    mean_pairwise_similarity: float | None
    mean_uncertainty: float | None
    class_counts: dict[str, int]
    object_count: int


def _select_for_strategy(
    strategy: str,
    preds: list[Scene],
    plan: StagePlan,
    catalog: ClassCatalog,
    anchors: AnchorTable,
    entropy_cfg: EntropyConfig,
    kernel_cfg: KernelConfig,
    uncertainty_cfg: UncertaintyConfig,
    cache: SimilarityCache,
    counter: KernelEvalCounter,
    rng: np.random.Generator,
) -> tuple[list[str], tuple[int, int, int] | None]:
    if strategy == "tscenejal":
        selected, slog = three_stage_select(
            preds,
            plan,
            catalog,
            anchors,
            entropy_cfg,
            kernel_cfg,
            uncertainty_cfg,
            cache=cache,
            counter=counter,
            allow_degraded=True,
        )
        return selected, slog.stage_sizes
    ids = sorted(s.id for s in preds)
    if strategy == "random":
        picked = rng.choice(len(ids), size=plan.n_r, replace=False)
        return [ids[i] for i in picked], None
    if strategy == "entropy-only":
        return rank_by_entropy(preds, catalog, entropy_cfg, plan.n_r), None
    if strategy == "fs-only":
        ordered = sorted(preds, key=lambda s: s.id)
        sim = cache.matrix(ordered, counter)
        return farthest_sampling([s.id for s in ordered], sim, plan.n_r), None
    if strategy == "uncertainty-only":
        return rank_by_uncertainty(preds, anchors, uncertainty_cfg, plan.n_r), None
    raise ValueError(f"unknown strategy {strategy!r}; valid: {', '.join(STRATEGIES)}")


def run_al_rounds(
    pool: dict[str, Scene],
    plan: StagePlan,
    rounds: int,
    predictor: Callable[[Scene], Scene],
    oracle: Callable[[str], Scene],
    state: RoundState,
    catalog: ClassCatalog,
    anchors: AnchorTable,
    entropy_cfg: EntropyConfig,
    kernel_cfg: KernelConfig,
    uncertainty_cfg: UncertaintyConfig,
    strategy: str = "tscenejal",
    cache: SimilarityCache | None = None,
) -> tuple[RoundState, list[RoundReport]]:
    """Drive ``rounds`` selection rounds, returning the new state and reports.

    Each round runs the predictor over the unlabeled pool, selects n_r ids
    under the chosen strategy, reveals ground truth via the oracle, and moves
    the ids to the labeled set. Deterministic given the state's rng_seed. A
    predictor or oracle failure aborts the round; the input state object is
    never mutated.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; valid: {', '.join(STRATEGIES)}")
    already = sum(len(r) for r in state.per_round_selected)
    if already + rounds * plan.n_r > state.budget_total:
        raise ValueError(
            f"budget {state.budget_total} cannot cover {rounds} more rounds of {plan.n_r}"
        )
    if cache is None:
        cache = SimilarityCache(catalog, kernel_cfg)

    reports: list[RoundReport] = []
    for _ in range(rounds):
        round_index = state.round_index + 1
        counter = KernelEvalCounter()
        rng = np.random.default_rng(np.random.SeedSequence([state.rng_seed, round_index]))
        unlabeled = [pool[i] for i in sorted(state.unlabeled_ids)]
        preds = [predictor(s) for s in unlabeled]
        selected, stage_sizes = _select_for_strategy(
            strategy,
            preds,
            plan,
            catalog,
            anchors,
            entropy_cfg,
            kernel_cfg,
            uncertainty_cfg,
            cache,
            counter,
            rng,
        )
        for sid in selected:
            oracle(sid)  # ground-truth reveal; the simulated pool already holds it
        pred_by_id = {p.id: p for p in preds}
        selected_preds = [pred_by_id[i] for i in selected]
        reports.append(
            _round_report(
                round_index,
                strategy,
                selected_preds,
                stage_sizes,
                counter,
                catalog,
                anchors,
                entropy_cfg,
                uncertainty_cfg,
                cache,
            )
        )
        state = state.with_selection(tuple(selected))
    return state, reports


def _round_report(
    round_index: int,
    strategy: str,
    selected_preds: list[Scene],
    stage_sizes,
    counter: KernelEvalCounter,
    catalog: ClassCatalog,
    anchors: AnchorTable,
    entropy_cfg: EntropyConfig,
    uncertainty_cfg: UncertaintyConfig,
    cache: SimilarityCache,
) -> RoundReport:
    counts = {c: 0 for c in catalog.classes}
    for s in selected_preds:
        for c, n in filtered_class_counts(s, catalog, entropy_cfg).items():
            counts[c] += n
    total = sum(counts.values())
    sel_entropy = 0.0
    if total:
        for n in counts.values():
            p = n / total
            if p > 0:
                sel_entropy -= p * math.log(p + entropy_cfg.zeta)

    mean_sim = None
    if len(selected_preds) >= 2:
        vals = [
            cache.similarity(selected_preds[i], selected_preds[j], counter)
            for i in range(len(selected_preds))
            for j in range(i + 1, len(selected_preds))
        ]
        mean_sim = float(np.mean(vals))

    try:
        mean_unc = float(
            np.mean([scene_uncertainty(s, anchors, uncertainty_cfg) for s in selected_preds])
        )
    except DataError:
        mean_unc = None

    return RoundReport(
        round_index=round_index,
        strategy=strategy,
        selected_ids=tuple(s.id for s in selected_preds),
        stage_sizes=stage_sizes,
        kernel_evals=counter.count,
        selection_entropy=sel_entropy,
        mean_pairwise_similarity=mean_sim,
        mean_uncertainty=mean_unc,
        class_counts=counts,
        object_count=total,
    )
