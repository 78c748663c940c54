"""Persistent bookkeeping for the multi-round selection loop."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .core import DataError

STATE_VERSION = 1


@dataclass(frozen=True)
class RoundState:
    round_index: int
    labeled_ids: frozenset[str]
    unlabeled_ids: frozenset[str]
    budget_total: int
    per_round_selected: tuple[tuple[str, ...], ...]
    rng_seed: int

    def __post_init__(self):
        if self.round_index < 0:
            raise ValueError("round_index must be >= 0")
        overlap = self.labeled_ids & self.unlabeled_ids
        if overlap:
            raise ValueError(f"labeled and unlabeled ids overlap: {sorted(overlap)[:5]}")
        selected_total = sum(len(r) for r in self.per_round_selected)
        if selected_total > self.budget_total:
            raise ValueError(
                f"selections ({selected_total}) exceed budget ({self.budget_total})"
            )
        if len(self.per_round_selected) != self.round_index:
            raise ValueError(
                f"round_index {self.round_index} does not match "
                f"{len(self.per_round_selected)} recorded rounds"
            )

    @classmethod
    def fresh(cls, pool_ids, budget_total: int, rng_seed: int) -> "RoundState":
        return cls(
            round_index=0,
            labeled_ids=frozenset(),
            unlabeled_ids=frozenset(pool_ids),
            budget_total=budget_total,
            per_round_selected=(),
            rng_seed=rng_seed,
        )

    def with_selection(self, selected: tuple[str, ...]) -> "RoundState":
        """Advance one round, moving the selected ids to the labeled set."""
        missing = [s for s in selected if s not in self.unlabeled_ids]
        if missing:
            raise ValueError(f"selected ids not in unlabeled pool: {missing[:5]}")
        return replace(
            self,
            round_index=self.round_index + 1,
            labeled_ids=self.labeled_ids | set(selected),
            unlabeled_ids=self.unlabeled_ids - set(selected),
            per_round_selected=self.per_round_selected + (tuple(selected),),
        )


def save_round_state(state: RoundState, path: str | Path) -> None:
    doc = {
        "version": STATE_VERSION,
        "round_index": state.round_index,
        "labeled_ids": sorted(state.labeled_ids),
        "unlabeled_ids": sorted(state.unlabeled_ids),
        "budget_total": state.budget_total,
        "per_round_selected": [list(r) for r in state.per_round_selected],
        "rng_seed": state.rng_seed,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    tmp.replace(path)


def load_round_state(path: str | Path) -> RoundState:
    """Load and re-validate a persisted state; never yields partial state."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError) as exc:
        raise DataError(f"{path}: cannot read round state: {exc}") from exc
    if doc.get("version") != STATE_VERSION:
        raise DataError(f"{path}: unsupported state version {doc.get('version')!r}")
    try:
        return RoundState(
            round_index=int(doc["round_index"]),
            labeled_ids=frozenset(doc["labeled_ids"]),
            unlabeled_ids=frozenset(doc["unlabeled_ids"]),
            budget_total=int(doc["budget_total"]),
            per_round_selected=tuple(tuple(r) for r in doc["per_round_selected"]),
            rng_seed=int(doc["rng_seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid round state: {exc}") from exc
