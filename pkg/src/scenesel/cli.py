"""Command-line frontend: synth, score, select, simulate, stats.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric
non-convergence. All randomness flows from the ``--seed`` flag.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, kitti, sampler, state as state_mod, synth
from .config import CliConfig, build_config
from .core import ConvergenceError, DataError, ParseError, Scene, SceneSelError
from .entropy import category_entropy
from .kernel import KernelEvalCounter, pairwise_similarity_matrix
from .sampler import STRATEGIES, SimilarityCache, StagePlan
from .uncertainty import scene_uncertainty

log = logging.getLogger("scenesel")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _mix_from_flag(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split(","))


def _pool_spec_from_args(args) -> synth.PoolSpec:
    objects_min, objects_max = (int(v) for v in args.objects.split(","))
    return synth.PoolSpec(
        n_scenes=args.n_scenes,
        class_mix=_mix_from_flag(args.class_mix),
        objects_min=objects_min,
        objects_max=objects_max,
        spatial_extent=args.extent,
        redundancy_groups=args.groups,
        rng_seed=args.seed,
    )


def _noise_from_args(args) -> synth.NoiseModel:
    return synth.NoiseModel(
        confidence_noise=args.conf_noise,
        position_noise_per_meter=args.pos_noise,
        false_positive_rate=args.fp_rate,
        misclass_rate=args.misclass,
        mixture_components=args.components,
        mean_spread=args.mean_spread,
    )


def _add_pool_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-scenes", type=int, default=200)
    p.add_argument("--class-mix", default="0.9,0.05,0.05")
    p.add_argument("--objects", default="2,6", help="min,max objects per scene")
    p.add_argument("--extent", type=float, default=60.0)
    p.add_argument("--groups", type=int, default=None, help="redundancy groups")
    p.add_argument("--conf-noise", type=float, default=0.5)
    p.add_argument("--pos-noise", type=float, default=0.005)
    p.add_argument("--fp-rate", type=float, default=0.3)
    p.add_argument("--misclass", type=float, default=0.05)
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--mean-spread", type=float, default=0.1)


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-r", type=int, default=None)
    p.add_argument("--k1", type=float, default=None)
    p.add_argument("--k2", type=float, default=None)
    p.add_argument("--order", default=None, help="comma-separated stage order")
    p.add_argument("--rounds", type=int, default=None)


def _config_from_args(args) -> CliConfig:
    overrides = {}
    for flag, key in (
        ("n_r", "plan.n_r"),
        ("k1", "plan.k1"),
        ("k2", "plan.k2"),
        ("order", "plan.order"),
        ("rounds", "plan.rounds"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return build_config(path=args.config, overrides=overrides)


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    spec = _pool_spec_from_args(args)
    noise = _noise_from_args(args)
    pool = synth.generate_pool(spec, cfg.catalog, cfg.anchors)
    predictor = synth.make_predictor(noise, cfg.anchors, cfg.catalog, args.seed)
    out = Path(args.out)
    for sid, scene in sorted(pool.items()):
        pred = predictor(scene)
        _atomic_write(out / "ground_truth" / f"{sid}.txt", kitti.serialize_label_file(scene))
        _atomic_write(out / "labels" / f"{sid}.txt", kitti.serialize_label_file(pred))
        (out / "sidecars").mkdir(parents=True, exist_ok=True)
        kitti.save_mixture_sidecar(pred, out / "sidecars" / f"{sid}.mdn")
    print(f"wrote {len(pool)} scenes to {out}")
    return 0


def cmd_score(args) -> int:
    cfg = _config_from_args(args)
    with_sidecars = args.metric == "uncertainty"
    scenes = kitti.load_pool_dir(args.pool, cfg.catalog, with_sidecars=with_sidecars)
    if not scenes:
        raise DataError(f"no label files under {args.pool}")
    out = Path(args.out)
    if args.metric == "entropy":
        rows = [[s.id, f"{category_entropy(s, cfg.catalog, cfg.entropy):.9f}"] for s in scenes]
        _write_csv(out, ["scene_id", "entropy"], rows)
    elif args.metric == "uncertainty":
        rows = [
            [s.id, f"{scene_uncertainty(s, cfg.anchors, cfg.uncertainty):.9f}"] for s in scenes
        ]
        _write_csv(out, ["scene_id", "uncertainty"], rows)
    else:  # similarity: emit the pairwise matrix
        sim = pairwise_similarity_matrix(scenes, cfg.catalog, cfg.kernel, jobs=args.jobs)
        ids = [s.id for s in scenes]
        rows = [[ids[i]] + [f"{v:.9f}" for v in sim[i]] for i in range(len(ids))]
        _write_csv(out, ["scene_id"] + ids, rows)
    print(f"wrote {args.metric} scores for {len(scenes)} scenes to {out}")
    return 0


def cmd_select(args) -> int:
    cfg = _config_from_args(args)
    scenes = kitti.load_pool_dir(args.pool, cfg.catalog, with_sidecars=not args.no_sidecars)
    by_id = {s.id: s for s in scenes}
    state_path = Path(args.state)
    out = Path(args.out)

    if args.init:
        rng = np.random.default_rng(args.seed)
        ids = sorted(by_id)
        n0 = args.n0
        if n0 > len(ids):
            raise DataError(f"--n0 {n0} exceeds pool size {len(ids)}")
        labeled = {ids[i] for i in rng.choice(len(ids), size=n0, replace=False)}
        st = state_mod.RoundState(
            round_index=0,
            labeled_ids=frozenset(labeled),
            unlabeled_ids=frozenset(set(ids) - labeled),
            budget_total=args.budget if args.budget else len(ids),
            per_round_selected=(),
            rng_seed=args.seed,
        )
        state_mod.save_round_state(st, state_path)
        print(f"initialized state: {len(st.labeled_ids)} labeled, {len(st.unlabeled_ids)} unlabeled")
        return 0

    st = state_mod.load_round_state(state_path)
    unlabeled = [by_id[i] for i in sorted(st.unlabeled_ids) if i in by_id]
    if len(unlabeled) < cfg.plan.n_r:
        raise DataError(
            f"unlabeled pool of {len(unlabeled)} cannot supply n_r={cfg.plan.n_r} scenes"
        )
    counter = KernelEvalCounter()
    selected, slog = sampler.three_stage_select(
        unlabeled,
        cfg.plan,
        cfg.catalog,
        cfg.anchors,
        cfg.entropy,
        cfg.kernel,
        cfg.uncertainty,
        counter=counter,
        allow_degraded=True,
    )
    st = st.with_selection(tuple(selected))
    state_mod.save_round_state(st, state_path)
    _atomic_write(out / f"selected_round_{st.round_index:03d}.txt", "\n".join(selected) + "\n")
    report = diagnostics.selection_report(
        [by_id[i] for i in selected],
        scenes,
        cfg.catalog,
        cfg.entropy,
        cfg.kernel,
        cfg.uncertainty,
        cfg.anchors,
        rng_seed=args.seed,
    )
    _write_report(out / f"report_round_{st.round_index:03d}", report)
    log.info("stage sizes %s, kernel evals %d", slog.stage_sizes, slog.kernel_evals)
    print(
        f"round {st.round_index}: selected {len(selected)} scenes "
        f"(stage sizes {slog.stage_sizes}, kernel evals {slog.kernel_evals})"
    )
    return 0


def _write_report(prefix: Path, report: diagnostics.DiagReport) -> None:
    _write_csv(
        prefix.with_suffix(".hist.csv"),
        ["class", "count"],
        [[c, n] for c, n in sorted(report.class_histogram.items())],
    )
    lines = [
        f"object_count = {report.object_count}",
        f"discrete_entropy = {report.discrete_entropy}",
        f"category_kl = {report.category_kl}",
        f"similarity_mean = {report.similarity_mean}",
        f"similarity_std = {report.similarity_std}",
        f"pair_sample_count = {report.pair_sample_count}",
        f"uncertainty_histogram = {report.uncertainty_histogram}",
    ]
    _atomic_write(prefix.with_suffix(".summary.txt"), "\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise DataError(f"unknown strategy {s!r}; valid: {', '.join(STRATEGIES)}")
    spec = _pool_spec_from_args(args)
    noise = _noise_from_args(args)
    pool = synth.generate_pool(spec, cfg.catalog, cfg.anchors)
    predictor = synth.make_predictor(noise, cfg.anchors, cfg.catalog, args.seed)
    out = Path(args.out)

    rng = np.random.default_rng(args.seed)
    ids = sorted(pool)
    n0 = min(args.n0, len(ids))
    initial = {ids[i] for i in rng.choice(len(ids), size=n0, replace=False)}

    comparison_rows = []
    for strategy in strategies:
        st = state_mod.RoundState(
            round_index=0,
            labeled_ids=frozenset(initial),
            unlabeled_ids=frozenset(set(ids) - initial),
            budget_total=len(ids),
            per_round_selected=(),
            rng_seed=args.seed,
        )
        cache = SimilarityCache(cfg.catalog, cfg.kernel)
        st, reports = sampler.run_al_rounds(
            pool,
            cfg.plan,
            cfg.rounds,
            predictor,
            lambda sid: pool[sid],
            st,
            cfg.catalog,
            cfg.anchors,
            cfg.entropy,
            cfg.kernel,
            cfg.uncertainty,
            strategy=strategy,
            cache=cache,
        )
        sdir = out / strategy
        rows = []
        for rep in reports:
            rows.append(
                [
                    rep.round_index,
                    len(rep.selected_ids),
                    f"{rep.selection_entropy:.6f}",
                    "" if rep.mean_pairwise_similarity is None else f"{rep.mean_pairwise_similarity:.6f}",
                    "" if rep.mean_uncertainty is None else f"{rep.mean_uncertainty:.6f}",
                    rep.kernel_evals,
                ]
                + [rep.class_counts[c] for c in cfg.catalog.classes]
            )
            comparison_rows.append([strategy] + rows[-1])
            _atomic_write(
                sdir / f"selected_round_{rep.round_index:03d}.txt",
                "\n".join(rep.selected_ids) + "\n",
            )
        header = ["round", "selected", "entropy", "mean_similarity", "mean_uncertainty", "kernel_evals"] + list(
            cfg.catalog.classes
        )
        _write_csv(sdir / "rounds.csv", header, rows)
        state_mod.save_round_state(st, sdir / "state.json")
    _write_csv(
        out / "comparison.csv",
        ["strategy", "round", "selected", "entropy", "mean_similarity", "mean_uncertainty", "kernel_evals"]
        + list(cfg.catalog.classes),
        comparison_rows,
    )
    print(f"simulated {cfg.rounds} rounds for {len(strategies)} strategies -> {out}")
    return 0


def cmd_stats(args) -> int:
    cfg = _config_from_args(args)
    try:
        scenes = kitti.load_pool_dir(args.pool, cfg.catalog, with_sidecars=True)
    except DataError:
        scenes = kitti.load_pool_dir(args.pool, cfg.catalog, with_sidecars=False)
    by_id = {s.id: s for s in scenes}
    if args.ids:
        wanted = [line.strip() for line in Path(args.ids).read_text().splitlines() if line.strip()]
        missing = [w for w in wanted if w not in by_id]
        if missing:
            raise DataError(f"ids not in pool: {missing[:5]}")
        selected = [by_id[w] for w in wanted]
    else:
        selected = scenes
    report = diagnostics.selection_report(
        selected,
        scenes,
        cfg.catalog,
        cfg.entropy,
        cfg.kernel,
        cfg.uncertainty,
        cfg.anchors,
        rng_seed=args.seed,
    )
    _write_report(Path(args.out) / "stats", report)
    print(f"wrote stats for {len(selected)} of {len(scenes)} scenes to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenesel", description=__doc__)
    parser.add_argument("--config", default=None, help="key-value configuration file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pool on disk")
    p.add_argument("--out", required=True)
    _add_pool_spec_flags(p)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="score a pool by one metric")
    p.add_argument("--pool", required=True)
    p.add_argument("--metric", choices=("entropy", "similarity", "uncertainty"), required=True)
    p.add_argument("--out", required=True)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="run one selection round against a state file")
    p.add_argument("--pool", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", action="store_true", help="initialize the state and exit")
    p.add_argument("--n0", type=int, default=0, help="initial random labeled count")
    p.add_argument("--budget", type=int, default=0)
    p.add_argument("--no-sidecars", action="store_true")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="in-memory multi-round comparison of strategies")
    p.add_argument("--out", required=True)
    p.add_argument("--strategies", default="random,tscenejal")
    p.add_argument("--n0", type=int, default=10)
    _add_pool_spec_flags(p)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="diagnostics for a pool or a selection")
    p.add_argument("--pool", required=True)
    p.add_argument("--ids", default=None, help="file with one selected id per line")
    p.add_argument("--out", required=True)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, SceneSelError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
