"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s`` to see them as they happen).

Criteria 3-7 attack the bundled desk-scale linear model (8x8 digits
split, built once per session by the conftest fixtures).
"""
import csv
import itertools
import time

import numpy as np
import pytest

from pixle.core import ImageTensor, TransferMode, l0_pixel_distance
from pixle.errors import NoValidDestinationError
from pixle.harness import load_manifest, run_campaign, run_targeted_matrix, select_correctly_classified
from pixle.mapping import MappingKind, MappingSpec, destination_distribution, pixel_distances
from pixle.oracle import LinearSoftmaxOracle, PixelProbeOracle, predicted_class
from pixle.search import (
    Algorithm,
    AttackConfig,
    AttackGoal,
    goal_met,
    loss_for_goal,
    restart_iterative_attack,
    run_attack,
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def desk10_oracle(desk10):
    return LinearSoftmaxOracle.load(desk10.model_path)


@pytest.fixture(scope="session")
def desk10_selected(desk10, desk10_oracle):
    dataset = load_manifest(desk10.test_manifest)
    selection = select_correctly_classified(dataset, desk10_oracle, per_class_quota=20)
    assert len(selection.dataset.items) == 200
    return selection.dataset


# ------------------------------------------------------------------ 1


def _random_instance(i: int):
    rng = np.random.default_rng(1000 + i)
    channels = 1 if i % 2 else 3
    height = int(rng.integers(2, 9))
    width = int(rng.integers(2, 9))
    image = ImageTensor(rng.random((channels, height, width), dtype=np.float32))
    side = min(height, width, 3)
    patch_min = 1 + (i % side)
    cfg = AttackConfig(
        algorithm=Algorithm.RESTART_ITERATIVE if i % 3 else Algorithm.ITERATIVE,
        restarts=1 + i % 3,
        iters=1 + i % 6,
        patch_min=patch_min,
        patch_max=int(rng.integers(patch_min, side + 1)),
        mapping=MappingSpec(list(MappingKind)[i % 5]),
        transfer=TransferMode.OVERWRITE if i % 2 else TransferMode.SWAP,
        seed=i,
    )
    if i % 4 == 0:
        oracle = PixelProbeOracle()
    else:
        wrng = np.random.default_rng(2000 + i)
        n = channels * height * width
        oracle = LinearSoftmaxOracle(
            wrng.normal(size=(3, n)).astype(np.float32),
            wrng.normal(size=3).astype(np.float32),
            (channels, height, width),
        )
    label = predicted_class(oracle.query(image))  # attack a correct prediction
    return image, oracle, AttackGoal(label), cfg


def _pixel_multiset(t: ImageTensor):
    return sorted(
        tuple(t.data[:, r, c]) for r in range(t.height) for c in range(t.width)
    )


def _check_mapping_properties(image: ImageTensor, rng):
    src = None
    h, w = image.height, image.width
    src_rng = np.random.default_rng(17)
    from pixle.core import PixelCoord
    from pixle.mapping import pick_destination

    src = PixelCoord(int(src_rng.integers(0, h)), int(src_rng.integers(0, w)))
    d = pixel_distances(image, src)
    for kind in MappingKind:
        try:
            dest = pick_destination(kind, src, image, rng)
        except NoValidDestinationError:
            assert not (d > 0).any()
            continue
        assert 0 <= dest.row < h and 0 <= dest.col < w
        if kind in (MappingKind.SIMILARITY, MappingKind.DISTANCE, MappingKind.DISTANCE_DIST):
            assert d[dest.row, dest.col] > 0
        else:
            assert dest != src
    for kind, sign in ((MappingKind.SIMILARITY_DIST, -1), (MappingKind.DISTANCE_DIST, +1)):
        try:
            indices, probs = destination_distribution(kind, src, image)
        except NoValidDestinationError:
            continue
        dist = d.ravel()[indices]
        for a, b in itertools.combinations(range(0, len(indices), max(1, len(indices) // 8)), 2):
            if dist[a] == dist[b]:
                assert probs[a] == pytest.approx(probs[b], rel=1e-9)
            elif (dist[a] < dist[b]) == (sign < 0):
                assert probs[a] > probs[b]
            else:
                assert probs[a] < probs[b]


def test_criterion_1_invariant_suite():
    started = time.perf_counter()
    instances = 1000
    for i in range(instances):
        image, oracle, goal, cfg = _random_instance(i)
        runs = [run_attack(image, goal, oracle, cfg) for _ in range(3)]
        out = runs[0]

        # seed determinism, bit-identical across 3 runs
        for other in runs[1:]:
            assert other.adversarial == out.adversarial
            assert other.trajectory == out.trajectory
            assert other.accepted_queries == out.accepted_queries

        # query accounting
        assert out.queries == len(out.trajectory) <= cfg.query_budget
        assert out.l0 == l0_pixel_distance(image, out.adversarial)

        # transfer-mode value invariants, end to end
        if cfg.transfer is TransferMode.OVERWRITE:
            original = set(_pixel_multiset(image))
            assert set(_pixel_multiset(out.adversarial)) <= original
        else:
            assert _pixel_multiset(out.adversarial) == _pixel_multiset(image)

        # best-loss monotonicity over accepted candidates
        accepted = [out.trajectory[q][1] for q in out.accepted_queries]
        best = out.trajectory[0][1]
        for loss in accepted:
            assert loss < best
            best = loss

        # success consistency under early stopping
        if cfg.early_stop and out.success:
            probs = oracle.query(out.adversarial)
            assert goal_met(probs, goal)
            assert out.trajectory[-1][1] == loss_for_goal(probs, goal)

        # L0 bounded by accepted moves x patch area (x2 for swaps)
        factor = 2 if cfg.transfer is TransferMode.SWAP else 1
        assert out.l0 <= out.applied_moves * factor * cfg.patch_max**2

        _check_mapping_properties(image, np.random.default_rng(3000 + i))

    elapsed = time.perf_counter() - started
    report(
        "invariant suite",
        elapsed < 60.0,
        f"{instances} randomized instances x3 runs, all invariants held, {elapsed:.1f}s",
    )


# ------------------------------------------------------------------ 2


def test_criterion_2_bruteforce_equivalence():
    started = time.perf_counter()
    oracle = PixelProbeOracle()
    positions = [(r, c) for r in range(4) for c in range(4)]
    enumeration_size = len(list(itertools.combinations(positions, 2)))  # 120
    budget_iters = 50
    budget_restarts = 24  # 24*50 = 1200 candidates >= 10x enumeration
    assert budget_restarts * budget_iters >= 10 * enumeration_size

    worst = 20
    for k in range(10):
        rng = np.random.default_rng(500 + k)
        data = rng.random((1, 4, 4)).astype(np.float32)
        data[0, 0, 0] = np.float32(rng.uniform(0.6, 0.95))
        image = ImageTensor(data)
        goal = AttackGoal(0)

        # independent oracle: exhaustive enumeration of all single swaps
        optimum = loss_for_goal(oracle.query(image), goal)
        for (r1, c1), (r2, c2) in itertools.combinations(positions, 2):
            swapped = image.data.copy()
            swapped[:, [r1, r2], [c1, c2]] = swapped[:, [r2, r1], [c2, c1]]
            optimum = min(optimum, loss_for_goal(oracle.query(ImageTensor(swapped)), goal))

        hits = 0
        for s in range(20):
            cfg = AttackConfig(
                restarts=budget_restarts,
                iters=budget_iters,
                patch_min=1,
                patch_max=1,
                mapping=MappingSpec(MappingKind.RANDOM),
                transfer=TransferMode.SWAP,
                seed=20 * k + s,
                early_stop=False,
            )
            out = restart_iterative_attack(image, goal, oracle, cfg)
            if out.final_loss <= optimum:
                hits += 1
        worst = min(worst, hits)
        assert hits >= 18, f"instance {k}: only {hits}/20 runs reached the optimum"

    elapsed = time.perf_counter() - started
    report(
        "brute-force equivalence",
        elapsed < 30.0,
        f"10 instances x20 seeded runs, worst instance {worst}/20 at the "
        f"single-swap optimum, {elapsed:.1f}s",
    )


# ------------------------------------------------------------------ 3


def test_criterion_3_desk_success_rate(desk10, desk10_oracle, desk10_selected):
    assert desk10.accuracy >= 0.8
    started = time.perf_counter()
    reportdata = run_campaign(desk10_selected, desk10_oracle, AttackConfig(seed=0))
    elapsed = time.perf_counter() - started
    median_q = float(np.median([s["queries"] for s in reportdata.per_image]))
    ok = (
        reportdata.success_rate >= 95.0
        and median_q < 1000.0
        and elapsed < 300.0
    )
    report(
        "desk-scale success rate",
        ok,
        f"accuracy={desk10.accuracy:.3f}, success={reportdata.success_rate:.1f}%, "
        f"median queries={median_q:.0f}, {elapsed:.1f}s",
    )


# ------------------------------------------------------------------ 4


def test_criterion_4_patch_dimension_trend(desk10_oracle, desk10_selected):
    results = {}
    for side in (1, 5):
        cfg = AttackConfig(seed=0, patch_min=side, patch_max=side)
        rep = run_campaign(desk10_selected, desk10_oracle, cfg)
        queries = [s["queries"] for s in rep.per_image]
        l0s = [s["l0"] for s in rep.per_image if s["success"]]
        results[side] = {
            "iters_mean": float(np.mean(queries)),
            "iters_se": float(np.std(queries) / np.sqrt(len(queries))),
            "l0_mean": float(np.mean(l0s)),
            "l0_se": float(np.std(l0s) / np.sqrt(len(l0s))),
            "sr": rep.success_rate,
        }
    iters_margin = results[1]["iters_mean"] - results[5]["iters_mean"]
    iters_se = float(np.hypot(results[1]["iters_se"], results[5]["iters_se"]))
    l0_margin = results[5]["l0_mean"] - results[1]["l0_mean"]
    l0_se = float(np.hypot(results[1]["l0_se"], results[5]["l0_se"]))
    ok = iters_margin > iters_se and l0_margin > l0_se
    report(
        "patch-dimension trend",
        ok,
        f"iterations {results[1]['iters_mean']:.1f} (p1) vs {results[5]['iters_mean']:.1f} (p5), "
        f"margin {iters_margin:.1f} > SE {iters_se:.1f}; "
        f"L0 {results[1]['l0_mean']:.2f} (p1) vs {results[5]['l0_mean']:.2f} (p5), "
        f"margin {l0_margin:.2f} > SE {l0_se:.2f}",
    )


# ------------------------------------------------------------------ 5


def test_criterion_5_search_algorithm_trend(desk10_oracle, desk10_selected):
    # matched total query budget: 1 + 100*50 vs 1 + 5000
    restart_cfg = AttackConfig(seed=0, algorithm=Algorithm.RESTART_ITERATIVE, restarts=100, iters=50)
    iterative_cfg = AttackConfig(seed=0, algorithm=Algorithm.ITERATIVE, iters=5000)
    sr_restart = run_campaign(desk10_selected, desk10_oracle, restart_cfg).success_rate
    sr_iterative = run_campaign(desk10_selected, desk10_oracle, iterative_cfg).success_rate
    report(
        "search-algorithm trend",
        sr_restart >= sr_iterative,
        f"restart-iterative {sr_restart:.1f}% >= iterative {sr_iterative:.1f}% at budget 5000",
    )


# ------------------------------------------------------------------ 6


def test_criterion_6_mapping_function_trend(desk10_oracle, desk10_selected):
    rates, l0s = {}, {}
    for kind in (
        MappingKind.SIMILARITY,
        MappingKind.DISTANCE,
        MappingKind.SIMILARITY_DIST,
        MappingKind.DISTANCE_DIST,
    ):
        cfg = AttackConfig(seed=0, patch_min=1, patch_max=1, mapping=MappingSpec(kind))
        rep = run_campaign(desk10_selected, desk10_oracle, cfg)
        rates[kind] = rep.success_rate
        l0s[kind] = rep.l0_mean
    lowest = min(rates.values())
    ok = (
        l0s[MappingKind.SIMILARITY_DIST] < l0s[MappingKind.DISTANCE]
        and rates[MappingKind.DISTANCE] <= lowest + 5.0
    )
    report(
        "mapping-function trend",
        ok,
        f"L0 simdist {l0s[MappingKind.SIMILARITY_DIST]:.2f} < distance {l0s[MappingKind.DISTANCE]:.2f}; "
        "success rates "
        + ", ".join(f"{k.value}={rates[k]:.1f}" for k in rates)
        + f" (distance within 5 of lowest {lowest:.1f})",
    )


# ------------------------------------------------------------------ 7


def test_criterion_7_targeted_matrix(desk3, tmp_path):
    oracle = LinearSoftmaxOracle.load(desk3.model_path)
    dataset = load_manifest(desk3.test_manifest)
    out_dir = tmp_path / "matrix"
    matrix = run_targeted_matrix(
        dataset, oracle, AttackConfig(seed=0), per_pair_quota=5, out_dir=out_dir
    )

    # recompute every cell from the persisted per-attack records
    with open(out_dir / "matrix_records.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30  # 3 classes x 2 targets x quota 5
    for s in range(3):
        for t in range(3):
            if s == t:
                assert matrix.cells[s][t] is None
                continue
            mine = [r for r in rows if int(r["source"]) == s and int(r["target"]) == t]
            recomputed = 100.0 * sum(r["success"] == "true" for r in mine) / len(mine)
            assert matrix.cells[s][t] == recomputed

    report(
        "targeted matrix",
        matrix.overall_success_rate >= 80.0,
        f"cells equal recomputation from {len(rows)} persisted records, "
        f"overall targeted success {matrix.overall_success_rate:.1f}%",
    )
