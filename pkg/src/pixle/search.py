"""The attack loops: loss functions, early stopping and two random searches.

Both searches draw a rectangular patch of source pixels, relocate its
pixels with the configured mapping rule, and query the oracle on the
candidate. The restart-iterative search derives every candidate of a
restart from the image the restart started with, committing only the best
one; the iterative search commits every candidate that strictly lowers
the loss.

Loss convention: the probability of the true class for untargeted goals,
one minus the probability of the target class for targeted goals. Lower
is better in both cases and a strict decrease is required to accept a
candidate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    ImageTensor,
    Patch,
    TransferMode,
    apply_mapping,
    build_patch_indices,
    l0_pixel_distance,
)
from .errors import (
    AttackAbortedError,
    ConfigError,
    ContractViolationError,
    NoValidDestinationError,
    OracleError,
)
from .mapping import MappingKind, MappingSpec, pick_destination
from .oracle import Oracle, predicted_class


class Algorithm(Enum):
    RESTART_ITERATIVE = "restart"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class AttackGoal:
    """Untargeted (move the prediction off ``label``) or targeted
    (force the prediction onto ``target``)."""

    label: int
    target: int | None = None

    def __post_init__(self):
        if self.label < 0:
            raise ContractViolationError("label must be a valid class index")
        if self.target is not None and self.target == self.label:
            raise ContractViolationError("target class must differ from the label")

    @property
    def targeted(self) -> bool:
        return self.target is not None


@dataclass
class AttackConfig:
    """Everything that parametrizes one attack run.

    ``restarts`` is ignored by the iterative algorithm. The total query
    budget is ``1 + restarts * iters`` for restart-iterative and
    ``1 + iters`` for iterative (the leading 1 is the clean-image query).
    """

    algorithm: Algorithm = Algorithm.RESTART_ITERATIVE
    restarts: int = 100
    iters: int = 50
    patch_min: int = 3
    patch_max: int = 3
    mapping: MappingSpec = field(default_factory=lambda: MappingSpec(MappingKind.RANDOM))
    transfer: TransferMode = TransferMode.OVERWRITE
    seed: int = 0
    early_stop: bool = True

    def validate(self) -> None:
        if self.restarts < 0 or self.iters < 0:
            raise ConfigError("budgets must be non-negative")
        if not (1 <= self.patch_min <= self.patch_max):
            raise ConfigError("need 1 <= patch_min <= patch_max")

    @property
    def query_budget(self) -> int:
        if self.algorithm is Algorithm.RESTART_ITERATIVE:
            return 1 + self.restarts * self.iters
        return 1 + self.iters


@dataclass
class AttackOutcome:
    """Result of one attack run.

    ``trajectory`` holds one ``(query_index, loss)`` entry per oracle
    query, starting at index 0 with the clean image. ``applied_moves``
    counts the patch applications composed into the returned image:
    accepted improvements plus, on early stop, the successful candidate
    itself. ``accepted_queries`` lists the query indices of the accepted
    improvements only.
    """

    success: bool
    adversarial: ImageTensor
    queries: int
    l0: int
    trajectory: list[tuple[int, float]]
    final_loss: float
    applied_moves: int
    accepted_queries: list[int] = field(default_factory=list)


def untargeted_loss(probs: np.ndarray, label: int) -> float:
    """Probability assigned to the true class."""
    if not 0 <= label < len(probs):
        raise ContractViolationError(f"class index {label} out of range")
    return float(probs[label])


def targeted_loss(probs: np.ndarray, target: int) -> float:
    """One minus the probability assigned to the target class."""
    if not 0 <= target < len(probs):
        raise ContractViolationError(f"class index {target} out of range")
    return 1.0 - float(probs[target])


def loss_for_goal(probs: np.ndarray, goal: AttackGoal) -> float:
    if goal.targeted:
        return targeted_loss(probs, goal.target)  # type: ignore[arg-type]
    return untargeted_loss(probs, goal.label)


def goal_met(probs: np.ndarray, goal: AttackGoal) -> bool:
    """Whether the prediction satisfies the attack goal (argmax ties keep
    the smallest class index)."""
    pred = predicted_class(probs)
    if goal.targeted:
        return pred == goal.target
    return pred != goal.label


def sample_patch(
    rng: np.random.Generator,
    height: int,
    width: int,
    patch_min: int,
    patch_max: int,
) -> Patch:
    """Draw side lengths uniformly from [patch_min, patch_max] and the
    origin uniformly over the image. Fixed draw order (w, h, o_x, o_y)
    keeps seeded runs reproducible."""
    if patch_max > min(height, width):
        raise ConfigError(
            f"patch_max {patch_max} exceeds image side {min(height, width)}"
        )
    w = int(rng.integers(patch_min, patch_max + 1))
    h = int(rng.integers(patch_min, patch_max + 1))
    o_x = int(rng.integers(0, width))
    o_y = int(rng.integers(0, height))
    return Patch(origin_x=o_x, origin_y=o_y, width=w, height=h)


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)


class _OracleSession:
    """Counts queries and records the loss trajectory."""

    def __init__(self, oracle: Oracle, goal: AttackGoal):
        self.oracle = oracle
        self.goal = goal
        self.trajectory: list[tuple[int, float]] = []

    @property
    def queries(self) -> int:
        return len(self.trajectory)

    def query(self, image: ImageTensor) -> tuple[float, bool, np.ndarray]:
        try:
            probs = self.oracle.query(image)
        except OracleError as exc:
            raise AttackAbortedError(str(exc), queries=self.queries) from exc
        loss = loss_for_goal(probs, self.goal)
        self.trajectory.append((self.queries, loss))
        return loss, goal_met(probs, self.goal), probs


def _propose(
    base: ImageTensor, cfg: AttackConfig, rng: np.random.Generator
) -> ImageTensor | None:
    """One candidate: sampled patch, fresh mapping, pixel transfer.

    Returns None (consuming no query) when the mapping has no admissible
    destination, e.g. the distance rule on a constant image.
    """
    patch = sample_patch(rng, base.height, base.width, cfg.patch_min, cfg.patch_max)
    sources = build_patch_indices(patch, base.height, base.width)
    try:
        destinations = [
            pick_destination(cfg.mapping.kind, src, base, rng) for src in sources
        ]
    except NoValidDestinationError:
        return None
    return apply_mapping(base, sources, destinations, cfg.transfer)


def _check_preconditions(image: ImageTensor, goal: AttackGoal, oracle: Oracle, cfg: AttackConfig):
    cfg.validate()
    if cfg.patch_max > min(image.height, image.width):
        raise ConfigError(
            f"patch_max {cfg.patch_max} exceeds image side "
            f"{min(image.height, image.width)}"
        )
    if goal.label >= oracle.num_classes:
        raise ContractViolationError("label outside the oracle's class range")
    if goal.targeted and goal.target >= oracle.num_classes:  # type: ignore[operator]
        raise ContractViolationError("target outside the oracle's class range")


def _finish(
    session: _OracleSession,
    original: ImageTensor,
    adversarial: ImageTensor,
    success: bool,
    final_loss: float,
    accepted: list[int],
    extra_moves: int = 0,
) -> AttackOutcome:
    # extra_moves covers an early-stopped candidate: it was applied to the
    # returned image even when it never improved the best loss.
    return AttackOutcome(
        success=success,
        adversarial=adversarial,
        queries=session.queries,
        l0=l0_pixel_distance(original, adversarial),
        trajectory=session.trajectory,
        final_loss=final_loss,
        applied_moves=len(accepted) + extra_moves,
        accepted_queries=accepted,
    )


def restart_iterative_attack(
    image: ImageTensor,
    goal: AttackGoal,
    oracle: Oracle,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> AttackOutcome:
    """Nested search: each of ``restarts`` rounds evaluates ``iters``
    candidates derived from the round's starting image and commits the
    best strict improvement found."""
    _check_preconditions(image, goal, oracle, cfg)
    if rng is None:
        rng = rng_from_seed(cfg.seed)
    session = _OracleSession(oracle, goal)
    accepted: list[int] = []

    best_loss, met, best_probs = session.query(image)
    if met and cfg.early_stop:
        return _finish(session, image, image, True, best_loss, accepted)

    current = image
    for _ in range(cfg.restarts):
        entry = current
        round_best = entry
        for _ in range(cfg.iters):
            candidate = _propose(entry, cfg, rng)
            if candidate is None:
                continue
            loss, met, probs = session.query(candidate)
            if met and cfg.early_stop:
                return _finish(session, image, candidate, True, loss, accepted, extra_moves=1)
            if loss < best_loss:
                best_loss = loss
                best_probs = probs
                round_best = candidate
                accepted.append(session.queries - 1)
        current = round_best

    return _finish(
        session, image, current, goal_met(best_probs, goal), best_loss, accepted
    )


def iterative_attack(
    image: ImageTensor,
    goal: AttackGoal,
    oracle: Oracle,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> AttackOutcome:
    """Greedy search: the working image absorbs every candidate that
    strictly lowers the loss."""
    _check_preconditions(image, goal, oracle, cfg)
    if rng is None:
        rng = rng_from_seed(cfg.seed)
    session = _OracleSession(oracle, goal)
    accepted: list[int] = []

    best_loss, met, best_probs = session.query(image)
    if met and cfg.early_stop:
        return _finish(session, image, image, True, best_loss, accepted)

    current = image
    for _ in range(cfg.iters):
        candidate = _propose(current, cfg, rng)
        if candidate is None:
            continue
        loss, met, probs = session.query(candidate)
        if met and cfg.early_stop:
            return _finish(session, image, candidate, True, loss, accepted, extra_moves=1)
        if loss < best_loss:
            best_loss = loss
            best_probs = probs
            current = candidate
            accepted.append(session.queries - 1)

    return _finish(
        session, image, current, goal_met(best_probs, goal), best_loss, accepted
    )


def run_attack(
    image: ImageTensor,
    goal: AttackGoal,
    oracle: Oracle,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> AttackOutcome:
    if cfg.algorithm is Algorithm.RESTART_ITERATIVE:
        return restart_iterative_attack(image, goal, oracle, cfg, rng)
    return iterative_attack(image, goal, oracle, cfg, rng)

