"""Ensemble variable selection over random subsets of the covariates.

Each regression instance draws ``k`` of the ``p`` covariates, handles missing
values on that small subset (complete-case rows or one stochastic Gaussian
imputation that includes the response as a column), and runs a base selector.
Variable ``j`` gets the ratio ``r_j = selected_j / appeared_j`` over all
instances that contained it; variables with ``r_j >= r`` are retained.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from .data import CoefficientVector, Dataset, complete_rows
from .errors import (
    DegenerateInputError,
    InstanceDegenerateError,
    NumericalError,
    ValidationError,
)
from .imputation import fit_em, stochastic_impute
from .selectors import InstanceDesign, SelectorConfig, select
from .threshold_cv import ThresholdCvConfig, tune_threshold

log = logging.getLogger(__name__)

MissingPolicy = Literal["complete_case", "impute", "auto"]


@dataclass(frozen=True)
class EnsembleConfig:
    k: int
    B: int
    threshold: float | str = 0.95
    missing_policy: MissingPolicy = "impute"
    auto_complete_min_fraction: float = 0.8
    master_seed: int = 0
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    scheme: Literal["partition", "iid"] = "partition"
    log_instances: bool = False
    threshold_cv: ThresholdCvConfig | None = None
    em_max_iter: int = 200
    em_tol: float = 1e-6
    impute_with_response: bool = True

    def __post_init__(self):
        policy = self.missing_policy.replace("-", "_")
        if policy not in ("complete_case", "impute", "auto"):
            raise ValidationError(f"unknown missing_policy {self.missing_policy!r}")
        object.__setattr__(self, "missing_policy", policy)
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.B < 1:
            raise ValidationError(f"B must be >= 1, got {self.B}")
        if isinstance(self.threshold, str):
            if self.threshold != "cv":
                raise ValidationError(f"threshold must be a number in (0, 1] or 'cv', got {self.threshold!r}")
        elif not 0.0 < float(self.threshold) <= 1.0:
            raise ValidationError(f"threshold must lie in (0, 1], got {self.threshold}")
        if self.scheme not in ("partition", "iid"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if not 0.0 <= self.auto_complete_min_fraction <= 1.0:
            raise ValidationError("auto_complete_min_fraction must lie in [0, 1]")

    def validate_for(self, data: Dataset) -> None:
        if self.k > data.p:
            raise ValidationError(f"k={self.k} exceeds p={data.p}")
        need = self.selector.min_rows(self.k)
        if data.n < need:
            raise ValidationError(
                f"{self.selector.kind} on k={self.k} variables needs n >= {need}, got n={data.n}"
            )
        b_tilde = self.B * self.k / data.p
        if b_tilde < 100:
            warnings.warn(
                f"B*k/p = {b_tilde:.1f} < 100: the standard error of each ratio may exceed 5%",
                stacklevel=3,
            )


@dataclass
class ImportanceTally:
    appeared: np.ndarray
    selected: np.ndarray

    @classmethod
    def zeros(cls, p: int) -> "ImportanceTally":
        return cls(np.zeros(p, dtype=np.int64), np.zeros(p, dtype=np.int64))

    def add(self, subset: np.ndarray, chosen: np.ndarray) -> None:
        self.appeared[subset] += 1
        self.selected[chosen] += 1

    def merge(self, other: "ImportanceTally") -> "ImportanceTally":
        return ImportanceTally(self.appeared + other.appeared, self.selected + other.selected)

    @property
    def ratios(self) -> np.ndarray:
        """``selected / appeared`` with ``0/0 = 0``."""
        with np.errstate(invalid="ignore", divide="ignore"):
            r = self.selected / self.appeared
        return np.where(self.appeared > 0, r, 0.0)


@dataclass
class EnsembleResult:
    tally: ImportanceTally
    ratios: np.ndarray
    selected: np.ndarray
    threshold_used: float
    instances_run: int
    instances_skipped: int = 0
    column_names: tuple = ()
    config: dict = field(default_factory=dict)
    cv_curve: list | None = None
    instance_log: list | None = None

    @property
    def selected_names(self) -> list[str]:
        return [c for c, s in zip(self.column_names, self.selected) if s]

    def to_dict(self) -> dict:
        out = {
            "column_names": list(self.column_names),
            "ratios": [float(r) for r in self.ratios],
            "appeared": self.tally.appeared.tolist(),
            "selected_count": self.tally.selected.tolist(),
            "selected": [bool(s) for s in self.selected],
            "selected_names": self.selected_names,
            "threshold_used": float(self.threshold_used),
            "instances_run": int(self.instances_run),
            "instances_skipped": int(self.instances_skipped),
            "config": self.config,
        }
        if self.cv_curve is not None:
            out["cv_curve"] = [list(map(float, row)) for row in self.cv_curve]
        if self.instance_log is not None:
            out["instance_log"] = self.instance_log
        return out


def _seed(master, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


def _child(seed, i: int) -> np.random.SeedSequence:
    # deterministic sub-stream that does not mutate ``seed``
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,))


def random_partition(p: int, k: int, seed=None) -> list[np.ndarray]:
    """Shuffle ``0..p-1`` and cut it into blocks of ``k`` (the last block holds ``p mod k`` if nonzero)."""
    if not 1 <= k <= p:
        raise ValidationError(f"need 1 <= k <= p, got k={k}, p={p}")
    perm = np.random.default_rng(seed).permutation(p)
    return [perm[i:i + k] for i in range(0, p, k)]


def _instance_plan(p: int, cfg: EnsembleConfig) -> list[tuple[int, int, np.ndarray]]:
    """(partition index, block index, subset) for each of the ``B`` instances."""
    plan = []
    if cfg.scheme == "iid":
        for b in range(cfg.B):
            rng = np.random.default_rng(_seed(cfg.master_seed, b))
            plan.append((b, 0, rng.choice(p, size=cfg.k, replace=False)))
        return plan
    pi = 0
    while len(plan) < cfg.B:
        for bi, block in enumerate(random_partition(p, cfg.k, _seed(cfg.master_seed, pi))):
            if len(plan) == cfg.B:
                break
            plan.append((pi, bi, block))
        pi += 1
    return plan


def instance_design(data: Dataset, subset, cfg: EnsembleConfig, instance_seed=None):
    """Apply the missing-data policy to ``subset``; returns the design and the policy actually used."""
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise ValidationError("empty subset")
    sub_mask = data.mask[:, subset]
    if not sub_mask.any():
        return InstanceDesign(data.x[:, subset], data.y, tuple(subset.tolist())), "none"

    policy = cfg.missing_policy
    rows = complete_rows(data, subset)
    if policy == "auto":
        policy = "complete_case" if len(rows) / data.n >= cfg.auto_complete_min_fraction else "impute"

    if policy == "complete_case":
        need = cfg.selector.min_rows(subset.size)
        if len(rows) < need:
            raise InstanceDegenerateError(
                f"{len(rows)} complete rows on subset, {cfg.selector.kind} needs {need}"
            )
        return InstanceDesign(data.x[np.ix_(rows, subset)], data.y[rows], tuple(subset.tolist())), policy

    values, mask = data.x[:, subset], sub_mask
    if cfg.impute_with_response:
        values = np.column_stack([values, data.y])
        mask = np.column_stack([mask, np.zeros(data.n, dtype=bool)])
    try:
        fit = fit_em(values, mask, max_iter=cfg.em_max_iter, tol=cfg.em_tol)
        filled = stochastic_impute(values, mask, fit, seed=_child(instance_seed, 0))
    except (DegenerateInputError, NumericalError) as exc:
        raise InstanceDegenerateError(f"imputation failed: {exc}") from exc
    return InstanceDesign(filled[:, :subset.size], data.y, tuple(subset.tolist())), policy


def run_instance(data: Dataset, subset, cfg: EnsembleConfig, instance_seed=None) -> np.ndarray:
    """Positions (relative to ``subset``) of the variables the base selector retains."""
    design, _ = instance_design(data, subset, cfg, instance_seed)
    try:
        chosen = select(design, cfg.selector, _child(instance_seed, 1))
    except (DegenerateInputError, NumericalError) as exc:
        raise InstanceDegenerateError(str(exc)) from exc
    return np.flatnonzero(chosen)


def _run_chunk(data: Dataset, cfg: EnsembleConfig, chunk):
    out = []
    for pi, bi, subset in chunk:
        try:
            design, policy = instance_design(data, subset, cfg, _seed(cfg.master_seed, pi, bi))
            chosen = np.flatnonzero(select(design, cfg.selector, _child(_seed(cfg.master_seed, pi, bi), 1)))
            out.append((chosen, policy, None))
        except (DegenerateInputError, NumericalError) as exc:
            out.append((None, cfg.missing_policy, str(exc)))
    return out


_WORKER_STATE: dict = {}


def _init_worker(data, cfg):
    _WORKER_STATE["data"] = data
    _WORKER_STATE["cfg"] = cfg


def _run_chunk_worker(chunk):
    return _run_chunk(_WORKER_STATE["data"], _WORKER_STATE["cfg"], chunk)


def _canonical_plan(data: Dataset, cfg: EnsembleConfig):
    # subsets are drawn over columns ordered by name so that results do not depend on column order
    order = np.array(sorted(range(data.p), key=lambda j: (data.column_names[j], j)))
    plan = []
    for pi, bi, block in _instance_plan(data.p, cfg):
        cols = order[np.sort(block)]
        plan.append((pi, bi, cols))
    return plan


def run_ensemble(data: Dataset, cfg: EnsembleConfig, n_jobs: int = 1) -> EnsembleResult:
    """Run ``cfg.B`` regression instances and aggregate them into selection ratios.

    The result depends only on ``(data, cfg)``: instance seeds are derived from
    ``(master_seed, partition index, block index)`` and the tally is a sum, so
    ``n_jobs`` has no effect on the output.
    """
    cfg.validate_for(data)
    plan = _canonical_plan(data, cfg)
    if n_jobs is None or n_jobs < 1:
        n_jobs = 1
    if n_jobs == 1 or len(plan) < 2 * n_jobs:
        outcomes = _run_chunk(data, cfg, plan)
    else:
        size = math.ceil(len(plan) / (4 * n_jobs))
        chunks = [plan[i:i + size] for i in range(0, len(plan), size)]
        with ProcessPoolExecutor(n_jobs, initializer=_init_worker, initargs=(data, cfg)) as pool:
            outcomes = [o for part in pool.map(_run_chunk_worker, chunks) for o in part]

    tally = ImportanceTally.zeros(data.p)
    skipped = 0
    inst_log = [] if cfg.log_instances else None
    for (pi, bi, subset), (chosen, policy, err) in zip(plan, outcomes):
        if chosen is None:
            skipped += 1
        else:
            tally.add(subset, subset[chosen])
        if inst_log is not None:
            inst_log.append({
                "partition": int(pi),
                "block": int(bi),
                "subset": subset.tolist(),
                "selected": None if chosen is None else subset[chosen].tolist(),
                "missing_policy": policy,
                "error": err,
            })
    if skipped > 0.5 * len(plan):
        raise DegenerateInputError(
            f"{skipped} of {len(plan)} instances were degenerate; data too incomplete for "
            f"missing_policy={cfg.missing_policy!r} (try 'impute')"
        )
    if skipped:
        log.warning("%d of %d instances skipped as degenerate", skipped, len(plan))

    ratios = tally.ratios
    cv_curve = None
    if cfg.threshold == "cv":
        cv_cfg = cfg.threshold_cv or ThresholdCvConfig(seed=cfg.master_seed)
        threshold, cv_curve = tune_threshold(data, ratios, cv_cfg)
    else:
        threshold = float(cfg.threshold)

    return EnsembleResult(
        tally=tally,
        ratios=ratios,
        selected=ratios >= threshold,
        threshold_used=threshold,
        instances_run=len(plan) - skipped,
        instances_skipped=skipped,
        column_names=data.column_names,
        config=config_echo(cfg),
        cv_curve=cv_curve,
        instance_log=inst_log,
    )


def config_echo(cfg: EnsembleConfig) -> dict:
    return asdict(cfg)


def expected_instance_bias(x_full, beta: CoefficientVector | Sequence[float], subset, sigma2: float = 1.0):
    """Bias and covariance of the no-intercept OLS fit restricted to ``subset``.

    With ``E[y] = intercept + X beta``, the estimate on columns ``S`` has mean
    ``inv(X_S'X_S) X_S' E[y]``; the bias is that minus ``beta_S``, which for a
    zero intercept reduces to ``inv(X_S'X_S) X_S' X_{-S} beta_{-S}``. The
    covariance is ``sigma2 * inv(X_S'X_S)``.
    """
    x = np.asarray(x_full, dtype=float)
    if not isinstance(beta, CoefficientVector):
        beta = CoefficientVector(np.asarray(beta, dtype=float))
    if len(beta) != x.shape[1]:
        raise ValidationError(f"beta has length {len(beta)}, design has {x.shape[1]} columns")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x_full must be complete")
    s = np.asarray(list(subset), dtype=int)
    xs = x[:, s]
    gram = xs.T @ xs
    try:
        c = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise NumericalError("subset Gram matrix is singular") from None
    if np.min(np.diag(c)) ** 2 < 1e-12 * np.max(np.diag(gram)):
        raise NumericalError("subset Gram matrix is singular")
    inv = np.linalg.inv(gram)
    mean_y = x @ beta.beta + beta.intercept
    bias = inv @ (xs.T @ mean_y) - beta.beta[s]
    return bias, sigma2 * inv
