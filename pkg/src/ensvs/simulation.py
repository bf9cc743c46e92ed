"""Synthetic compound-symmetry designs, MCAR/MAR masking, and the experiment runner."""

from __future__ import annotations

import csv
import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import optimize, stats

from .data import Dataset, complete_rows
from .ensemble import EnsembleConfig, run_ensemble
from .errors import DegenerateInputError, NumericalError, ValidationError
from .selectors import InstanceDesign, SelectorConfig, select
from .threshold_cv import ThresholdCvConfig, tune_threshold

log = logging.getLogger(__name__)

Mechanism = Literal["none", "mcar", "mar"]


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 200
    p: int = 100
    rho: float = 0.0
    snr: float = 4.0
    s: int = 8
    mechanism: Mechanism = "none"
    missing_rate: float = 0.2

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValidationError("n and p must be positive")
        if not 0 <= self.s <= self.p:
            raise ValidationError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if not -1.0 < self.rho < 1.0 or (self.p > 1 and self.rho <= -1.0 / (self.p - 1)):
            raise ValidationError(f"rho={self.rho} does not give a valid compound-symmetry covariance")
        if not self.snr > 0:
            raise ValidationError("snr must be positive")
        if self.mechanism not in ("none", "mcar", "mar"):
            raise ValidationError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValidationError("missing_rate must lie in [0, 1)")
        if self.mechanism == "mar" and self.missing_rate == 0.0:
            raise ValidationError("MAR needs a positive missing_rate")


def coefficient_value(cfg: SimulationConfig) -> float:
    """Common nonzero coefficient giving ``Var(X beta) = snr / (snr + 1)`` and hence ``Var(Y) = 1``."""
    s = cfg.s
    if s == 0:
        return 0.0
    return float(np.sqrt(cfg.snr / ((cfg.snr + 1.0) * (s + s * (s - 1) * cfg.rho))))


def noise_variance(cfg: SimulationConfig) -> float:
    return 1.0 / (cfg.snr + 1.0)


def compound_symmetry(p: int, rho: float) -> np.ndarray:
    return np.full((p, p), rho) + (1.0 - rho) * np.eye(p)


def generate_dataset(cfg: SimulationConfig, replicate_seed=None) -> tuple[Dataset, np.ndarray]:
    """Draw a complete dataset; the nonzero coefficients sit on the first ``s`` columns."""
    rng = np.random.default_rng(replicate_seed)
    L = np.linalg.cholesky(compound_symmetry(cfg.p, cfg.rho))
    x = rng.standard_normal((cfg.n, cfg.p)) @ L.T
    beta = np.zeros(cfg.p)
    beta[: cfg.s] = coefficient_value(cfg)
    y = x @ beta + np.sqrt(noise_variance(cfg)) * rng.standard_normal(cfg.n)
    return Dataset(x, y), np.arange(cfg.s)


def apply_mcar(d: Dataset, rate: float, seed=None) -> Dataset:
    """Mask each covariate cell independently with probability ``rate``."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError("rate must lie in [0, 1)")
    if rate == 0.0:
        return d
    mask = np.random.default_rng(seed).random((d.n, d.p)) < rate
    return d.with_mask(mask)


def mar_offset(target_rate: float, y_var: float = 1.0) -> float:
    """``a`` with ``E[Phi(a + Y)] = target_rate`` for ``Y ~ N(0, y_var)``: ``sqrt(1 + y_var) * Phi^-1(rate)``."""
    return float(np.sqrt(1.0 + y_var) * stats.norm.ppf(target_rate))


def mar_offset_empirical(target_rate: float, y: np.ndarray) -> float:
    """``a`` with ``mean(Phi(a + y_i)) = target_rate`` for the observed responses."""
    y = np.asarray(y, dtype=float)
    f = lambda a: stats.norm.cdf(a + y).mean() - target_rate
    lo, hi = -10.0 - y.max(), 10.0 - y.min()
    return float(optimize.brentq(f, lo, hi, xtol=1e-12))


def apply_mar(d: Dataset, target_rate: float, seed=None, calibration: Literal["normal", "empirical"] = "normal",
              y_var: float = 1.0) -> Dataset:
    """Mask every cell of row ``i`` independently with probability ``Phi(a + y_i)``.

    ``calibration='normal'`` solves for ``a`` in closed form assuming
    ``Y ~ N(0, y_var)``; ``'empirical'`` root-finds on the observed responses.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValidationError("target_rate must lie in (0, 1)")
    if calibration == "normal":
        a = mar_offset(target_rate, y_var)
    elif calibration == "empirical":
        a = mar_offset_empirical(target_rate, d.y)
    else:
        raise ValidationError(f"unknown calibration {calibration!r}")
    prob = stats.norm.cdf(a + d.y)
    mask = np.random.default_rng(seed).random((d.n, d.p)) < prob[:, None]
    return d.with_mask(mask)


def apply_mechanism(d: Dataset, cfg: SimulationConfig, seed=None) -> Dataset:
    if cfg.mechanism == "mcar":
        return apply_mcar(d, cfg.missing_rate, seed)
    if cfg.mechanism == "mar":
        return apply_mar(d, cfg.missing_rate, seed)
    return d


@dataclass
class ReplicateMetrics:
    tp: int
    fn: int
    fp: int
    selected_set: list = field(default_factory=list)
    runtime: float = 0.0


def score(selected, true_support, runtime: float = 0.0) -> ReplicateMetrics:
    """TP/FN/FP of a boolean selection mask against the index set of true signals."""
    selected = np.asarray(selected, dtype=bool)
    support = np.zeros(selected.size, dtype=bool)
    support[np.asarray(list(true_support), dtype=int)] = True
    tp = int(np.sum(selected & support))
    return ReplicateMetrics(
        tp=tp,
        fn=int(support.sum()) - tp,
        fp=int(np.sum(selected & ~support)),
        selected_set=np.flatnonzero(selected).tolist(),
        runtime=runtime,
    )


# --------------------------------------------------------------------------- methods


@dataclass(frozen=True)
class MethodSpec:
    """One method column of the experiment.

    ``variant='algorithm'`` runs the ensemble with ``k``, ``B`` and ``threshold``
    (a number or ``'cv'``); ``variant='standard'`` applies the selector once to the
    full data (complete-case rows when values are missing).
    """

    variant: Literal["algorithm", "standard"]
    selector: Literal["lasso", "stepwise", "knockoff"]
    k: int | None = None
    B: int | None = None
    threshold: float | str = 0.95
    missing_policy: str = "impute"
    lasso_rule: str = "min"
    knockoff_plus: bool = False
    knockoff_fdr_q: float = 0.10

    def __post_init__(self):
        if self.variant not in ("algorithm", "standard"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.selector not in ("lasso", "stepwise", "knockoff"):
            raise ValidationError(f"unknown selector {self.selector!r}")
        if self.variant == "algorithm" and (self.k is None or self.B is None):
            raise ValidationError("algorithm methods need k and B")

    def selector_config(self) -> SelectorConfig:
        return SelectorConfig(
            kind=self.selector,
            lasso_rule=self.lasso_rule,
            knockoff_plus=self.knockoff_plus,
            knockoff_fdr_q=self.knockoff_fdr_q,
        )

    @property
    def threshold_label(self) -> str:
        if self.variant == "standard":
            return ""
        return "cv" if self.threshold == "cv" else repr(float(self.threshold))

    @property
    def options(self) -> str:
        """Selector and missing-data options that distinguish otherwise equal methods."""
        parts = []
        if self.selector == "lasso":
            parts.append(f"rule={self.lasso_rule}")
        elif self.selector == "knockoff":
            parts.append(f"q={self.knockoff_fdr_q:g}")
            parts.append(f"plus={int(self.knockoff_plus)}")
        if self.variant == "algorithm":
            parts.append(f"missing={self.missing_policy}")
        return ";".join(parts)

    def ensemble_key(self) -> tuple:
        # methods differing only in the threshold share one ensemble run
        return (self.selector, self.k, self.B, self.missing_policy, self.lasso_rule,
                self.knockoff_plus, self.knockoff_fdr_q)


def _stable_hash(*parts) -> int:
    return zlib.crc32("|".join(map(str, parts)).encode())


def run_standard(data: Dataset, method: MethodSpec, seed=None) -> np.ndarray:
    """Apply the selector once to the whole dataset (complete-case rows if incomplete).

    Raises DegenerateInputError when the baseline is infeasible: too few complete
    rows, stepwise with p >= n - 2 on incomplete data, or fixed-X knockoff with n < 2p.
    """
    cfg = method.selector_config()
    rows = complete_rows(data)
    x, y = data.x[rows], data.y[rows]
    n, p = x.shape
    columns = np.arange(p)
    if cfg.kind == "stepwise_aic" and n <= p + 2:
        if not data.is_complete:
            raise DegenerateInputError(f"stepwise on {n} complete rows with p={p}")
        # high-dimensional: screen to the n/2 columns most correlated with y
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        corr = np.abs(xc.T @ yc) / np.maximum(np.sqrt((xc ** 2).sum(axis=0) * (yc @ yc)), 1e-300)
        columns = np.sort(np.argsort(-corr, kind="stable")[: n // 2])
    elif cfg.kind == "knockoff_fixed_x" and n < 2 * p:
        if data.is_complete:
            raise DegenerateInputError("not applicable: fixed-X knockoff needs n >= 2p")
        raise DegenerateInputError(f"fixed-X knockoff on {n} complete rows needs >= {2 * p}")
    elif cfg.kind == "lasso" and n < max(cfg.lasso_cv_folds, 3):
        raise DegenerateInputError(f"lasso CV on {n} complete rows")
    try:
        chosen = select(InstanceDesign(x[:, columns], y), cfg, seed)
    except NumericalError as exc:
        raise DegenerateInputError(str(exc)) from exc
    out = np.zeros(p, dtype=bool)
    out[columns[chosen]] = True
    return out


RESULT_COLUMNS = [
    "rho", "snr", "mechanism", "method", "variant", "options", "threshold", "k", "B", "n", "p",
    "replicate", "tp", "fn", "fp", "status", "chosen_threshold", "missing_rate",
]
TIMING_COLUMNS = ["rho", "snr", "mechanism", "method", "variant", "options", "threshold", "k", "B", "n", "p",
                  "replicate", "runtime_s"]


def _run_cell(task):
    """All methods on one (simulation config, replicate) dataset."""
    sim, methods, replicate, master_seed = task
    base = np.random.SeedSequence(int(master_seed), spawn_key=(replicate,))
    data_seed = np.random.SeedSequence(base.entropy, spawn_key=(replicate, 0))
    mask_seed = np.random.SeedSequence(base.entropy, spawn_key=(replicate, 1))
    data, support = generate_dataset(sim, data_seed)
    data = apply_mechanism(data, sim, mask_seed)
    miss = data.missing_fraction

    rows, timings = [], []
    ensembles: dict = {}
    for method in methods:
        common = {
            "rho": sim.rho, "snr": sim.snr, "mechanism": sim.mechanism,
            "method": method.selector, "variant": method.variant, "options": method.options,
            "threshold": method.threshold_label,
            "k": "" if method.k is None else method.k, "B": "" if method.B is None else method.B,
            "n": sim.n, "p": sim.p, "replicate": replicate,
        }
        t0 = time.perf_counter()
        chosen_threshold = ""
        try:
            if method.variant == "standard":
                seed = int(_stable_hash(master_seed, replicate, "standard", method.selector, method.options))
                selected = run_standard(data, method, seed)
            else:
                key = method.ensemble_key()
                if key not in ensembles:
                    ens_seed = _stable_hash(master_seed, replicate, *key)
                    cfg = EnsembleConfig(
                        k=method.k, B=method.B, threshold=1.0, missing_policy=method.missing_policy,
                        master_seed=ens_seed, selector=method.selector_config(),
                    )
                    ensembles[key] = run_ensemble(data, cfg)
                ratios = ensembles[key].ratios
                if method.threshold == "cv":
                    cv_seed = _stable_hash(master_seed, replicate, "cv", *key)
                    thr, _ = tune_threshold(data, ratios, ThresholdCvConfig(seed=cv_seed))
                else:
                    thr = float(method.threshold)
                chosen_threshold = repr(float(thr))
                selected = ratios >= thr
            m = score(selected, support)
            row = {**common, "tp": m.tp, "fn": m.fn, "fp": m.fp, "status": "ok"}
        except (DegenerateInputError, NumericalError) as exc:
            status = "na" if str(exc).startswith("not applicable") else "failed"
            log.debug("replicate %d %s/%s: %s", replicate, method.variant, method.selector, exc)
            row = {**common, "tp": "", "fn": "", "fp": "", "status": status}
        row["chosen_threshold"] = chosen_threshold
        row["missing_rate"] = repr(float(miss))
        rows.append(row)
        timings.append({**common, "runtime_s": f"{time.perf_counter() - t0:.6f}"})
    return rows, timings


@dataclass
class ExperimentResults:
    rows: list
    timings: list

    def aggregate(self) -> dict:
        return aggregate(self.rows)

    def write(self, out_dir: str | Path) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out / "results.csv",
            "timings": out / "timings.csv",
            "aggregate": out / "aggregate.json",
        }
        write_csv(paths["results"], self.rows, RESULT_COLUMNS)
        write_csv(paths["timings"], self.timings, TIMING_COLUMNS)
        with paths["aggregate"].open("w", encoding="utf-8") as fh:
            json.dump(self.aggregate(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return {k: str(v) for k, v in paths.items()}


def write_csv(path, rows: Iterable[dict], columns: Sequence[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


GROUP_KEYS = ("rho", "snr", "mechanism", "method", "variant", "options", "threshold", "k", "B", "n", "p")


def aggregate(rows: Sequence[dict]) -> dict:
    """Means and standard deviations of TP/FN/FP per grid cell, plus empirical missing rates."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in GROUP_KEYS), []).append(r)
    cells = []
    for key, members in groups.items():
        ok = [r for r in members if r["status"] == "ok"]
        cell = dict(zip(GROUP_KEYS, key))
        cell["replicates"] = len(members)
        cell["ok"] = len(ok)
        cell["failed"] = len(members) - len(ok)
        for metric in ("tp", "fn", "fp"):
            vals = np.array([float(r[metric]) for r in ok])
            cell[f"mean_{metric}"] = float(vals.mean()) if vals.size else None
            cell[f"sd_{metric}"] = float(vals.std(ddof=1)) if vals.size > 1 else None
        thr = [float(r["chosen_threshold"]) for r in ok if r["chosen_threshold"] != ""]
        if thr:
            cell["median_chosen_threshold"] = float(np.median(thr))
        cells.append(cell)

    rates: dict = {}
    for r in rows:
        rates.setdefault((r["rho"], r["snr"], r["mechanism"], r["n"], r["p"]), {})[r["replicate"]] = float(r["missing_rate"])
    missing = [
        {"rho": k[0], "snr": k[1], "mechanism": k[2], "n": k[3], "p": k[4],
         "empirical_missing_rate": float(np.mean(list(v.values())))}
        for k, v in rates.items()
    ]
    return {"cells": cells, "missing_rates": missing}


def run_experiment(grid: Sequence[tuple[SimulationConfig, MethodSpec]], T: int, master_seed: int = 0,
                   n_jobs: int = 1) -> ExperimentResults:
    """Run every (simulation config, method) pair on ``T`` replicate datasets.

    Replicate ``t`` of a configuration uses the same dataset for every method.
    Infeasible baselines are recorded with ``status='failed'`` (or ``'na'`` when
    the method does not apply to the setting) and empty counts. Output is
    identical for any ``n_jobs``.
    """
    if T < 1:
        raise ValidationError("T must be >= 1")
    by_sim: dict = {}
    for sim, method in grid:
        by_sim.setdefault(sim, []).append(method)
    tasks = [(sim, tuple(methods), t, master_seed) for sim, methods in by_sim.items() for t in range(T)]

    if n_jobs is None or n_jobs <= 1 or len(tasks) == 1:
        outputs = []
        for i, task in enumerate(tasks):
            outputs.append(_run_cell(task))
            log.info("cell %d/%d done", i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(n_jobs) as pool:
            outputs = list(pool.map(_run_cell, tasks))
    rows = [r for o in outputs for r in o[0]]
    timings = [r for o in outputs for r in o[1]]
    return ExperimentResults(rows, timings)


PRESETS = {
    "low": {"n": 200, "p": 100, "k": 6},
    "high": {"n": 200, "p": 300, "k": 10},
}


def preset_grid(preset: str = "low", mechanism: Mechanism = "none", rate: float = 0.2,
                selectors: Sequence[str] = ("lasso", "stepwise", "knockoff"),
                variants: Sequence[str] = ("algorithm", "standard"),
                ks: Sequence[int] | None = None, Bs: Sequence[int] = (6000,),
                thresholds: Sequence = (0.95,), rhos: Sequence[float] = (0.0, 0.4),
                snrs: Sequence[float] = (2.0, 4.0), s: int = 8, n: int | None = None,
                p: int | None = None) -> list[tuple[SimulationConfig, MethodSpec]]:
    """Grid of the standard study design: rho in {0, 0.4}, snr in {2, 4}, n = 200, s = 8."""
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}")
    base = PRESETS[preset]
    n = n or base["n"]
    p = p or base["p"]
    ks = tuple(ks) if ks else (base["k"],)
    grid = []
    for rho in rhos:
        for snr in snrs:
            sim = SimulationConfig(n=n, p=p, rho=rho, snr=snr, s=s, mechanism=mechanism,
                                   missing_rate=rate if mechanism != "none" else 0.0)
            for sel in selectors:
                if "algorithm" in variants:
                    for k in ks:
                        for B in Bs:
                            for thr in thresholds:
                                grid.append((sim, MethodSpec("algorithm", sel, k=k, B=B, threshold=thr)))
                if "standard" in variants:
                    grid.append((sim, MethodSpec("standard", sel)))
    return grid
