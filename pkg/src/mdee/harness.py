"""Config-driven experiment runner: trials, regrets, aggregation, CSV output.

One trial fixes a data split, fits a single model path, evaluates every
requested criterion on that shared path, selects a model size per criterion
and scores it by regret against the shared per-size test errors. Trials are
reproducible from (master_seed, cell index, trial index) alone, so two runs
of the same config produce byte-identical output files.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import baselines, datagen, estimators, ingest
from .core import (
    DEFAULT_RIDGE,
    BasisSpec,
    FittedModel,
    LabeledSet,
    SingularDesignError,
    UnlabeledSet,
    block_partition,
    fit_model_path,
    predict,
)

DEE_FAMILY = {k.value for k in estimators.CriterionKind}
BASELINE_FAMILY = {k.value for k in baselines.BaselineKind}
ALL_CRITERIA = DEE_FAMILY | BASELINE_FAMILY

BLOCK_CRITERIA = {"mDEE1", "mDEE2", "mDEE3", "rmDEE"}

# Candidate-count rule for the synthetic protocol; other n need an explicit
# d_max in the config.
SYNTHETIC_DBAR = {10: 8, 20: 15, 50: 23}

SYNTHETIC_CAVEAT = (
    "synthetic covariate_var is a free choice of this harness; regret "
    "medians depend on it, so only orderings between criteria are comparable "
    "across implementations"
)


@dataclass
class SyntheticScenario:
    target: str
    n_values: list[int]
    noise_vars: list[float]
    covariate_var: float = 1.0
    n_unlabeled: int = 1500
    n_test: int = 1000

    def cells(self) -> list[dict]:
        return [
            {"target": self.target, "n": n, "noise_var": nv}
            for n in self.n_values
            for nv in self.noise_vars
        ]


@dataclass
class RealScenario:
    manifest: ingest.DatasetManifest
    n_values: list[int]
    n_unlabeled: int
    standardize: bool = True

    def cells(self) -> list[dict]:
        return [{"dataset": self.manifest.name, "n": n} for n in self.n_values]


@dataclass
class ExperimentConfig:
    scenario: SyntheticScenario | RealScenario
    criteria: list[str]
    repetitions: int
    d_max: int | None = None
    ridge: float = DEFAULT_RIDGE
    master_seed: int = 0
    output_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.criteria:
            raise ValueError("criteria must be nonempty")
        unknown = [c for c in self.criteria if c not in ALL_CRITERIA]
        if unknown:
            raise ValueError(f"unknown criteria {unknown}; valid: {sorted(ALL_CRITERIA)}")


@dataclass
class TrialResult:
    trial: int
    cell: dict
    d_hat: dict[str, int]
    regret: dict[str, float]
    test_errors: list[float]
    flags: dict[str, str] = field(default_factory=dict)
    b1_used: int | None = None


@dataclass
class CriterionSummary:
    cell: dict
    criterion: str
    median: float
    iqr: float
    n_trials: int


def test_error(model: FittedModel, test: LabeledSet, basis: BasisSpec) -> float:
    """Mean squared prediction error on the test set."""
    resid = test.y - predict(basis, test.X, model.alpha)
    return float(resid @ resid / test.n)


def regret(test_errors, chosen: int) -> float:
    """Log ratio of the chosen model's test error to the best one."""
    errors = np.asarray(test_errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("regret undefined: nonpositive test error (degenerate case)")
    return float(np.log(errors[chosen - 1] / errors.min()))


def aggregate(regrets) -> tuple[float, float]:
    """Median and interquartile range (linear-interpolation quantiles)."""
    values = np.asarray(regrets, dtype=float)
    if values.size == 0:
        raise ValueError("aggregate needs at least one value")
    q1, q3 = np.quantile(values, [0.25, 0.75])
    return float(np.median(values)), float(q3 - q1)


def _seed_int(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _auto_d_max(cfg: ExperimentConfig, n: int, m: int) -> int:
    if cfg.d_max is not None:
        return cfg.d_max
    if isinstance(cfg.scenario, RealScenario):
        return ingest.dbar_for(n, m)
    if n in SYNTHETIC_DBAR:
        return SYNTHETIC_DBAR[n]
    raise ValueError(
        f"no automatic candidate-count rule for synthetic n={n}; set d_max explicitly"
    )


def _criterion_risks(
    name: str,
    path,
    train: LabeledSet,
    unlabeled: UnlabeledSet,
    blocks,
    b1: int | None,
    cfg: ExperimentConfig,
    cv_seed: int,
) -> tuple[list[float], list[str]]:
    """Per-d risk values for one criterion; failures become +inf sentinels."""
    risks = []
    tokens = []
    for d in range(1, path.d_max + 1):
        try:
            if name == "DEE":
                risks.append(estimators.dee(path, train.X, unlabeled, d, cfg.ridge).risk)
            elif name in ("mDEE1", "mDEE2", "mDEE3"):
                variant = estimators.CriterionKind(name)
                est = estimators.mdee(path, blocks, variant, b1, d, cfg.ridge)
                if est.flagged_blocks:
                    tokens.append(f"cond@d{d}={len(est.flagged_blocks)}")
                risks.append(est.risk)
            elif name == "rmDEE":
                est = estimators.rmdee(path, blocks, train.X, d, cfg.ridge)
                if est.flagged_blocks:
                    tokens.append(f"cond@d{d}={len(est.flagged_blocks)}")
                risks.append(est.risk)
            elif name == "FPE":
                risks.append(baselines.fpe(path.train_loss(d), train.n, d))
            elif name == "cAIC":
                risks.append(baselines.caic(path.train_loss(d), train.n, d))
            elif name == "CV5":
                risks.append(
                    baselines.kfold_cv(train, path.basis, d, 5, cfg.ridge, cv_seed)
                )
            elif name == "ADJ":
                risks.append(baselines.adj(path, train.X, unlabeled, d))
            else:  # pragma: no cover - validated in config
                raise ValueError(f"unknown criterion {name}")
        except (SingularDesignError, ValueError):
            risks.append(math.inf)
            tokens.append(f"inf@d{d}")
    return risks, tokens


def evaluate_trial(
    trial: int,
    cell: dict,
    train: LabeledSet,
    unlabeled: UnlabeledSet,
    test: LabeledSet,
    d_max: int,
    cfg: ExperimentConfig,
    cv_seed: int,
) -> TrialResult:
    """Score every requested criterion on one shared data split."""
    basis = BasisSpec("fourier", train.X.shape[1])
    path = fit_model_path(train, basis, d_max, cfg.ridge)
    errors = [test_error(m, test, basis) for m in path.models]

    blocks = None
    b1 = None
    block_flags: list[str] = []
    if BLOCK_CRITERIA & set(cfg.criteria):
        try:
            blocks = block_partition(unlabeled, train.n)
        except ValueError:
            block_flags.append("no_blocks")
        if blocks is not None and {"mDEE1", "mDEE2"} & set(cfg.criteria):
            if blocks.n_blocks >= 2:
                b1, _ = estimators.select_b1(blocks, basis, d_max, cfg.ridge)
            else:
                block_flags.append("b1_unavailable")

    d_hat: dict[str, int] = {}
    regrets: dict[str, float] = {}
    flags: dict[str, str] = {}
    for name in cfg.criteria:
        tokens = list(block_flags) if name in BLOCK_CRITERIA else []
        if name in BLOCK_CRITERIA and blocks is None:
            risks = [math.inf] * d_max
        elif name in ("mDEE1", "mDEE2") and b1 is None:
            risks = [math.inf] * d_max
        else:
            risks, risk_tokens = _criterion_risks(
                name, path, train, unlabeled, blocks, b1, cfg, cv_seed
            )
            tokens.extend(risk_tokens)
        if all(math.isinf(r) for r in risks):
            tokens.append("all_infinite")
        if name in ("mDEE1", "mDEE2") and b1 is not None:
            tokens.append(f"b1={b1}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            chosen = estimators.select_model(risks)
        d_hat[name] = chosen
        try:
            regrets[name] = regret(errors, chosen)
        except ValueError:
            regrets[name] = math.nan
            tokens.append("degenerate_regret")
        flags[name] = ";".join(tokens)
    return TrialResult(
        trial=trial,
        cell=cell,
        d_hat=d_hat,
        regret=regrets,
        test_errors=errors,
        flags=flags,
        b1_used=b1,
    )


def _synthetic_trial(cfg, cell, cell_idx, trial) -> TrialResult:
    scen: SyntheticScenario = cfg.scenario
    data_cfg = datagen.SyntheticConfig(
        target=scen.target,
        n=cell["n"],
        n_prime=scen.n_unlabeled,
        n_test=scen.n_test,
        noise_var=cell["noise_var"],
        covariate_var=scen.covariate_var,
        seed=_seed_int(cfg.master_seed, cell_idx, trial, 0),
    )
    train, unlabeled, test = datagen.generate(data_cfg)
    d_max = _auto_d_max(cfg, cell["n"], 1)
    cv_seed = _seed_int(cfg.master_seed, cell_idx, trial, 1)
    return evaluate_trial(trial, cell, train, unlabeled, test, d_max, cfg, cv_seed)


def _real_trial(cfg, table, cell, cell_idx, trial) -> TrialResult:
    scen: RealScenario = cfg.scenario
    spec = ingest.SplitSpec(
        n=cell["n"],
        n_prime=scen.n_unlabeled,
        seed=_seed_int(cfg.master_seed, cell_idx, trial, 0),
        standardize=scen.standardize,
    )
    train, unlabeled, test = ingest.split(table, spec)
    d_max = _auto_d_max(cfg, cell["n"], train.X.shape[1])
    cv_seed = _seed_int(cfg.master_seed, cell_idx, trial, 1)
    return evaluate_trial(trial, cell, train, unlabeled, test, d_max, cfg, cv_seed)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[TrialResult], list[CriterionSummary]]:
    """Run every (grid cell, repetition) pair and aggregate per criterion.

    Trials own independent seed streams, so any execution order (including
    threaded) yields the same results; aggregation folds over trial index.
    """
    table = None
    if isinstance(cfg.scenario, RealScenario):
        table = ingest.load_csv(cfg.scenario.manifest)

    trials: list[TrialResult] = []
    summaries: list[CriterionSummary] = []
    for cell_idx, cell in enumerate(cfg.scenario.cells()):
        if table is None:
            runner = lambda t: _synthetic_trial(cfg, cell, cell_idx, t)
        else:
            runner = lambda t: _real_trial(cfg, table, cell, cell_idx, t)
        indices = range(cfg.repetitions)
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                cell_trials = list(pool.map(runner, indices))
        else:
            cell_trials = [runner(t) for t in indices]
        trials.extend(cell_trials)
        for name in cfg.criteria:
            median, iqr = aggregate([t.regret[name] for t in cell_trials])
            summaries.append(
                CriterionSummary(
                    cell=cell,
                    criterion=name,
                    median=median,
                    iqr=iqr,
                    n_trials=len(cell_trials),
                )
            )
    return trials, summaries


# ---------------------------------------------------------------------------
# Output files


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _cell_keys(cell: dict) -> list[str]:
    return list(cell.keys())


def write_summary_csv(path, summaries: list[CriterionSummary]) -> None:
    keys = _cell_keys(summaries[0].cell)
    lines = [",".join(keys + ["criterion", "median", "iqr", "n_trials"])]
    for s in summaries:
        row = [_fmt(s.cell[k]) for k in keys]
        row += [s.criterion, _fmt(s.median), _fmt(s.iqr), str(s.n_trials)]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_trials_csv(path, trials: list[TrialResult], criteria: list[str]) -> None:
    keys = _cell_keys(trials[0].cell)
    lines = [",".join(keys + ["trial", "criterion", "d_hat", "regret", "flags"])]
    for t in trials:
        prefix = [_fmt(t.cell[k]) for k in keys]
        for name in criteria:
            row = prefix + [
                str(t.trial),
                name,
                str(t.d_hat[name]),
                _fmt(t.regret[name]),
                t.flags.get(name, ""),
            ]
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def run_to_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Run an experiment and write summary.csv, trials.csv and meta.json."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials, summaries = run_experiment(cfg)
    write_summary_csv(out / "summary.csv", summaries)
    write_trials_csv(out / "trials.csv", trials, cfg.criteria)
    meta = {
        "criteria": cfg.criteria,
        "repetitions": cfg.repetitions,
        "master_seed": cfg.master_seed,
        "ridge": cfg.ridge,
        "d_max": cfg.d_max,
        "scenario": _scenario_dict(cfg.scenario),
    }
    if isinstance(cfg.scenario, SyntheticScenario):
        meta["caveat"] = SYNTHETIC_CAVEAT
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def _scenario_dict(scenario) -> dict:
    if isinstance(scenario, SyntheticScenario):
        return {
            "kind": "synthetic",
            "target": scenario.target,
            "n": scenario.n_values,
            "noise_var": scenario.noise_vars,
            "covariate_var": scenario.covariate_var,
            "n_unlabeled": scenario.n_unlabeled,
            "n_test": scenario.n_test,
        }
    return {
        "kind": "real",
        "dataset": scenario.manifest.name,
        "path": scenario.manifest.path,
        "n": scenario.n_values,
        "n_unlabeled": scenario.n_unlabeled,
        "standardize": scenario.standardize,
    }


# ---------------------------------------------------------------------------
# Config files


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


def load_config(path) -> ExperimentConfig:
    """Parse a YAML experiment config; see the repository README for the schema."""
    with open(path) as handle:
        raw = yaml.safe_load(handle)
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping")
    kind = raw.get("scenario")
    if kind == "synthetic":
        section = raw.get("synthetic")
        if not isinstance(section, dict):
            raise ValueError("scenario 'synthetic' needs a 'synthetic' section")
        scenario = SyntheticScenario(
            target=section["target"],
            n_values=[int(v) for v in _as_list(section["n"])],
            noise_vars=[float(v) for v in _as_list(section["noise_var"])],
            covariate_var=float(section.get("covariate_var", 1.0)),
            n_unlabeled=int(section.get("n_unlabeled", 1500)),
            n_test=int(section.get("n_test", 1000)),
        )
    elif kind == "real":
        section = raw.get("real")
        if not isinstance(section, dict):
            raise ValueError("scenario 'real' needs a 'real' section")
        manifest = ingest.DatasetManifest(
            name=section["name"],
            path=section["path"],
            response_column=section["response_column"],
            covariate_columns=list(section["covariate_columns"]),
            delimiter=section.get("delimiter", ","),
            has_header=bool(section.get("has_header", True)),
        )
        scenario = RealScenario(
            manifest=manifest,
            n_values=[int(v) for v in _as_list(section["n"])],
            n_unlabeled=int(section["n_unlabeled"]),
            standardize=bool(section.get("standardize", True)),
        )
    else:
        raise ValueError("config needs scenario: synthetic or real")
    d_max = raw.get("d_max", "auto")
    return ExperimentConfig(
        scenario=scenario,
        criteria=[str(c) for c in raw["criteria"]],
        repetitions=int(raw["repetitions"]),
        d_max=None if d_max in ("auto", None) else int(d_max),
        ridge=float(raw.get("ridge", DEFAULT_RIDGE)),
        master_seed=int(raw.get("master_seed", 0)),
        output_dir=str(raw.get("output_dir", "results")),
        threads=int(raw.get("threads", 1)),
    )


def reaggregate_trials(path) -> list[CriterionSummary]:
    """Rebuild per-cell summaries from a trials.csv file."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    fixed = ["trial", "criterion", "d_hat", "regret", "flags"]
    keys = header[: len(header) - len(fixed)]
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for line in text[1:]:
        parts = line.split(",")
        cell = tuple(parts[: len(keys)])
        criterion = parts[len(keys) + 1]
        value = float(parts[len(keys) + 3])
        group = cell + (criterion,)
        if group not in groups:
            groups[group] = []
            order.append(group)
        groups[group].append(value)
    summaries = []
    for group in order:
        values = groups[group]
        median, iqr = aggregate(values)
        cell = dict(zip(keys, group[:-1]))
        summaries.append(
            CriterionSummary(
                cell=cell,
                criterion=group[-1],
                median=median,
                iqr=iqr,
                n_trials=len(values),
            )
        )
    return summaries
