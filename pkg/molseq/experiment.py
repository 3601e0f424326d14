"""
SIDER ingestion, setup preparation, hyperparameter search and reporting.

A setup is one of {smiles, aug_smiles, selfies, aug_selfies}. Preparation
canonicalizes and deduplicates the molecules, splits 80/10/10, augments the
training rows only, converts to SELFIES when asked, tokenizes and builds the
vocabulary from the training split. One split is shared by all tasks.
"""
from __future__ import annotations

import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from molseq.metrics import AggregateStat, aggregate
from molseq.model import ModelConfig, ModelKind, count_parameters, init_params, save_checkpoint
from molseq.selfies import smiles_to_selfies
from molseq.smiles import SmilesError, augment, canonicalize
from molseq.storage import dump_json, read_frame_csv, read_json, write_frame_csv, write_json
from molseq.tokenize import Vocab, build_vocab, encode_indices, tokenize_selfies, tokenize_smiles
from molseq.train import SequenceData, SplitSpec, TrainConfig, evaluate, split_indices, train_model

logger = logging.getLogger(__name__)

SMILES_COLUMN = "smiles"
SIDER_TASKS: Tuple[str, ...] = (
    "Hepatobiliary disorders",
    "Metabolism and nutrition disorders",
    "Product issues",
    "Eye disorders",
    "Investigations",
    "Musculoskeletal and connective tissue disorders",
    "Gastrointestinal disorders",
    "Social circumstances",
    "Immune system disorders",
    "Reproductive system and breast disorders",
    "Neoplasms benign, malignant and unspecified (incl cysts and polyps)",
    "General disorders and administration site conditions",
    "Endocrine disorders",
    "Surgical and medical procedures",
    "Vascular disorders",
    "Blood and lymphatic system disorders",
    "Skin and subcutaneous tissue disorders",
    "Congenital, familial and genetic disorders",
    "Infections and infestations",
    "Respiratory, thoracic and mediastinal disorders",
    "Psychiatric disorders",
    "Renal and urinary disorders",
    "Pregnancy, puerperium and perinatal conditions",
    "Ear and labyrinth disorders",
    "Cardiac disorders",
    "Nervous system disorders",
    "Injury, poisoning and procedural complications",
)
EXPECTED_COLUMNS = 1 + len(SIDER_TASKS)
REPORT_VERSION = 1
BREAKDOWNS = ("configs", "tasks", "runs")
HEADLINE = "configs"


class DatasetError(ValueError):
    """Malformed SIDER-format CSV."""


class SetupError(ValueError):
    """Molecule that failed during setup preparation, with its provenance."""

    def __init__(self, message: str, row: Optional[int] = None, smiles: Optional[str] = None):
        self.row = row
        self.smiles = smiles
        where = f" (row {row}: {smiles})" if row is not None else ""
        super().__init__(message + where)


class HpoError(RuntimeError):
    """Every configuration of a search failed."""

    def __init__(self, message: str, diagnostics: Optional[List[dict]] = None):
        self.diagnostics = diagnostics or []
        super().__init__(message)


class Setup(str, Enum):
    SMILES = "smiles"
    AUG_SMILES = "aug_smiles"
    SELFIES = "selfies"
    AUG_SELFIES = "aug_selfies"

    @classmethod
    def parse(cls, value: str) -> "Setup":
        return cls(value.replace("-", "_").lower())

    @property
    def augmented(self) -> bool:
        return self in (Setup.AUG_SMILES, Setup.AUG_SELFIES)

    @property
    def uses_selfies(self) -> bool:
        return self in (Setup.SELFIES, Setup.AUG_SELFIES)

    @property
    def label(self) -> str:
        base = "SELFIES" if self.uses_selfies else "SMILES"
        return f"Augmented {base}" if self.augmented else base


def setup_label(kind: ModelKind, setup: Setup) -> str:
    """Report row name, e.g. "QK-LSTM Augmented SELFIES"."""
    return f"{ModelKind(kind).label} {Setup(setup).label}"


REFERENCE_SETUPS: Tuple[Tuple[ModelKind, Setup], ...] = (
    (ModelKind.LSTM, Setup.SMILES),
    (ModelKind.LSTM, Setup.AUG_SMILES),
    (ModelKind.LSTM, Setup.SELFIES),
    (ModelKind.LSTM, Setup.AUG_SELFIES),
    (ModelKind.QK_LSTM, Setup.SMILES),
    (ModelKind.QK_LSTM, Setup.AUG_SELFIES),
)

# Reference full-scale test ROC-AUC (mean, std) for the six setups.
REFERENCE_SCORES: Dict[str, Tuple[float, float]] = {
    "LSTM SMILES": (0.525, 0.023),
    "LSTM Augmented SMILES": (0.562, 0.004),
    "LSTM SELFIES": (0.507, 0.026),
    "LSTM Augmented SELFIES": (0.556, 0.013),
    "QK-LSTM SMILES": (0.524, 0.022),
    "QK-LSTM Augmented SELFIES": (0.555, 0.009),
}


def task_slug(task: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", task.lower()).strip("_")


# Dataset ======================================================================


@dataclass
class DatasetTable:
    frame: pd.DataFrame
    tasks: List[str]
    rejected: List[dict] = field(default_factory=list)

    @property
    def smiles(self) -> List[str]:
        return self.frame[SMILES_COLUMN].tolist()

    @property
    def labels(self) -> np.ndarray:
        return self.frame[self.tasks].to_numpy(dtype=np.int64)

    def __len__(self) -> int:
        return len(self.frame)


def load_sider_csv(
    path: str, skip_invalid: bool = False, expected_columns: int = EXPECTED_COLUMNS, progress: bool = False
) -> DatasetTable:
    """Read and validate a SIDER-format CSV (SMILES first, then binary task labels).

    Raises:
        DatasetError: empty file, wrong column count, non-binary labels, or
            unparseable SMILES when `skip_invalid` is off.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if os.path.getsize(path) == 0:
        raise DatasetError(f"{path} is empty")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{path} is empty") from e
    if frame.shape[1] != expected_columns:
        raise DatasetError(f"expected {expected_columns} columns, found {frame.shape[1]}")
    if frame.empty:
        raise DatasetError(f"{path} has a header but no rows")

    smiles_col, tasks = frame.columns[0], list(frame.columns[1:])
    frame = frame.rename(columns={smiles_col: SMILES_COLUMN})
    for col in tasks:
        values = frame[col].str.strip()
        bad = ~values.isin(["0", "1", "0.0", "1.0"])
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetError(
                f"row {row + 1}, column '{col}': label value '{frame[col].iloc[row]}' is not 0 or 1"
            )
        frame[col] = values.astype(float).astype(np.int64)

    rejected = []
    for row, text in enumerate(tqdm(frame[SMILES_COLUMN], desc="validating", disable=not progress)):
        try:
            canonicalize(text.strip())
        except SmilesError as e:
            rejected.append({"row": row + 1, "smiles": text, "reason": str(e)})
    if rejected:
        logger.warning(f"⚠️ {len(rejected)} rows with unparseable SMILES in {path}")
        for item in rejected[:5]:
            logger.warning(f"   row {item['row']}: {item['reason']}")
        if not skip_invalid:
            raise DatasetError(
                f"{len(rejected)} rows have unparseable SMILES (first: row {rejected[0]['row']}); "
                "pass --skip-invalid to drop them"
            )
        drop = [item["row"] - 1 for item in rejected]
        frame = frame.drop(index=frame.index[drop]).reset_index(drop=True)

    frame[SMILES_COLUMN] = frame[SMILES_COLUMN].str.strip()
    logger.info(f"✅ Loaded {len(frame)} molecules x {len(tasks)} tasks from {path}")
    return DatasetTable(frame, tasks, rejected)


def subsample(table: DatasetTable, n: int, seed: int = 0) -> DatasetTable:
    """Random subset of at most `n` rows, in original order."""
    if n >= len(table):
        return table
    keep = np.sort(np.random.default_rng(seed).choice(len(table), size=n, replace=False))
    return DatasetTable(table.frame.iloc[keep].reset_index(drop=True), list(table.tasks), list(table.rejected))


def select_tasks(table: DatasetTable, tasks: Sequence[str]) -> DatasetTable:
    unknown = [t for t in tasks if t not in table.tasks]
    if unknown:
        raise DatasetError(f"unknown tasks: {', '.join(unknown)}")
    frame = table.frame[[SMILES_COLUMN] + list(tasks)]
    return DatasetTable(frame.reset_index(drop=True), list(tasks), list(table.rejected))


# Setup preparation ============================================================


@dataclass(frozen=True)
class AugmentConfig:
    n_generate: int = 20
    n_keep: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_keep < 1 or self.n_keep > self.n_generate:
            raise ValueError("need 1 <= n_keep <= n_generate")


@dataclass
class PreparedSplit:
    strings: List[str]
    canonical: List[str]
    labels: np.ndarray
    seqs: list
    source_rows: List[int]
    augmented: List[bool]

    def __len__(self) -> int:
        return len(self.strings)


@dataclass
class PreparedSetup:
    setup: Setup
    tasks: List[str]
    vocab: Vocab
    splits: Dict[str, PreparedSplit]
    dropped_duplicates: int = 0

    def task_data(self, task: str) -> Tuple[SequenceData, SequenceData, SequenceData]:
        k = self.tasks.index(task)
        return tuple(
            SequenceData(self.splits[name].seqs, self.splits[name].labels[:, k])
            for name in ("train", "val", "test")
        )

    def leaked(self) -> List[str]:
        """Canonical forms present both in training inputs and in val/test."""
        held_out = set(self.splits["val"].canonical) | set(self.splits["test"].canonical)
        return sorted(held_out & set(self.splits["train"].canonical))


def _to_representation(text: str, setup: Setup, canonical: bool, row: int) -> str:
    if not setup.uses_selfies:
        return text
    try:
        return smiles_to_selfies(text, canonical=canonical)
    except ValueError as e:
        raise SetupError(f"SELFIES conversion failed: {e}", row, text) from e


def _tokens(text: str, setup: Setup) -> List[str]:
    return tokenize_selfies(text) if setup.uses_selfies else tokenize_smiles(text)


def prepare_setup(
    table: DatasetTable,
    setup: Setup,
    split_seed: int = 0,
    augment_cfg: AugmentConfig = AugmentConfig(),
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    progress: bool = False,
) -> PreparedSetup:
    """canonicalize -> dedupe -> split -> augment train -> SELFIES -> tokenize -> vocab."""
    setup = Setup(setup)
    labels = table.labels
    canonical, rows = [], []
    seen = set()
    for row, text in enumerate(table.smiles):
        try:
            canon = canonicalize(text)
        except SmilesError as e:
            raise SetupError(f"canonicalization failed: {e}", row + 1, text) from e
        if canon in seen:
            continue
        seen.add(canon)
        canonical.append(canon)
        rows.append(row)
    dropped = len(table) - len(rows)
    if dropped:
        logger.warning(f"⚠️ Dropped {dropped} duplicate molecules (same canonical form)")

    index = split_indices(len(canonical), SplitSpec(split_fractions, split_seed))
    splits: Dict[str, PreparedSplit] = {}
    for name, members in zip(("train", "val", "test"), index):
        strings, canons, label_rows, sources, flags = [], [], [], [], []
        for k in tqdm(members, desc=f"{setup.value}:{name}", disable=not progress, leave=False):
            canon, row = canonical[k], rows[k]
            variants = [(canon, False)]
            if name == "train" and setup.augmented:
                extra = augment(
                    canon, augment_cfg.n_generate, augment_cfg.n_keep, seed=augment_cfg.seed * 1_000_003 + row
                )
                variants += [(s, True) for s in extra if s != canon]
            for text, is_aug in variants:
                strings.append(_to_representation(text, setup, not is_aug, row + 1))
                canons.append(canonicalize(text) if is_aug else canon)
                label_rows.append(labels[row])
                sources.append(row)
                flags.append(is_aug)
        label_matrix = np.array(label_rows, dtype=np.int64).reshape(len(label_rows), len(table.tasks))
        splits[name] = PreparedSplit(strings, canons, label_matrix, [], sources, flags)

    vocab = build_vocab(_tokens(s, setup) for s in splits["train"].strings)
    for split in splits.values():
        split.seqs = [encode_indices(_tokens(s, setup), vocab) for s in split.strings]

    prepared = PreparedSetup(setup, list(table.tasks), vocab, splits, dropped)
    leaked = prepared.leaked()
    if leaked:
        raise SetupError(f"{len(leaked)} held-out molecules also appear in the training inputs", None, leaked[0])
    logger.info(
        f"Prepared {setup.value}: train {len(splits['train'])}, val {len(splits['val'])}, "
        f"test {len(splits['test'])}, vocab {vocab.size}"
    )
    return prepared


# Hyperparameter search ========================================================


LSTM_GRID: Tuple[int, ...] = tuple(range(32, 129, 16))
QK_GRID: Tuple[int, ...] = tuple(range(8, 33, 4))


def hidden_grid(kind: ModelKind) -> Tuple[int, ...]:
    return LSTM_GRID if ModelKind(kind) is ModelKind.LSTM else QK_GRID


@dataclass(frozen=True)
class HpoSpec:
    kind: ModelKind
    grid: Optional[Tuple[int, ...]] = None
    n_configs: int = 4
    top_k: int = 3
    seeds: Tuple[int, ...] = (0,)
    top_k_scope: str = "config"
    sample_seed: int = 0
    embed_dim: int = 64
    n_layers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        grid = tuple(self.grid) if self.grid is not None else hidden_grid(self.kind)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not 1 <= self.n_configs <= len(grid):
            raise ValueError(f"n_configs must be between 1 and {len(grid)}")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.top_k_scope not in ("config", "seed"):
            raise ValueError("top_k_scope must be 'config' or 'seed'")

    def sample_hidden_dims(self) -> List[int]:
        rng = np.random.default_rng(self.sample_seed)
        return [int(h) for h in rng.choice(np.array(self.grid), size=self.n_configs, replace=False)]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        data["grid"] = list(self.grid)
        data["seeds"] = list(self.seeds)
        return data


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _train_job(payload: dict) -> dict:
    """One (task, hidden_dim, seed) training run; failures become diagnostics."""
    task, hidden_dim, seed = payload["task"], payload["hidden_dim"], payload["seed"]
    result = {"task": task, "hidden_dim": hidden_dim, "seed": seed}
    try:
        train_data, val_data, test_data = payload["data"]
        config = payload["config"]
        params = init_params(config, seed)
        train_cfg = replace(payload["train_cfg"], seed=seed)
        history_path = None
        if payload.get("artifacts_dir"):
            stem = f"{task_slug(task)}_h{hidden_dim}_s{seed}"
            history_path = os.path.join(payload["artifacts_dir"], f"history_{stem}.csv")
        trained = train_model(params, config, train_data, val_data, train_cfg, history_path)
        test_eval = evaluate(trained.params, config, test_data)
        if payload.get("artifacts_dir"):
            save_checkpoint(
                os.path.join(payload["artifacts_dir"], f"checkpoint_{stem}.json"),
                trained.params, config, payload["vocab_sha256"],
                extra={"task": task, "seed": seed, "best_epoch": trained.best_epoch},
            )
        result.update(
            val_auc=_clean(trained.best_val_auc),
            test_auc=test_eval["auc"][0],
            epochs=trained.epochs_run,
            best_epoch=trained.best_epoch,
            n_params=count_parameters(trained.params),
            error=None,
        )
    except Exception as e:
        logger.error(f"❌ Run failed for {task} h={hidden_dim} seed={seed}: {e}")
        result.update(val_auc=None, test_auc=None, epochs=0, best_epoch=0, n_params=None, error=f"{type(e).__name__}: {e}")
    return result


def _run_key(run: dict) -> Tuple[str, int, int]:
    return (run["task"], run["hidden_dim"], run["seed"])


def _rank_key(val: Optional[float], hidden_dim: int, seed: int = 0):
    return (0 if val is not None else 1, -(val or 0.0), hidden_dim, seed)


def select_top_k(runs: List[dict], top_k: int, scope: str = "config") -> List[dict]:
    """Pick the best units of one task by validation ROC-AUC.

    scope "config": a unit is a hidden size with its seeds averaged.
    scope "seed": a unit is a single trained model.
    """
    ok = [r for r in runs if r["error"] is None and r["test_auc"] is not None]
    if scope == "seed":
        units = [
            {"hidden_dim": r["hidden_dim"], "seed": r["seed"], "val_auc": r["val_auc"], "test_auc": r["test_auc"]}
            for r in ok
        ]
        units.sort(key=lambda u: _rank_key(u["val_auc"], u["hidden_dim"], u["seed"]))
        return units[:top_k]

    units = []
    for hidden_dim in sorted({r["hidden_dim"] for r in ok}):
        group = [r for r in ok if r["hidden_dim"] == hidden_dim]
        vals = [r["val_auc"] for r in group if r["val_auc"] is not None]
        units.append({
            "hidden_dim": hidden_dim,
            "seeds": [r["seed"] for r in group],
            "val_auc": float(np.mean(vals)) if vals else None,
            "test_auc": float(np.mean([r["test_auc"] for r in group])),
        })
    units.sort(key=lambda u: _rank_key(u["val_auc"], u["hidden_dim"]))
    return units[:top_k]


@dataclass
class RunReport:
    setup_name: str
    model_kind: str
    setup: str
    tasks: List[str]
    excluded_tasks: List[str]
    hpo: dict
    train_config: dict
    seeds: dict
    runs: List[dict]
    selected: Dict[str, List[dict]]
    task_scores: Dict[str, float]
    aggregates: Dict[str, dict]
    parameter_counts: Dict[str, int]
    dataset: dict
    diagnostics: List[dict] = field(default_factory=list)
    wall_clock_seconds: Optional[float] = None
    version: int = REPORT_VERSION

    @property
    def headline(self) -> AggregateStat:
        return AggregateStat(**self.aggregates[HEADLINE])

    def to_dict(self) -> dict:
        data = asdict(self)
        if self.wall_clock_seconds is None:
            data.pop("wall_clock_seconds")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)


def compute_aggregates(
    runs: List[dict], selected: Dict[str, List[dict]], ddof: int = 0
) -> Tuple[Dict[str, float], Dict[str, dict]]:
    """Per-task scores and the three breakdowns, recomputable from raw runs."""
    task_scores = {
        task: float(np.mean([u["test_auc"] for u in units])) for task, units in sorted(selected.items()) if units
    }
    pools = {
        "configs": [u["test_auc"] for task in sorted(selected) for u in selected[task]],
        "tasks": list(task_scores.values()),
        "runs": [r["test_auc"] for r in runs if r["error"] is None and r["test_auc"] is not None],
    }
    aggregates = {}
    for name in BREAKDOWNS:
        if len(pools[name]) > ddof:
            aggregates[name] = aggregate(pools[name], ddof=ddof).to_dict()
        else:
            aggregates[name] = {"mean": None, "std": None, "n": len(pools[name])}
    return task_scores, aggregates


def run_hpo(
    table: DatasetTable,
    setup: Setup,
    hpo: HpoSpec,
    train_cfg: TrainConfig = TrainConfig(),
    split_seed: int = 0,
    augment_cfg: AugmentConfig = AugmentConfig(),
    workers: int = 1,
    ddof: int = 0,
    record_time: bool = False,
    artifacts_dir: Optional[str] = None,
    progress: bool = False,
    prepared: Optional[PreparedSetup] = None,
) -> RunReport:
    """Random search over hidden sizes, per task, with top-k averaging of test ROC-AUC.

    Raises:
        HpoError: when every run fails.
    """
    started = time.perf_counter()
    setup = Setup(setup)
    prepared = prepared or prepare_setup(table, setup, split_seed, augment_cfg, progress=progress)
    hidden_dims = hpo.sample_hidden_dims()
    logger.info(f"🚀 {setup_label(hpo.kind, setup)}: hidden sizes {hidden_dims}, seeds {list(hpo.seeds)}")

    excluded, active = [], []
    for task in prepared.tasks:
        test_labels = prepared.splits["test"].labels[:, prepared.tasks.index(task)]
        if test_labels.min() == test_labels.max():
            excluded.append(task)
        else:
            active.append(task)
    if excluded:
        logger.warning(f"⚠️ {len(excluded)} tasks have a single-class test split and are excluded")

    configs = {
        h: ModelConfig(hpo.kind, prepared.vocab.size, hpo.embed_dim, h, n_layers=hpo.n_layers) for h in hidden_dims
    }
    parameter_counts = {str(h): count_parameters(init_params(c, 0)) for h, c in sorted(configs.items())}

    jobs = []
    for task in sorted(active):
        data = prepared.task_data(task)
        for h in sorted(hidden_dims):
            for seed in sorted(hpo.seeds):
                jobs.append({
                    "task": task, "hidden_dim": h, "seed": seed, "data": data, "config": configs[h],
                    "train_cfg": train_cfg, "artifacts_dir": artifacts_dir,
                    "vocab_sha256": prepared.vocab.sha256(),
                })

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_train_job, jobs), total=len(jobs), desc="runs", disable=not progress))
    else:
        results = [_train_job(job) for job in tqdm(jobs, desc="runs", disable=not progress)]
    runs = sorted(results, key=_run_key)

    diagnostics = [r for r in runs if r["error"] is not None]
    if runs and len(diagnostics) == len(runs):
        raise HpoError(f"all {len(runs)} runs failed", diagnostics)

    selected = {
        task: select_top_k([r for r in runs if r["task"] == task], hpo.top_k, hpo.top_k_scope) for task in active
    }
    task_scores, aggregates = compute_aggregates(runs, selected, ddof)

    report = RunReport(
        setup_name=setup_label(hpo.kind, setup),
        model_kind=hpo.kind.value,
        setup=setup.value,
        tasks=sorted(active),
        excluded_tasks=sorted(excluded),
        hpo=hpo.to_dict(),
        train_config=train_cfg.to_dict(),
        seeds={
            "split": split_seed,
            "sample": hpo.sample_seed,
            "train": list(hpo.seeds),
            "augment": augment_cfg.seed,
        },
        runs=runs,
        selected=selected,
        task_scores=task_scores,
        aggregates=aggregates,
        parameter_counts=parameter_counts,
        dataset={
            "rows": len(table),
            "duplicates_dropped": prepared.dropped_duplicates,
            "train": len(prepared.splits["train"]),
            "val": len(prepared.splits["val"]),
            "test": len(prepared.splits["test"]),
            "vocab_size": prepared.vocab.size,
            "augment": asdict(augment_cfg) if setup.augmented else None,
            "ddof": ddof,
        },
        diagnostics=diagnostics,
        wall_clock_seconds=round(time.perf_counter() - started, 3) if record_time else None,
    )
    headline = aggregates[HEADLINE]
    if headline["mean"] is not None:
        logger.info(f"🎉 {report.setup_name}: {headline['mean']:.3f} ± {headline['std']:.3f}")
    return report


def run_suite(
    table: DatasetTable,
    setups: Sequence[Tuple[ModelKind, Setup]] = REFERENCE_SETUPS,
    out_dir: Optional[str] = None,
    **kwargs,
) -> List[RunReport]:
    """Run several (model kind, setup) pairs; preparation is shared per setup."""
    hpo_template: HpoSpec = kwargs.pop("hpo", None) or HpoSpec(ModelKind.LSTM)
    prepared_cache: Dict[Setup, PreparedSetup] = {}
    reports = []
    for kind, setup in setups:
        setup = Setup(setup)
        if setup not in prepared_cache:
            prepared_cache[setup] = prepare_setup(
                table, setup, kwargs.get("split_seed", 0), kwargs.get("augment_cfg", AugmentConfig())
            )
        grid = hidden_grid(kind) if hpo_template.grid == hidden_grid(hpo_template.kind) else hpo_template.grid
        hpo = replace(hpo_template, kind=ModelKind(kind), grid=grid)
        report = run_hpo(table, setup, hpo, prepared=prepared_cache[setup], **kwargs)
        reports.append(report)
        if out_dir:
            emit_report(report, os.path.join(out_dir, f"{task_slug(report.setup_name)}.json"))
    if out_dir and reports:
        write_frame_csv(os.path.join(out_dir, "summary.csv"), summary_frame(reports))
    return reports


# Reporting ====================================================================


def summary_frame(reports: Iterable[RunReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        headline = report.aggregates[HEADLINE]
        rows.append({
            "setup": report.setup_name,
            "mean": None if headline["mean"] is None else round(headline["mean"], 3),
            "std": None if headline["std"] is None else round(headline["std"], 3),
        })
    return pd.DataFrame(rows, columns=["setup", "mean", "std"])


def _report_paths(path: str) -> Tuple[str, str]:
    stem = path[:-5] if path.endswith(".json") else path
    return stem + ".json", stem + ".csv"


def emit_report(report: RunReport, path: str) -> Tuple[str, str]:
    """Write the JSON report and its one-row CSV summary next to it."""
    json_path, csv_path = _report_paths(path)
    write_json(json_path, report.to_dict())
    write_frame_csv(csv_path, summary_frame([report]))
    return json_path, csv_path


def load_report(path: str) -> RunReport:
    return RunReport.from_dict(read_json(path))


def report_json(report: RunReport) -> str:
    return dump_json(report.to_dict())


def load_summary(path: str) -> pd.DataFrame:
    return read_frame_csv(path)


def compare_reports(reports: Iterable[RunReport]) -> pd.DataFrame:
    """Pairwise headline deltas: augmented vs plain, SELFIES vs SMILES, QK-LSTM vs LSTM.

    `outside_std` is set when the difference exceeds the larger of the two
    standard deviations.
    """
    by_key = {(r.model_kind, r.setup): r for r in reports}
    pairs = []
    for kind in ModelKind:
        pairs += [
            ("augmentation", (kind.value, Setup.AUG_SMILES.value), (kind.value, Setup.SMILES.value)),
            ("augmentation", (kind.value, Setup.AUG_SELFIES.value), (kind.value, Setup.SELFIES.value)),
            ("representation", (kind.value, Setup.SELFIES.value), (kind.value, Setup.SMILES.value)),
            ("representation", (kind.value, Setup.AUG_SELFIES.value), (kind.value, Setup.AUG_SMILES.value)),
        ]
    for setup in Setup:
        pairs.append(("model", (ModelKind.QK_LSTM.value, setup.value), (ModelKind.LSTM.value, setup.value)))

    rows = []
    for comparison, a_key, b_key in pairs:
        if a_key not in by_key or b_key not in by_key:
            continue
        a, b = by_key[a_key].aggregates[HEADLINE], by_key[b_key].aggregates[HEADLINE]
        if a["mean"] is None or b["mean"] is None:
            continue
        delta = a["mean"] - b["mean"]
        rows.append({
            "comparison": comparison,
            "setup": by_key[a_key].setup_name,
            "baseline": by_key[b_key].setup_name,
            "delta": delta,
            "outside_std": bool(abs(delta) > max(a["std"], b["std"])),
        })
    return pd.DataFrame(rows, columns=["comparison", "setup", "baseline", "delta", "outside_std"])
