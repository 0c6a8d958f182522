"""Labeled datasets, scaffold-based splitting, and evaluation metrics.

The scaffold of a molecule is what remains after iteratively deleting
degree <= 1 atoms (ring systems plus the linkers between them); acyclic
molecules reduce to the empty scaffold.  Scaffold identity is a 64-bit key
from three rounds of Weisfeiler-Leman refinement over atomic numbers and
bond types, deliberately ignoring chirality, so distinct SMILES spellings
of one scaffold collide.  Splitting assigns whole scaffold groups greedily
to train, then validation, then test, largest group first, so no scaffold
ever spans two splits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DataError, MolContrastError
from .fingerprints import fnv1a64
from .graph import BondEdge, MoleculeGraph
from .smiles import CorpusFailure, SmilesParseError, parse_smiles

__all__ = [
    "LabeledRecord",
    "LabeledDataset",
    "load_labeled_csv",
    "murcko_scaffold",
    "scaffold_key",
    "Split",
    "SplitAssignment",
    "scaffold_split",
    "UndefinedMetric",
    "roc_auc",
    "rmse",
    "mae",
    "mean_task_metric",
]


@dataclass(frozen=True)
class LabeledRecord:
    index: int
    smiles: str
    graph: MoleculeGraph
    labels: tuple[float, ...]
    observed: tuple[bool, ...]


@dataclass
class LabeledDataset:
    name: str
    task_kind: str  # "classification" or "regression"
    task_names: tuple[str, ...]
    records: list[LabeledRecord]

    @property
    def task_count(self) -> int:
        return len(self.task_names)

    def __len__(self) -> int:
        return len(self.records)

    def graphs(self) -> list[MoleculeGraph]:
        return [r.graph for r in self.records]

    def label_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Labels and observation mask as [n, tasks] float/bool arrays."""
        labels = np.array([r.labels for r in self.records], dtype=np.float64)
        observed = np.array([r.observed for r in self.records], dtype=bool)
        return labels, observed


def load_labeled_csv(
    path: str | Path,
    task_kind: str,
    smiles_column: str = "smiles",
    name: str | None = None,
) -> tuple[LabeledDataset, list[CorpusFailure]]:
    """Read a labeled CSV: one SMILES column, every other column a task.

    Blank cells are missing labels.  Unparseable rows are skipped and
    reported.  Classification labels must be 0 or 1 where present.
    """
    if task_kind not in ("classification", "regression"):
        raise DataError(f"unknown task kind {task_kind!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    records: list[LabeledRecord] = []
    failures: list[CorpusFailure] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if smiles_column not in fields:
            raise DataError(f"column {smiles_column!r} not found in {path}")
        task_names = tuple(c for c in fields if c != smiles_column)
        if not task_names:
            raise DataError(f"no label columns in {path}")
        for index, row in enumerate(reader):
            text = (row.get(smiles_column) or "").strip()
            try:
                graph = parse_smiles(text)
            except SmilesParseError as exc:
                failures.append(CorpusFailure(index, text, exc.diagnostic))
                continue
            labels: list[float] = []
            observed: list[bool] = []
            for column in task_names:
                cell = (row.get(column) or "").strip()
                if not cell:
                    labels.append(0.0)
                    observed.append(False)
                    continue
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise DataError(
                        f"row {index}, column {column}: bad label {cell!r}"
                    ) from exc
                if task_kind == "classification" and value not in (0.0, 1.0):
                    raise DataError(
                        f"row {index}, column {column}: classification label "
                        f"must be 0 or 1, got {cell!r}"
                    )
                labels.append(value)
                observed.append(True)
            records.append(
                LabeledRecord(index, text, graph, tuple(labels), tuple(observed))
            )
    dataset = LabeledDataset(
        name or path.stem, task_kind, task_names, records
    )
    return dataset, failures


# -- scaffolds ---------------------------------------------------------


def murcko_scaffold(g: MoleculeGraph) -> MoleculeGraph:
    """Iteratively delete degree <= 1 atoms; returns the reindexed core.

    Ring atoms always keep degree >= 2, so the fixed point is the ring
    systems plus their linkers.  Acyclic inputs give the empty graph.
    Surviving nodes keep their features and relative order.
    """
    degree = [len(row) for row in g.adjacency]
    alive = [True] * g.num_nodes
    queue = [v for v in range(g.num_nodes) if degree[v] <= 1]
    while queue:
        v = queue.pop()
        if not alive[v]:
            continue
        alive[v] = False
        for u in g.adjacency[v]:
            if alive[u]:
                degree[u] -= 1
                if degree[u] <= 1:
                    queue.append(u)
    index = {}
    nodes = []
    for v in range(g.num_nodes):
        if alive[v]:
            index[v] = len(nodes)
            nodes.append(g.nodes[v])
    edges = tuple(
        BondEdge(index[e.u], index[e.v], e.bond_type, e.direction)
        for e in g.edges
        if alive[e.u] and alive[e.v]
    )
    return MoleculeGraph(tuple(nodes), edges)


_EMPTY_SCAFFOLD_KEY = fnv1a64(b"empty-scaffold")
_WL_ROUNDS = 3


def _wl_labels(g: MoleculeGraph, rounds: int = _WL_ROUNDS) -> list[int]:
    labels = [fnv1a64(str(node.atomic_number).encode()) for node in g.nodes]
    bond_type = {}
    for e in g.edges:
        bond_type[(e.u, e.v)] = int(e.bond_type)
        bond_type[(e.v, e.u)] = int(e.bond_type)
    for _ in range(rounds):
        fresh = []
        for v in range(g.num_nodes):
            env = sorted(
                (bond_type[(v, u)], labels[u]) for u in g.adjacency[v]
            )
            text = f"{labels[v]}|" + ";".join(f"{b},{l}" for b, l in env)
            fresh.append(fnv1a64(text.encode()))
        labels = fresh
    return labels


def scaffold_key(g: MoleculeGraph) -> int:
    """64-bit scaffold identity; relabeling-invariant, chirality-blind."""
    core = murcko_scaffold(g)
    if core.num_nodes == 0:
        return _EMPTY_SCAFFOLD_KEY
    labels = sorted(_wl_labels(core))
    summary = f"{core.num_nodes}|{core.num_edges}|" + ",".join(map(str, labels))
    return fnv1a64(summary.encode())


# -- splitting ---------------------------------------------------------


class Split(IntEnum):
    TRAIN = 0
    VALID = 1
    TEST = 2


@dataclass
class SplitAssignment:
    method: str
    assignment: tuple[Split, ...]

    def indices(self, split: Split) -> list[int]:
        return [i for i, s in enumerate(self.assignment) if s == split]

    @property
    def train_indices(self) -> list[int]:
        return self.indices(Split.TRAIN)

    @property
    def valid_indices(self) -> list[int]:
        return self.indices(Split.VALID)

    @property
    def test_indices(self) -> list[int]:
        return self.indices(Split.TEST)


def scaffold_split(
    graphs: list[MoleculeGraph],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> SplitAssignment:
    """Greedy whole-group scaffold split.

    Groups are sorted by size descending (key ascending on ties) and
    assigned to train until the cumulative count reaches ``f_train * n``,
    then to validation until ``(f_train + f_valid) * n``, then to test.
    Every count therefore deviates from its target by less than the
    largest group size.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise DataError(f"fractions must be three positive values, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")
    n = len(graphs)
    groups: dict[int, list[int]] = {}
    for i, g in enumerate(graphs):
        groups.setdefault(scaffold_key(g), []).append(i)
    if len(groups) < 3:
        raise DataError(
            f"only {len(groups)} scaffold group(s); cannot populate three splits"
        )
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    train_cut = fractions[0] * n
    valid_cut = (fractions[0] + fractions[1]) * n
    assignment: list[Split] = [Split.TRAIN] * n
    placed = 0
    for key, members in ordered:
        if placed < train_cut:
            where = Split.TRAIN
        elif placed < valid_cut:
            where = Split.VALID
        else:
            where = Split.TEST
        for i in members:
            assignment[i] = where
        placed += len(members)
    result = SplitAssignment("scaffold", tuple(assignment))
    for split in Split:
        if not result.indices(split):
            raise DataError(
                f"scaffold split left the {split.name.lower()} set empty; "
                "dataset has too few scaffold groups"
            )
    return result


# -- metrics -----------------------------------------------------------


class UndefinedMetric(MolContrastError):
    """Raised when a metric has no value (e.g. single-class ROC-AUC)."""


def roc_auc(scores, labels) -> float:
    """Mann-Whitney ROC-AUC with tie credit 0.5.

    ``labels`` are binary; raises :class:`UndefinedMetric` when only one
    class is present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal 1-d")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("ROC-AUC undefined: only one class present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    ranks[order] = np.arange(1, len(s) + 1)
    # Average ranks inside tie groups so each tied pair contributes 0.5.
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rmse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise UndefinedMetric("RMSE undefined on empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise UndefinedMetric("MAE undefined on empty input")
    return float(np.mean(np.abs(p - t)))


def mean_task_metric(
    metric,
    predictions: np.ndarray,
    labels: np.ndarray,
    observed: np.ndarray,
) -> tuple[float, list[float | None]]:
    """Apply a per-task metric column-wise and average the defined ones.

    Returns ``(mean, per_task)`` with ``None`` for tasks where the metric
    is undefined; raises :class:`UndefinedMetric` if none are defined.
    """
    per_task: list[float | None] = []
    values = []
    for t in range(predictions.shape[1]):
        mask = observed[:, t]
        if not mask.any():
            per_task.append(None)
            continue
        try:
            value = metric(predictions[mask, t], labels[mask, t])
        except UndefinedMetric:
            per_task.append(None)
            continue
        per_task.append(value)
        values.append(value)
    if not values:
        raise UndefinedMetric("metric undefined for every task")
    return float(np.mean(values)), per_task
