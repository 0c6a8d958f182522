"""Synthetic molecule generators for tests.

Molecules are built from oxygen-free ring cores plus randomized
substituents, so the contains-oxygen label depends only on the
substituents and every scaffold group mixes both classes.  Labels are
computed from the parsed graph, never from the construction recipe.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from molcontrast.datasets import LabeledDataset, LabeledRecord
from molcontrast.graph import MoleculeGraph
from molcontrast.smiles import parse_smiles

# Each core is free of oxygen; {x} and {y} take substituents.
CORES = (
    "c1ccc({x})cc1",
    "{y}c1ccc({x})cc1",
    "c1cc({x})ccn1",
    "C1CCC({x})CC1",
    "{y}C1CCC({x})CC1",
    "C1CC({x})CC1",
    "c1cc({x})cs1",
    "C1CC({x})CN1",
    "C1=CC({x})CCC1",
    "c1nc({x})cnc1{y}",
)

OXY_SUBSTITUENTS = (
    "O", "CO", "OC", "OCC", "CCO", "COC", "CCCO", "OCCC",
    "C(=O)O", "C(=O)C", "C(=O)OC", "OC(C)C", "C(=O)N", "COCC", "OCC(C)C",
)
PLAIN_SUBSTITUENTS = (
    "C", "CC", "CCC", "CCCC", "N", "CN", "NC", "CCN", "NCC",
    "Cl", "Br", "F", "I", "C#N", "CC#N", "C(C)C", "CC(C)C", "S", "SC", "CCS",
)


def contains_oxygen(g: MoleculeGraph) -> bool:
    return any(node.atomic_number == 8 for node in g.nodes)


def make_molecules(n: int, seed: int) -> list[tuple[str, MoleculeGraph]]:
    """``n`` unique parseable molecules, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[tuple[str, MoleculeGraph]] = []
    while len(out) < n:
        core = CORES[rng.integers(len(CORES))]
        fills = {}
        for slot in ("x", "y"):
            if "{" + slot + "}" not in core:
                continue
            pool = (
                OXY_SUBSTITUENTS if rng.random() < 0.5 else PLAIN_SUBSTITUENTS
            )
            fills[slot] = pool[rng.integers(len(pool))]
        smiles = core.format(**fills)
        if smiles in seen:
            continue
        seen.add(smiles)
        out.append((smiles, parse_smiles(smiles)))
    return out


def oxygen_dataset(n: int, seed: int, name: str = "contains-oxygen") -> LabeledDataset:
    records = []
    for i, (smiles, graph) in enumerate(make_molecules(n, seed)):
        label = 1.0 if contains_oxygen(graph) else 0.0
        records.append(LabeledRecord(i, smiles, graph, (label,), (True,)))
    return LabeledDataset(name, "classification", ("has_oxygen",), records)


def unlabeled_corpus(n: int, seed: int) -> list[MoleculeGraph]:
    return [graph for _, graph in make_molecules(n, seed)]


def write_corpus_csv(path: str | Path, n: int, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["smiles"])
        for smiles, _ in make_molecules(n, seed):
            writer.writerow([smiles])


def write_labeled_csv(path: str | Path, n: int, seed: int) -> None:
    dataset = oxygen_dataset(n, seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["smiles", "has_oxygen"])
        for record in dataset.records:
            writer.writerow([record.smiles, int(record.labels[0])])
