"""Molecular graph data model.

Nodes carry the atomic number and a tetrahedral chirality tag; edges carry a
bond type and an optional single-bond direction marker.  These four categories
are exactly the features the encoder embeds, so their vocabulary sizes are
fixed here as module constants.  Formal charge is kept on the node as parsed
metadata but is not part of the embedded feature set.

Graphs are immutable.  Edges are stored once per unordered pair with
``u < v``; the adjacency structure is derived at construction time and an
explicit :func:`validate` pass can audit a graph that was assembled by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence


class Chirality(IntEnum):
    """Tetrahedral chirality tag attached to an atom.

    The integer values are embedding-table rows and must not be reordered.
    """

    UNSPECIFIED = 0
    TETRAHEDRAL_CW = 1
    TETRAHEDRAL_CCW = 2
    OTHER = 3


class BondType(IntEnum):
    SINGLE = 0
    DOUBLE = 1
    TRIPLE = 2
    AROMATIC = 3
    # Reserved for encoder-internal self-loop edges; never present in a
    # parsed or augmented graph.
    SELF_LOOP = 4


class BondDirection(IntEnum):
    """Cis/trans marker written as ``/`` or ``\\`` on a single bond.

    The direction is stored relative to the edge's canonical ``u -> v``
    orientation; reversing the orientation swaps the two marked values.
    """

    NONE = 0
    END_UP_RIGHT = 1
    END_DOWN_RIGHT = 2


#: Atomic number reserved for the augmentation mask token; not a real element.
MASK_ATOMIC_NUMBER = 119
#: Embedding rows for atomic numbers: slot 0 is padding, 1..118 are elements,
#: 119 is the mask token.
NUM_ATOM_TYPES = 120
NUM_CHIRALITY_TYPES = 4
#: Four chemical bond types plus the reserved self-loop slot.
NUM_BOND_TYPES = 5
NUM_BOND_DIRECTIONS = 3


def flip_direction(direction: BondDirection) -> BondDirection:
    """Direction marker as seen from the opposite bond orientation."""
    if direction == BondDirection.END_UP_RIGHT:
        return BondDirection.END_DOWN_RIGHT
    if direction == BondDirection.END_DOWN_RIGHT:
        return BondDirection.END_UP_RIGHT
    return BondDirection.NONE


@dataclass(frozen=True)
class AtomNode:
    atomic_number: int
    chirality: Chirality = Chirality.UNSPECIFIED
    formal_charge: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.atomic_number, int):
            raise ValueError(f"atomic_number must be int, got {self.atomic_number!r}")
        if not 1 <= self.atomic_number <= MASK_ATOMIC_NUMBER:
            raise ValueError(
                f"atomic_number {self.atomic_number} outside [1, {MASK_ATOMIC_NUMBER}]"
            )
        object.__setattr__(self, "chirality", Chirality(self.chirality))


def mask_token() -> AtomNode:
    """The node every masked atom is replaced with."""
    return AtomNode(MASK_ATOMIC_NUMBER, Chirality.UNSPECIFIED, 0)


@dataclass(frozen=True)
class BondEdge:
    """Undirected bond between node indices ``u < v``."""

    u: int
    v: int
    bond_type: BondType = BondType.SINGLE
    direction: BondDirection = BondDirection.NONE

    def __post_init__(self) -> None:
        if self.u < 0 or self.v < 0:
            raise ValueError(f"negative node index in edge ({self.u}, {self.v})")
        if self.u == self.v:
            raise ValueError(f"self-loop edge at node {self.u}")
        if self.u > self.v:
            raise ValueError(
                f"edge ({self.u}, {self.v}) not normalized; use BondEdge.between"
            )
        object.__setattr__(self, "bond_type", BondType(self.bond_type))
        object.__setattr__(self, "direction", BondDirection(self.direction))

    @classmethod
    def between(
        cls,
        a: int,
        b: int,
        bond_type: BondType = BondType.SINGLE,
        direction: BondDirection = BondDirection.NONE,
    ) -> "BondEdge":
        """Build an edge from endpoints in writing order.

        ``direction`` is interpreted for the ``a -> b`` orientation and is
        flipped if normalization swaps the endpoints.
        """
        if a == b:
            raise ValueError(f"self-loop edge at node {a}")
        if a < b:
            return cls(a, b, bond_type, direction)
        return cls(b, a, bond_type, flip_direction(direction))

    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.u, self.v, int(self.bond_type), int(self.direction))


def _build_adjacency(
    num_nodes: int, edges: Sequence[BondEdge]
) -> tuple[tuple[int, ...], ...]:
    nbrs: list[list[int]] = [[] for _ in range(num_nodes)]
    for e in edges:
        nbrs[e.u].append(e.v)
        nbrs[e.v].append(e.u)
    return tuple(tuple(sorted(set(n))) for n in nbrs)


@dataclass(frozen=True, eq=False)
class MoleculeGraph:
    """Immutable molecule graph with derived adjacency.

    Equality ignores edge-list order; two parses that list the same bonds in
    different order compare equal.  ``adjacency`` is normally derived from the
    edges; passing it explicitly exists so :func:`validate` can be exercised
    on deliberately inconsistent graphs.
    """

    nodes: tuple[AtomNode, ...]
    edges: tuple[BondEdge, ...] = ()
    adjacency: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        for e in self.edges:
            if e.v >= len(self.nodes):
                raise ValueError(
                    f"edge ({e.u}, {e.v}) references node beyond {len(self.nodes) - 1}"
                )
        if self.adjacency is None:
            object.__setattr__(
                self, "adjacency", _build_adjacency(len(self.nodes), self.edges)
            )
        else:
            object.__setattr__(
                self, "adjacency", tuple(tuple(row) for row in self.adjacency)
            )

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MoleculeGraph):
            return NotImplemented
        return self.nodes == other.nodes and sorted(
            self.edges, key=BondEdge.sort_key
        ) == sorted(other.edges, key=BondEdge.sort_key)

    def __hash__(self) -> int:
        return hash((self.nodes, tuple(sorted(self.edges, key=BondEdge.sort_key))))


def neighbors(g: MoleculeGraph, v: int) -> tuple[int, ...]:
    """Sorted, duplicate-free neighbor indices of node ``v``."""
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node index {v} out of range for {g.num_nodes} nodes")
    return g.adjacency[v]


def validate(g: MoleculeGraph) -> list[str]:
    """Audit graph invariants; returns one message per violation.

    Checks edge normalization, duplicate bonds, index bounds, and that the
    adjacency structure matches the edge list in both directions.
    """
    problems: list[str] = []
    n = g.num_nodes
    seen: set[tuple[int, int]] = set()
    for e in g.edges:
        if not (0 <= e.u < n and 0 <= e.v < n):
            problems.append(f"edge ({e.u}, {e.v}) out of range for {n} nodes")
            continue
        if e.u >= e.v:
            problems.append(f"edge ({e.u}, {e.v}) not stored with u < v")
        key = (e.u, e.v)
        if key in seen:
            problems.append(f"duplicate edge ({e.u}, {e.v})")
        seen.add(key)
    if len(g.adjacency) != n:
        problems.append(
            f"adjacency has {len(g.adjacency)} rows for {n} nodes"
        )
        return problems
    expected = _build_adjacency(n, [e for e in g.edges if e.u < e.v < n])
    for v in range(n):
        row = g.adjacency[v]
        if tuple(sorted(set(row))) != row:
            problems.append(f"adjacency row {v} not sorted/deduplicated")
        if tuple(sorted(set(row))) != expected[v]:
            problems.append(
                f"adjacency row {v} is {row}, edges imply {expected[v]}"
            )
    return problems


def relabel(g: MoleculeGraph, perm: Sequence[int]) -> MoleculeGraph:
    """Apply a node relabeling: old index ``i`` becomes ``perm[i]``.

    Edge direction markers are flipped whenever normalization reverses an
    edge's stored orientation, so the relabeled graph is isomorphic to the
    input including stereo annotations.
    """
    n = g.num_nodes
    if sorted(perm) != list(range(n)):
        raise ValueError("perm is not a permutation of node indices")
    nodes: list[AtomNode | None] = [None] * n
    for i, node in enumerate(g.nodes):
        nodes[perm[i]] = node
    edges = tuple(
        BondEdge.between(perm[e.u], perm[e.v], e.bond_type, e.direction)
        for e in g.edges
    )
    return MoleculeGraph(tuple(nodes), edges)  # type: ignore[arg-type]


def format_graph(g: MoleculeGraph) -> str:
    """Deterministic plain-text listing used for goldens and inspection.

    One node per line (index, atomic number, chirality), then one edge per
    line sorted lexicographically (endpoints, bond type, direction).
    """
    lines = [f"nodes {g.num_nodes} edges {g.num_edges}"]
    for i, node in enumerate(g.nodes):
        lines.append(f"{i} {node.atomic_number} {node.chirality.name.lower()}")
    for e in sorted(g.edges, key=BondEdge.sort_key):
        lines.append(
            f"{e.u} {e.v} {e.bond_type.name.lower()} {e.direction.name.lower()}"
        )
    return "\n".join(lines)
