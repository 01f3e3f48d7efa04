"""Cell structure on the post-critical set and its glued refinements.

The level-0 vertex set is the post-critical set (optionally closed under
rotations). Level k arises from m+n copies of level k-1 glued along the
images of the critical angles; vertices at every level are plain integer
ids, with copy maps and inclusion maps recorded explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Mapping, Optional, Sequence

from .angles import (Angle, AngleContext, cell_index, critical_angles,
                     make_context, phi_n, post_critical_set, rotate,
                     symmetrized_set, validate_ms)
from .errors import DepthCapError, InvalidMsError, NotInvariantError

DEFAULT_DEPTH_CAP = 12


class DisjointSet:
    """Union-find with path compression; roots chosen as smallest members."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if rx > ry:
            rx, ry = ry, rx
        self.parent[ry] = rx

    def canonical_ids(self) -> tuple[list[int], int]:
        """Map each element to a dense id, numbered in root order."""
        roots = sorted({self.find(x) for x in range(len(self.parent))})
        index = {r: i for i, r in enumerate(roots)}
        return [index[self.find(x)] for x in range(len(self.parent))], len(roots)


@dataclass(frozen=True, eq=False)
class MsStructure:
    """Level-0 data: boundary angles, gluing angles, and cell membership.

    boundary is sorted by circle position. glue_points[i] is the image of
    the i-th critical angle (1-based i, stored 0-based); these are the
    angles along which adjacent copies are glued at the next level.
    """

    ctx: AngleContext
    boundary: tuple[Angle, ...]
    glue_points: tuple[Angle, ...]
    cells: Mapping[Angle, int]
    symmetrized: bool

    @property
    def index(self) -> Mapping[Angle, int]:
        return self._index

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {a: i for i, a in enumerate(self.boundary)})

    @property
    def rotation_closed(self) -> bool:
        bset = set(self.boundary)
        return all(rotate(self.ctx, a, 1) in bset for a in self.boundary)


def build_structure(ctx: AngleContext,
                    symmetrize: Optional[bool] = None) -> MsStructure:
    """Assemble the level-0 structure for a valid context.

    symmetrize=None chooses automatically: the boundary is closed under
    rotations exactly when it has to be, i.e. when gcd(n, m+n) > 1. An
    invalid context (orbit meeting the critical angles) raises InvalidMs.
    """
    report = validate_ms(ctx)
    if not report.valid:
        raise InvalidMsError(
            f"orbit returns to the critical angles: {report.violations}",
            report=report)
    base = post_critical_set(ctx)
    if symmetrize is None:
        symmetrize = gcd(ctx.n, ctx.ring_size) > 1
    boundary = symmetrized_set(ctx, base) if symmetrize else base
    glue = tuple(phi_n(c, ctx.n) for c in critical_angles(ctx))
    cells = {a: cell_index(ctx, a) for a in boundary}
    return MsStructure(ctx=ctx, boundary=boundary, glue_points=glue,
                       cells=cells, symmetrized=symmetrize)


@dataclass(frozen=True)
class GluedVertexSet:
    """Vertex ids of one refinement level with its maps.

    copy_map[i][v] is the level-k id of vertex v of level k-1 placed in copy
    i (0-based copy index). inclusion[x] is the level-k id of level k-1
    vertex x under the canonical inclusion. boundary_ids[b] tracks the
    level-0 boundary all the way up. merges records, for each gluing angle
    index i (0-based), the pair of (copy, parent vertex) slots identified
    and the resulting id.
    """

    level: int
    num_vertices: int
    copy_map: tuple[tuple[int, ...], ...]
    inclusion: tuple[int, ...]
    boundary_ids: tuple[int, ...]
    merges: tuple[tuple[tuple[int, int], tuple[int, int], int], ...]
    representatives: tuple[tuple[int, int], ...] = field(repr=False, default=())


def _level_zero(structure: MsStructure) -> GluedVertexSet:
    nb = len(structure.boundary)
    ident = tuple(range(nb))
    return GluedVertexSet(level=0, num_vertices=nb, copy_map=(),
                          inclusion=ident, boundary_ids=ident, merges=())


def _glue_ids(structure: MsStructure, prev: GluedVertexSet) -> list[int]:
    # level-(k-1) ids of the gluing angles, via the tracked boundary
    return [prev.boundary_ids[structure.index[r]] for r in structure.glue_points]


def _next_level(structure: MsStructure, prev: GluedVertexSet) -> GluedVertexSet:
    ring = structure.ctx.ring_size
    prev_n = prev.num_vertices
    dsu = DisjointSet(ring * prev_n)
    glue = _glue_ids(structure, prev)
    for i in range(ring):
        dsu.union(i * prev_n + glue[i], ((i + 1) % ring) * prev_n + glue[i])
    ids, count = dsu.canonical_ids()
    if count != ring * (prev_n - 1):
        raise AssertionError(
            f"glued vertex count {count} != {ring}*({prev_n}-1)")
    copy_map = tuple(tuple(ids[i * prev_n + v] for v in range(prev_n))
                     for i in range(ring))
    merges = tuple(((i, glue[i]), ((i + 1) % ring, glue[i]),
                    copy_map[i][glue[i]])
                   for i in range(ring))

    if prev.level == 0:
        ctx = structure.ctx
        inclusion = tuple(
            copy_map[structure.cells[a] - 1][structure.index[phi_n(a, ctx.n)]]
            for a in structure.boundary)
    else:
        inclusion = tuple(
            copy_map[j][prev.inclusion[v]]
            for (j, v) in prev.representatives)
    if len(set(inclusion)) != len(inclusion):
        raise AssertionError("inclusion map is not injective")

    reps = [None] * count
    for i in range(ring):
        for v in range(prev_n):
            if reps[copy_map[i][v]] is None:
                reps[copy_map[i][v]] = (i, v)
    boundary_ids = tuple(inclusion[b] for b in prev.boundary_ids)
    return GluedVertexSet(level=prev.level + 1, num_vertices=count,
                          copy_map=copy_map, inclusion=inclusion,
                          boundary_ids=boundary_ids, merges=merges,
                          representatives=tuple(reps))


def level_vertices(structure: MsStructure, k: int,
                   depth_cap: int = DEFAULT_DEPTH_CAP) -> GluedVertexSet:
    """Build the level-k glued vertex set, refusing beyond the depth cap."""
    if k < 0:
        raise ValueError(f"level must be nonnegative, got {k}")
    if k > depth_cap:
        raise DepthCapError(f"level {k} exceeds the depth cap {depth_cap}")
    lv = _level_zero(structure)
    for _ in range(k):
        lv = _next_level(structure, lv)
    return lv


def rotation_action(structure: MsStructure, l: int) -> tuple[int, ...]:
    """Permutation of boundary indices induced by rotation by l/(m+n).

    Requires the boundary to be rotation-closed; otherwise the rotation is
    not an action on this vertex set and NotInvariant is raised.
    """
    perm = []
    for a in structure.boundary:
        b = rotate(structure.ctx, a, l)
        if b not in structure.index:
            raise NotInvariantError(
                f"boundary is not rotation-closed: {a} rotates to {b}, "
                "which is not a boundary angle")
        perm.append(structure.index[b])
    return tuple(perm)


def structure_to_json(structure: MsStructure) -> dict:
    ctx = structure.ctx
    return {
        "ctx": {"n": ctx.n, "m": ctx.m, "theta": str(ctx.theta)},
        "symmetrized": structure.symmetrized,
        "boundary": [str(a) for a in structure.boundary],
        "glue_points": [str(a) for a in structure.glue_points],
        "cells": {str(a): structure.cells[a] for a in structure.boundary},
    }


def structure_from_json(data: dict) -> MsStructure:
    """Rebuild a structure from its JSON form and cross-check the payload."""
    ctx = make_context(int(data["ctx"]["n"]), int(data["ctx"]["m"]),
                       Fraction(data["ctx"]["theta"]))
    structure = build_structure(ctx, symmetrize=bool(data["symmetrized"]))
    stated = [Fraction(a) for a in data["boundary"]]
    actual = [a.as_fraction() for a in structure.boundary]
    if stated != actual:
        raise ValueError("boundary angles in payload do not match the "
                         "structure rebuilt from its context")
    return structure


def levels_to_json(lv: GluedVertexSet) -> dict:
    merges = []
    for (ca, pa), (cb, pb), vid in lv.merges:
        merges.append([ca, pa, vid])
        merges.append([cb, pb, vid])
    return {
        "level": lv.level,
        "num_vertices": lv.num_vertices,
        "merges": merges,
        "inclusion": [[old, new] for old, new in enumerate(lv.inclusion)],
    }
