"""End-to-end wiring: snapshot -> engine -> predicates -> atoms -> tree -> maps.

Rewrite-image predicates are folded into the predicate set until every
rewriter's image of every matched atom lands inside a single atom, which is
what makes label rewriting well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import aptree
from .atoms import AtomSet, compute_atoms
from .bdd import Engine, Predicate
from .behavior import BehaviorMap, compile_behavior_map
from .label_plane import (
    LabelPlane,
    build_label_plane,
    rewrite_image_pred,
    rewrite_preimage_pred,
)
from .model import CompiledNetwork, NetworkSnapshot, compile_network

_MAX_IMAGE_ROUNDS = 100


@dataclass
class Pipeline:
    snapshot: NetworkSnapshot
    engine: Engine
    compiled: CompiledNetwork
    sources: tuple[Predicate, ...]
    atom_set: AtomSet
    tree: aptree.APTree
    bmap: BehaviorMap

    def label_plane(self, agent_key: int = 0) -> LabelPlane:
        return build_label_plane(
            self.atom_set, self.compiled, self.snapshot, agent_key, self.bmap
        )


def close_over_rewrites(
    engine: Engine,
    snapshot: NetworkSnapshot,
    compiled: CompiledNetwork,
) -> tuple[tuple[Predicate, ...], AtomSet]:
    """Grow the predicate set until all rewrite images are atom-contained."""
    sources = list(compiled.all_preds)
    rewriters = [b for b in snapshot.boxes if b.rewrite is not None]
    for _ in range(_MAX_IMAGE_ROUNDS):
        atom_set = compute_atoms(engine, sources)
        added = False
        for box in rewriters:
            match_pred = compiled.rewrite_match[box.id]
            if engine.is_false(match_pred):
                continue
            member_ids = (
                atom_set.order
                if engine.is_true(match_pred)
                else atom_set.members_of(match_pred)
            )
            for aid in member_ids:
                image = rewrite_image_pred(engine, atom_set.pred_of(aid), box.rewrite)
                if engine.is_false(image):
                    continue
                contained = any(
                    engine.implies(image, atom_set.pred_of(i)) for i in atom_set.order
                )
                if contained:
                    continue
                # split the source atom by the preimage of every target the
                # image touches, so each refined cell maps into one atom
                for tid in atom_set.order:
                    if engine.is_false(engine.conj(image, atom_set.pred_of(tid))):
                        continue
                    pre = rewrite_preimage_pred(
                        engine, atom_set.pred_of(tid), box.rewrite
                    )
                    if engine.is_false(pre) or engine.is_true(pre):
                        continue
                    if all(s.node != pre.node for s in sources):
                        sources.append(pre)
                        added = True
        if not added:
            return tuple(sources), atom_set
    raise RuntimeError("rewrite-image closure did not converge")


def build_pipeline(
    snapshot: NetworkSnapshot,
    strategy: str = aptree.GREEDY,
    seed: int = 0,
    engine: Optional[Engine] = None,
) -> Pipeline:
    engine = engine or Engine(snapshot.layout)
    compiled = compile_network(snapshot, engine)
    sources, atom_set = close_over_rewrites(engine, snapshot, compiled)
    tree = aptree.build(engine, atom_set, sources, strategy=strategy, seed=seed)
    bmap = compile_behavior_map(compiled, atom_set, snapshot)
    return Pipeline(snapshot, engine, compiled, sources, atom_set, tree, bmap)
