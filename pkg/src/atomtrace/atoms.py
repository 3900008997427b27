"""Atomic predicates: the coarsest partition of the header space such that
every network predicate is a disjoint union of its blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .bdd import Engine, EngineMismatch, Header, Predicate


class UnknownPredicate(KeyError):
    pass


@dataclass(frozen=True)
class AtomSet:
    """Pairwise-disjoint, jointly-exhaustive atoms plus source membership.

    atoms maps atom id -> predicate; order lists ids in their canonical
    order; membership maps a source predicate's handle to the ids of the
    atoms whose disjunction equals it.  Immutable: refinements return a
    new AtomSet sharing unchanged entries.
    """

    engine: Engine
    atoms: dict[int, Predicate]
    order: tuple[int, ...]
    membership: dict[int, frozenset[int]]
    next_id: int

    def __len__(self) -> int:
        return len(self.order)

    def pred_of(self, atom_id: int) -> Predicate:
        return self.atoms[atom_id]

    def ids(self) -> tuple[int, ...]:
        return self.order

    def members_of(self, p: Predicate) -> frozenset[int]:
        try:
            return self.membership[p.node]
        except KeyError:
            raise UnknownPredicate(f"predicate handle {p.node} has no membership")


def compute_atoms(engine: Engine, preds: Sequence[Predicate]) -> AtomSet:
    """Iterative refinement starting from {true}.

    Each predicate splits every current atom into its inside and outside
    parts, keeping only nonempty ones.  Atom ids follow the final list
    order, which is deterministic in the order of preds.
    """
    for p in preds:
        if p.engine is not engine:
            raise EngineMismatch("predicate from a different engine")
    # each atom carries a bitmask of the predicates it is contained in, so
    # membership falls out of refinement without a second implication pass
    atoms: list[tuple[Predicate, int]] = [(engine.true_, 0)]
    for k, p in enumerate(preds):
        bit = 1 << k
        refined: list[tuple[Predicate, int]] = []
        for a, sig in atoms:
            t = engine.conj(a, p)
            if engine.is_false(t):
                refined.append((a, sig))
            elif t == a:
                refined.append((a, sig | bit))
            else:
                refined.append((t, sig | bit))
                refined.append((engine.diff(a, p), sig))
        atoms = refined
    by_id = {i: a for i, (a, _) in enumerate(atoms)}
    membership = {}
    for k, p in enumerate(preds):
        bit = 1 << k
        membership[p.node] = frozenset(
            i for i, (_, sig) in enumerate(atoms) if sig & bit
        )
    return AtomSet(
        engine=engine,
        atoms=by_id,
        order=tuple(range(len(atoms))),
        membership=membership,
        next_id=len(atoms),
    )


def atom_of_header(atom_set: AtomSet, h: Header) -> int:
    """Reference classifier: linear scan for the unique atom true at h."""
    engine = atom_set.engine
    for i in atom_set.order:
        if engine.eval(atom_set.atoms[i], h):
            return i
    raise AssertionError("atoms are not exhaustive")  # unreachable by invariant


def refine(atom_set: AtomSet, p: Predicate) -> tuple[AtomSet, dict[int, tuple[int, int]]]:
    """Split atoms straddling p; returns the new set and old->(inside, outside) ids.

    Atoms fully inside or outside p keep their ids.  Membership of every
    existing source replaces a split atom by both children (each child is
    contained in the parent, so implication is inherited).
    """
    engine = atom_set.engine
    if p.engine is not engine:
        raise EngineMismatch("predicate from a different engine")
    splits: dict[int, tuple[int, int]] = {}
    atoms = dict(atom_set.atoms)
    order: list[int] = []
    covered: set[int] = set()
    next_id = atom_set.next_id
    for i in atom_set.order:
        a = atoms[i]
        t = engine.conj(a, p)
        if engine.is_false(t):
            order.append(i)
            continue
        if t == a:
            covered.add(i)
            order.append(i)
            continue
        f = engine.diff(a, p)
        ti, fi = next_id, next_id + 1
        next_id += 2
        del atoms[i]
        atoms[ti] = t
        atoms[fi] = f
        splits[i] = (ti, fi)
        covered.add(ti)
        order.extend((ti, fi))
    split_ids = splits.keys()
    membership = {}
    for handle, ids in atom_set.membership.items():
        hit = ids & split_ids
        if hit:
            new_ids = set(ids - hit)
            for i in hit:
                new_ids.update(splits[i])
            membership[handle] = frozenset(new_ids)
        else:
            membership[handle] = ids
    membership[p.node] = frozenset(covered)
    return (
        AtomSet(engine, atoms, tuple(order), membership, next_id),
        splits,
    )


def drop_source(atom_set: AtomSet, p: Predicate) -> AtomSet:
    """Forget a source predicate's membership; the partition is untouched."""
    if p.node not in atom_set.membership:
        raise UnknownPredicate(f"predicate handle {p.node} is not a live source")
    membership = {h: m for h, m in atom_set.membership.items() if h != p.node}
    return AtomSet(
        atom_set.engine, atom_set.atoms, atom_set.order, membership, atom_set.next_id
    )
