"""Network-wide behavior of a classified packet: path, drop point, or loop.

Two implementations of the same semantics live here.  The atom-level path
(compile_behavior_map + trace + identify) is the fast production path; the
raw-header reference simulator walks rules and ACL entries directly and is
used as an independent oracle in tests and checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .atoms import AtomSet, UnknownPredicate, atom_of_header
from .bdd import Engine, FieldConstraint, Header
from .model import Box, NetworkSnapshot, CompiledNetwork


class MissingMembership(KeyError):
    """A compiled predicate is absent from the atom set; pipeline misuse."""


class BadIngress(ValueError):
    pass


@dataclass(frozen=True)
class Hop:
    box: str
    in_port: str
    atom: int  # atom id on the header plane, label on the label plane
    out_port: Optional[str] = None


@dataclass(frozen=True)
class Delivered:
    box: str
    port: str


DROP_REASONS = ("acl_in", "acl_out", "no_route", "rule_drop")


@dataclass(frozen=True)
class Dropped:
    box: str
    reason: str


@dataclass(frozen=True)
class Loop:
    box: str
    atom: int


Disposition = Union[Delivered, Dropped, Loop]


@dataclass(frozen=True)
class BehaviorReport:
    hops: tuple[Hop, ...]
    disposition: Disposition

    def to_json(self) -> dict:
        d = self.disposition
        if isinstance(d, Delivered):
            dj = {"kind": "delivered", "box": d.box, "port": d.port}
        elif isinstance(d, Dropped):
            dj = {"kind": "dropped", "box": d.box, "reason": d.reason}
        else:
            dj = {"kind": "loop", "box": d.box, "atom": d.atom}
        return {
            "hops": [
                {"box": h.box, "in_port": h.in_port, "atom": h.atom, "out_port": h.out_port}
                for h in self.hops
            ],
            "disposition": dj,
        }


@dataclass(frozen=True)
class BehaviorMap:
    """Per-box behavior resolved down to atom ids."""

    port_atoms: dict[tuple[str, str], frozenset[int]]
    drop_atoms: dict[str, frozenset[int]]
    permit_atoms: dict[tuple[str, str, str], frozenset[int]]  # (box, port, dir)
    atom_rewrite: dict[str, dict[int, int]]  # box -> atom -> atom


def compile_behavior_map(
    compiled: CompiledNetwork,
    atom_set: AtomSet,
    snapshot: NetworkSnapshot,
) -> BehaviorMap:
    """Resolve every compiled predicate to the set of atoms it contains.

    Requires the atom set to have been computed over all compiled predicates
    plus every rewrite-image predicate, so rewriter targets land in single
    atoms (see label_plane.rewrite_image).
    """
    engine = compiled.engine

    def members(pred) -> frozenset[int]:
        if engine.is_false(pred):
            return frozenset()
        if engine.is_true(pred):
            return frozenset(atom_set.order)
        try:
            return atom_set.members_of(pred)
        except UnknownPredicate as e:
            raise MissingMembership(str(e)) from e

    port_atoms = {k: members(p) for k, p in compiled.port_preds.items()}
    drop_atoms = {b: members(p) for b, p in compiled.drop_preds.items()}
    permit_atoms = {k: members(p) for k, p in compiled.acl_preds.items()}

    # per-box uniqueness of the outgoing port for each atom
    by_box: dict[str, set[int]] = {}
    for (b, _), ats in port_atoms.items():
        seen = by_box.setdefault(b, set())
        overlap = seen & ats
        assert not overlap, f"box {b}: atoms {overlap} reach two ports"
        seen |= ats

    atom_rewrite: dict[str, dict[int, int]] = {}
    for box in snapshot.boxes:
        if box.rewrite is None:
            continue
        from .label_plane import rewrite_image  # circular at import time otherwise

        match_pred = compiled.rewrite_match[box.id]
        mapping = {}
        for aid in members(match_pred):
            mapping[aid] = rewrite_image(engine, atom_set, box.rewrite, aid)
        atom_rewrite[box.id] = mapping

    return BehaviorMap(port_atoms, drop_atoms, permit_atoms, atom_rewrite)


def trace(
    bmap: BehaviorMap,
    snapshot: NetworkSnapshot,
    atom_id: int,
    ingress: tuple[str, str],
) -> BehaviorReport:
    """Follow a packet of the given atom from an external ingress port.

    Per box: inbound ACL, then the unique forwarding port for the atom,
    then outbound ACL, then label/atom rewrite, then the link.  Loop
    detection keys on (box, atom) because rewriters may legitimately bring
    a packet back to a box with a different atom.
    """
    if ingress not in snapshot.external_ports:
        raise BadIngress(f"{ingress} is not an external port")
    box_map = snapshot.box_map
    link_map = snapshot.link_map
    box_id, in_port = ingress
    atom = atom_id
    hops: list[Hop] = []
    visited: set[tuple[str, int]] = set()

    while True:
        state = (box_id, atom)
        if state in visited:
            hops.append(Hop(box_id, in_port, atom))
            return BehaviorReport(tuple(hops), Loop(box_id, atom))
        visited.add(state)

        permit = bmap.permit_atoms.get((box_id, in_port, "in"))
        if permit is not None and atom not in permit:
            hops.append(Hop(box_id, in_port, atom))
            return BehaviorReport(tuple(hops), Dropped(box_id, "acl_in"))

        out_port = None
        for port in box_map[box_id].ports:
            if atom in bmap.port_atoms[(box_id, port)]:
                out_port = port
                break
        if out_port is None:
            hops.append(Hop(box_id, in_port, atom))
            reason = "rule_drop" if atom in bmap.drop_atoms.get(box_id, ()) else "no_route"
            return BehaviorReport(tuple(hops), Dropped(box_id, reason))

        permit = bmap.permit_atoms.get((box_id, out_port, "out"))
        if permit is not None and atom not in permit:
            hops.append(Hop(box_id, in_port, atom, out_port))
            return BehaviorReport(tuple(hops), Dropped(box_id, "acl_out"))

        hops.append(Hop(box_id, in_port, atom, out_port))

        mapping = bmap.atom_rewrite.get(box_id)
        if mapping is not None and atom in mapping:
            atom = mapping[atom]

        if (box_id, out_port) in snapshot.external_ports:
            return BehaviorReport(tuple(hops), Delivered(box_id, out_port))
        box_id, in_port = link_map[(box_id, out_port)]


def identify(
    tree,
    bmap: BehaviorMap,
    snapshot: NetworkSnapshot,
    h: Header,
    ingress: tuple[str, str],
) -> BehaviorReport:
    """The end-to-end two-stage query: classify then trace."""
    from .aptree import classify

    return trace(bmap, snapshot, classify(tree, h), ingress)


# ---------------------------------------------------------------------------
# Independent raw-header reference simulator (oracle).
# ---------------------------------------------------------------------------


def constraint_matches(layout, c: FieldConstraint, h: Header) -> bool:
    v = layout.field_value(h, c.field)
    if c.kind == "exact":
        return v == c.value
    if c.kind == "prefix":
        w = layout.field_width(c.field)
        return (v >> (w - c.length)) == (c.value >> (w - c.length)) if c.length else True
    if c.kind == "range":
        return c.lo <= v <= c.hi
    raise ValueError(c.kind)


def _match_all(layout, constraints, h) -> bool:
    return all(constraint_matches(layout, c, h) for c in constraints)


def _acl_permits(layout, acl, h) -> bool:
    for entry in acl.entries:
        if _match_all(layout, entry.match, h):
            return entry.verdict == "permit"
    return acl.default == "permit"


def _lookup(layout, box: Box, h: Header):
    """Winning rule action: ('forward', port) | ('rule_drop',) | ('no_route',)."""
    for rule in sorted(box.rules, key=lambda r: -r.priority):
        if _match_all(layout, rule.match, h):
            if rule.out_port is None:
                return ("rule_drop", None)
            return ("forward", rule.out_port)
    return ("no_route", None)


def reference_trace(
    snapshot: NetworkSnapshot, h: Header, ingress: tuple[str, str]
) -> BehaviorReport:
    """Simulate the packet directly on rules and ACL entries, no predicates.

    Hop atoms are reported as -1; callers compare against the atom-level
    trace by mapping each hop's header to its atom.  Loop detection keys on
    (box, header bits).
    """
    if ingress not in snapshot.external_ports:
        raise BadIngress(f"{ingress} is not an external port")
    layout = snapshot.layout
    box_map = snapshot.box_map
    link_map = snapshot.link_map
    box_id, in_port = ingress
    hops: list[tuple[str, str, Header, Optional[str]]] = []
    visited: set[tuple[str, tuple[int, ...]]] = set()

    while True:
        state = (box_id, h.bits)
        if state in visited:
            hops.append((box_id, in_port, h, None))
            return _raw_report(hops, Loop(box_id, -1))
        visited.add(state)
        box = box_map[box_id]

        acl = _find_acl(box, in_port, "in")
        if acl is not None and not _acl_permits(layout, acl, h):
            hops.append((box_id, in_port, h, None))
            return _raw_report(hops, Dropped(box_id, "acl_in"))

        outcome, out_port = _lookup(layout, box, h)
        if outcome != "forward":
            hops.append((box_id, in_port, h, None))
            return _raw_report(hops, Dropped(box_id, outcome))

        acl = _find_acl(box, out_port, "out")
        if acl is not None and not _acl_permits(layout, acl, h):
            hops.append((box_id, in_port, h, out_port))
            return _raw_report(hops, Dropped(box_id, "acl_out"))

        hops.append((box_id, in_port, h, out_port))

        if box.rewrite is not None and _match_all(layout, box.rewrite.match, h):
            bits = list(h.bits)
            for fname, value in box.rewrite.sets:
                off = layout.field_offset(fname)
                w = layout.field_width(fname)
                for i in range(w):
                    bits[off + i] = (value >> (w - 1 - i)) & 1
            h = Header(tuple(bits))

        if (box_id, out_port) in snapshot.external_ports:
            return _raw_report(hops, Delivered(box_id, out_port))
        box_id, in_port = link_map[(box_id, out_port)]


@dataclass(frozen=True)
class RawReport:
    """Reference-simulator outcome carrying the raw headers seen at each hop."""

    hops: tuple[tuple[str, str, Header, Optional[str]], ...]
    disposition: Disposition


def _raw_report(hops, disposition) -> RawReport:
    return RawReport(tuple(hops), disposition)


def _find_acl(box: Box, port: str, direction: str):
    for acl in box.acls:
        if acl.port == port and acl.direction == direction:
            return acl
    return None


def reports_agree(
    atom_set: AtomSet, atom_report: BehaviorReport, raw_report: RawReport
) -> bool:
    """Compare the atom-level report with the raw oracle, atom by atom."""
    if len(atom_report.hops) != len(raw_report.hops):
        return False
    for hop, (box, in_port, h, out_port) in zip(atom_report.hops, raw_report.hops):
        if (hop.box, hop.in_port, hop.out_port) != (box, in_port, out_port):
            return False
        if hop.atom != atom_of_header(atom_set, h):
            return False
    a, b = atom_report.disposition, raw_report.disposition
    if type(a) is not type(b):
        return False
    if isinstance(a, Delivered):
        return (a.box, a.port) == (b.box, b.port)
    if isinstance(a, Dropped):
        return (a.box, a.reason) == (b.box, b.reason)
    # Loop: the raw simulator cannot name the atom; compare the box and the
    # atom of the final (repeated-state) hop header.
    last_raw = raw_report.hops[-1][2]
    return a.box == b.box and a.atom == atom_of_header(atom_set, last_raw)
