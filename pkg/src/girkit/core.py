"""Shared domain types for the middle-end: names, qualifiers, read/write
effects, qualified types, typing contexts, dependency maps, term and graph
ASTs, and stores.

Everything here is an immutable value after construction; the algebra on
qualifiers and dependency maps lives next to the types it operates on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class GirError(Exception):
    """Base class for every user-facing error in the kit."""

    code = "E000"

    def __init__(self, message: str, span: "Span | None" = None, **payload):
        super().__init__(message)
        self.message = message
        self.span = span
        self.payload = payload


class UnboundName(GirError):
    code = "E001"


class TypeMismatch(GirError):
    code = "E002"


class QualifierEscape(GirError):
    code = "E003"


class OverlapViolation(GirError):
    code = "E004"


class EffectEscape(GirError):
    code = "E005"


class DepMismatch(GirError):
    code = "E006"


class DependencyViolation(GirError):
    code = "E007"


class Stuck(GirError):
    code = "E008"


class FuelExhausted(GirError):
    code = "E009"


class SideConditionFailed(GirError):
    code = "E010"


class CyclicDependency(GirError):
    code = "E011"


class GenerationExhausted(GirError):
    code = "E012"


class ParseError(GirError):
    code = "E013"


class JsonSchemaError(GirError):
    code = "E014"


@dataclass(frozen=True)
class Span:
    start: int
    end: int


# ---------------------------------------------------------------------------
# Names
# ---------------------------------------------------------------------------

VAR = 0
LOC = 1


@dataclass(frozen=True, slots=True)
class Name:
    """An interned name: a program variable (VAR) or store location (LOC).

    Equality and ordering are by (id, kind); the display text is cosmetic.
    Canonical order is interning order, which makes every iteration in the
    kit deterministic.
    """

    kind: int
    id: int
    text: str = field(compare=False)
    _hash: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):  # hash is a hot path: compute once
        object.__setattr__(self, "_hash", hash((self.kind, self.id)))

    def __hash__(self):
        return self._hash

    @property
    def is_var(self) -> bool:
        return self.kind == VAR

    @property
    def is_loc(self) -> bool:
        return self.kind == LOC

    def sort_key(self):
        return (self.id, self.kind)

    def __lt__(self, other: "Name"):
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        tag = "v" if self.kind == VAR else "l"
        return f"{self.text}#{tag}{self.id}"

    def pretty(self) -> str:
        """Parseable display form (unique per name)."""
        if self.kind == LOC and self.text == "w":
            return "w"
        base = self.text if self.text else ("x" if self.kind == VAR else "l")
        return f"{base}_{self.id}"


class NameSupply:
    """Monotone fresh-name source; ids are unique across vars and locs."""

    def __init__(self, start: int = 0):
        self._next = start

    def _take(self) -> int:
        n = self._next
        self._next += 1
        return n

    def var(self, text: str = "x") -> Name:
        return Name(VAR, self._take(), text)

    def loc(self, text: str = "l") -> Name:
        return Name(LOC, self._take(), text)

    def fresh_like(self, n: Name) -> Name:
        return Name(n.kind, self._take(), n.text)

    @property
    def next_id(self) -> int:
        return self._next

    def reserve(self, upto: int) -> None:
        """Make sure future ids are all >= upto (used by deserializers)."""
        if upto > self._next:
            self._next = upto


# ---------------------------------------------------------------------------
# Qualifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Qualifier:
    """A finite set of names; iteration follows canonical name order."""

    members: frozenset = frozenset()

    @staticmethod
    def of(*names: Name) -> "Qualifier":
        return Qualifier(frozenset(names))

    @staticmethod
    def from_iter(names: Iterable[Name]) -> "Qualifier":
        return Qualifier(frozenset(names))

    def __iter__(self) -> Iterator[Name]:
        return iter(sorted(self.members))

    def __contains__(self, n: Name) -> bool:
        return n in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __bool__(self) -> bool:
        return bool(self.members)

    def __or__(self, other: "Qualifier") -> "Qualifier":
        return Qualifier(self.members | other.members)

    def __and__(self, other: "Qualifier") -> "Qualifier":
        return Qualifier(self.members & other.members)

    def __sub__(self, other: "Qualifier") -> "Qualifier":
        return Qualifier(self.members - other.members)

    def __le__(self, other: "Qualifier") -> bool:
        return self.members <= other.members

    def add(self, *names: Name) -> "Qualifier":
        return Qualifier(self.members | frozenset(names))

    def remove(self, *names: Name) -> "Qualifier":
        return Qualifier(self.members - frozenset(names))

    def isdisjoint(self, other: "Qualifier") -> bool:
        return self.members.isdisjoint(other.members)

    def __repr__(self):
        return "{" + ",".join(repr(n) for n in self) + "}"


EMPTY_QUAL = Qualifier()


def subst_qual(q: Qualifier, x: Name, p: Qualifier) -> Qualifier:
    """q[p/x]: replace x by the whole set p when x is a member."""
    if x in q:
        return (q - Qualifier.of(x)) | p
    return q


# ---------------------------------------------------------------------------
# Read/write effects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RwEffect:
    """An effect split into read and write footprints.

    The single-set effect of the base system is recovered as the flat view
    reads ∪ writes; sequencing is componentwise union (flow-insensitive).
    """

    reads: Qualifier = EMPTY_QUAL
    writes: Qualifier = EMPTY_QUAL

    @staticmethod
    def read(q: Qualifier) -> "RwEffect":
        return RwEffect(reads=q)

    @staticmethod
    def write(q: Qualifier) -> "RwEffect":
        return RwEffect(writes=q)

    @property
    def flat(self) -> Qualifier:
        return self.reads | self.writes

    @property
    def is_pure(self) -> bool:
        return not self.reads and not self.writes

    def seq(self, other: "RwEffect") -> "RwEffect":
        """Sequential composition e1 ▷ e2 (componentwise union)."""
        return RwEffect(self.reads | other.reads, self.writes | other.writes)

    def subst(self, x: Name, p: Qualifier) -> "RwEffect":
        return RwEffect(subst_qual(self.reads, x, p), subst_qual(self.writes, x, p))

    def included_in(self, other: "RwEffect") -> bool:
        return self.reads <= other.reads and self.writes <= other.writes

    def __repr__(self):
        return f"(r:{self.reads!r};w:{self.writes!r})"


PURE = RwEffect()


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

UNIT_T = "Unit"
BOOL_T = "Bool"
INT_T = "Int"
ALLOC_T = "Alloc"
BASE_NAMES = (UNIT_T, BOOL_T, INT_T, ALLOC_T)


@dataclass(frozen=True)
class BaseTy:
    name: str  # one of BASE_NAMES

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class RefTy:
    payload: BaseTy  # references hold base values only

    def __repr__(self):
        return f"Ref[{self.payload!r}]"


@dataclass(frozen=True)
class FunTy:
    param: Name
    param_qt: "QualifiedType"
    latent: RwEffect
    result_qt: "QualifiedType"

    def __repr__(self):
        return (f"(({self.param!r}: {self.param_qt!r}) =>"
                f"{self.latent!r} {self.result_qt!r})")


Ty = Union[BaseTy, RefTy, FunTy]

TY_UNIT = BaseTy(UNIT_T)
TY_BOOL = BaseTy(BOOL_T)
TY_INT = BaseTy(INT_T)
TY_ALLOC = BaseTy(ALLOC_T)


@dataclass(frozen=True)
class QualifiedType:
    ty: Ty
    qual: Qualifier = EMPTY_QUAL

    def __repr__(self):
        return f"{self.ty!r}^{self.qual!r}"


def subst_qual_ty(ty: Ty, x: Name, p: Qualifier) -> Ty:
    if isinstance(ty, (BaseTy, RefTy)):
        return ty
    if isinstance(ty, FunTy):
        if ty.param == x:  # shadowed (Barendregt makes this unreachable)
            return ty
        return FunTy(ty.param,
                     subst_qual_qt(ty.param_qt, x, p),
                     ty.latent.subst(x, p),
                     subst_qual_qt(ty.result_qt, x, p))
    raise TypeError(ty)


def subst_qual_qt(qt: QualifiedType, x: Name, p: Qualifier) -> QualifiedType:
    return QualifiedType(subst_qual_ty(qt.ty, x, p), subst_qual(qt.qual, x, p))


def ty_free_names(ty: Ty) -> frozenset:
    """Names occurring in qualifier positions inside a type (minus binders)."""
    if isinstance(ty, (BaseTy, RefTy)):
        return frozenset()
    if isinstance(ty, FunTy):
        inner = (qt_free_names(ty.param_qt)
                 | ty.latent.flat.members
                 | qt_free_names(ty.result_qt))
        return frozenset(inner - {ty.param})
    raise TypeError(ty)


def qt_free_names(qt: QualifiedType) -> frozenset:
    return ty_free_names(qt.ty) | qt.qual.members


# ---------------------------------------------------------------------------
# Typing contexts
# ---------------------------------------------------------------------------

class TypingContext:
    """Immutable triple (gamma, sigma, phi): variable and location bindings
    plus the current observation filter."""

    __slots__ = ("gamma", "sigma", "phi")

    def __init__(self, gamma=None, sigma=None, phi: Qualifier = EMPTY_QUAL):
        self.gamma: dict = dict(gamma or {})
        self.sigma: dict = dict(sigma or {})
        self.phi = phi

    def lookup(self, n: Name) -> QualifiedType:
        table = self.gamma if n.is_var else self.sigma
        qt = table.get(n)
        if qt is None:
            raise UnboundName(f"unbound name {n!r}", name=n)
        return qt

    def __contains__(self, n: Name) -> bool:
        return n in (self.gamma if n.is_var else self.sigma)

    def domain(self) -> Iterator[Name]:
        yield from self.gamma
        yield from self.sigma

    def domain_qual(self) -> Qualifier:
        return Qualifier.from_iter(self.domain())

    def bind_var(self, x: Name, qt: QualifiedType) -> "TypingContext":
        g = dict(self.gamma)
        g[x] = qt
        return TypingContext(g, self.sigma, self.phi)

    def bind_loc(self, loc: Name, qt: QualifiedType) -> "TypingContext":
        s = dict(self.sigma)
        s[loc] = qt
        return TypingContext(self.gamma, s, self.phi)

    def with_phi(self, phi: Qualifier) -> "TypingContext":
        return TypingContext(self.gamma, self.sigma, phi)

    def observing(self, *names: Name) -> "TypingContext":
        return self.with_phi(self.phi.add(*names))

    def __repr__(self):
        return (f"Ctx(gamma={self.gamma!r}, sigma={self.sigma!r}, "
                f"phi={self.phi!r})")


def saturate(q: Qualifier, ctx: TypingContext) -> Qualifier:
    """Transitive reachability closure q* through context-declared
    qualifiers: least superset of q closed under member lookup."""
    seen = set(q.members)
    frontier = list(q.members)
    while frontier:
        x = frontier.pop()
        qt = ctx.lookup(x)
        for y in qt.qual.members:
            if y not in seen:
                seen.add(y)
                frontier.append(y)
    return Qualifier(frozenset(seen))


def saturate_effect(e: RwEffect, ctx: TypingContext) -> RwEffect:
    return RwEffect(saturate(e.reads, ctx), saturate(e.writes, ctx))


def overlap(p: Qualifier, q: Qualifier, ctx: TypingContext) -> Qualifier:
    """Permitted overlap p* ∩ q*."""
    return saturate(p, ctx) & saturate(q, ctx)


# ---------------------------------------------------------------------------
# Dependency maps
# ---------------------------------------------------------------------------

HARD = "hard"  # every effect yields a hard (must-run-after) dependency
RW = "rw"      # reads give hard deps, writes soft (skippable) deps


@dataclass(frozen=True)
class DepMap:
    """Hard (name -> name) and soft (name -> name set) dependency entries.

    Normal form: soft entries are dropped when empty — this makes
    structural equality the right notion for roundtrip tests.  A key's
    soft set may repeat that key's hard target: discarding such entries
    would make sequential update non-associative (the redundancy becomes
    load-bearing once a later update overrides the hard target).
    """

    hard: dict = field(default_factory=dict)
    soft: dict = field(default_factory=dict)

    @staticmethod
    def make(hard=None, soft=None) -> "DepMap":
        h = dict(hard or {})
        s = {}
        for k, targets in (soft or {}).items():
            t = frozenset(targets)
            if t:
                s[k] = t
        return DepMap(h, s)

    @property
    def is_empty(self) -> bool:
        return not self.hard and not self.soft

    def domain(self) -> frozenset:
        return frozenset(self.hard) | frozenset(self.soft)

    def targets(self) -> frozenset:
        out = set(self.hard.values())
        for t in self.soft.values():
            out |= t
        return frozenset(out)

    def all_targets_of(self, key: Name) -> frozenset:
        out = set()
        if key in self.hard:
            out.add(self.hard[key])
        out |= self.soft.get(key, frozenset())
        return frozenset(out)

    def __repr__(self):
        h = ", ".join(f"{k!r}->{v!r}" for k, v in sorted(self.hard.items()))
        s = ", ".join(f"{k!r}->{sorted(v)!r}" for k, v in sorted(self.soft.items()))
        return f"Dep[{h}|{s}]"


EMPTY_DEP = DepMap()


def dep_update(d1: DepMap, d2: DepMap) -> DepMap:
    """d1 , d2 — right-biased on hard entries, per-key union on soft."""
    hard = dict(d1.hard)
    hard.update(d2.hard)
    soft = dict(d1.soft)
    for k, t in d2.soft.items():
        soft[k] = soft.get(k, frozenset()) | t
    return DepMap.make(hard, soft)


def dep_restrict(d: DepMap, e: RwEffect, ctx: TypingContext,
                 regime: str = RW) -> DepMap:
    """Restrict to an effect's saturated footprint.

    RW: reads pull hard entries; writes route hard entries (as singleton
    soft sets) merged with soft entries. HARD: the flat footprint pulls
    hard entries only.
    """
    if regime == HARD:
        q = saturate(e.flat, ctx).members
        return DepMap.make({k: v for k, v in d.hard.items() if k in q}, {})
    q = saturate(e.reads, ctx).members
    p = saturate(e.writes, ctx).members
    hard = {k: v for k, v in d.hard.items() if k in q}
    soft = {}
    for k in p:
        t = frozenset()
        if k in d.hard:
            t |= {d.hard[k]}
        t |= d.soft.get(k, frozenset())
        if t:
            soft[k] = t
    return DepMap.make(hard, soft)


def dep_restrict_names(d: DepMap, names: Qualifier) -> DepMap:
    """Domain restriction Δ|α by a plain name set, both components."""
    keep = names.members
    return DepMap.make({k: v for k, v in d.hard.items() if k in keep},
                       {k: v for k, v in d.soft.items() if k in keep})


def dep_remove_targets(d: DepMap, names: frozenset) -> DepMap:
    """Δ − α: drop entries whose target falls in α (soft sets shrink)."""
    hard = {k: v for k, v in d.hard.items() if v not in names}
    soft = {k: (v - names) for k, v in d.soft.items()}
    return DepMap.make(hard, soft)


def dep_remove_keys(d: DepMap, names: frozenset) -> DepMap:
    """Δ \\ α: drop entries whose key falls in α."""
    return DepMap.make({k: v for k, v in d.hard.items() if k not in names},
                       {k: v for k, v in d.soft.items() if k not in names})


def dep_rewire(d1: DepMap, x: Name, d2: DepMap) -> DepMap:
    """d1[x ⇝ d2]: reroute entries of d1 targeting x through d2 (entries
    with no route in d2 are dropped)."""
    hard = {}
    for k, v in d1.hard.items():
        if v == x:
            if k in d2.hard:
                hard[k] = d2.hard[k]
        else:
            hard[k] = v
    soft = {}
    for k, t in d1.soft.items():
        if x in t:
            t = (t - {x}) | d2.soft.get(k, frozenset())
        if t:
            soft[k] = t
    return DepMap.make(hard, soft)


def dep_dom_subst(d: DepMap, q: Qualifier, x: Name) -> DepMap:
    """Δ[q/x] on the domain: x's entry is removed and fanned out to every
    member of q (pointing at x's former target/set)."""
    hard = {k: v for k, v in d.hard.items() if k != x}
    soft = {k: v for k, v in d.soft.items() if k != x}
    if x in d.hard:
        for y in q.members:
            hard[y] = d.hard[x]
    if x in d.soft:
        for y in q.members:
            soft[y] = soft.get(y, frozenset()) | d.soft[x]
    return DepMap.make(hard, soft)


def dep_last_use(d: DepMap, x: Name, e: RwEffect, ctx: TypingContext,
                 regime: str = RW) -> DepMap:
    """Record x as the latest node touching e's footprint (the Δ update a
    let performs before checking its continuation).

    HARD: every used name's hard target becomes x. RW: written names point
    hard at x with soft reset; read names append x to their soft set.
    """
    if regime == HARD:
        used = saturate(e.flat, ctx).members
        hard = dict(d.hard)
        for k in used:
            hard[k] = x
        hard[x] = x
        return DepMap.make(hard, d.soft)
    reads = saturate(e.reads, ctx).members
    writes = saturate(e.writes, ctx).members
    hard = dict(d.hard)
    soft = dict(d.soft)
    for k in writes:
        hard[k] = x
        soft[k] = frozenset()
    hard[x] = x
    soft[x] = frozenset()
    for k in reads:
        soft[k] = soft.get(k, frozenset()) | {x}
    return DepMap.make(hard, soft)


def points_to(names: Iterable[Name], z: Name) -> DepMap:
    """↦z: every given name (and z itself) hard-depends on z."""
    hard = {n: z for n in names}
    hard[z] = z
    return DepMap.make(hard, {})


def dep_lift(d: DepMap, names: Iterable[Name], z: Name) -> DepMap:
    """Δ↑^z: complete the map with n↦z for context names missing a hard
    entry (used when substituting under a rebased context)."""
    hard = dict(d.hard)
    for n in names:
        if n not in hard:
            hard[n] = z
    return DepMap.make(hard, d.soft)


def dep_submap(d1: DepMap, d2: DepMap) -> bool:
    """d1 ⊑ d2 modulo normal form: every hard entry of d1 appears in d2;
    every soft target of d1 appears among d2's targets for that key."""
    for k, v in d1.hard.items():
        if d2.hard.get(k) != v:
            return False
    for k, t in d1.soft.items():
        if not t <= d2.all_targets_of(k):
            return False
    return True


def dep_add_hard(d: DepMap, key: Name, target: Name) -> DepMap:
    hard = dict(d.hard)
    hard[key] = target
    return DepMap.make(hard, d.soft)


def dep_flatten(d: DepMap) -> dict:
    """Per-key set of all targets, hard and soft together."""
    out = {}
    for k in d.domain():
        out[k] = d.all_targets_of(k)
    return out


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

class _Unit:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "unit"


class _Omega:
    """The allocation capability constant."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "omega"


UNIT_V = _Unit()
OMEGA = _Omega()


def const_base(value) -> BaseTy:
    if value is UNIT_V:
        return TY_UNIT
    if value is OMEGA:
        return TY_ALLOC
    if isinstance(value, bool):
        return TY_BOOL
    if isinstance(value, int):
        return TY_INT
    raise TypeError(f"not a constant: {value!r}")


def const_text(value) -> str:
    if value is UNIT_V:
        return "unit"
    if value is OMEGA:
        return "omega"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# ---------------------------------------------------------------------------
# Direct-style terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cst:
    value: object
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Nm:
    name: Name
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Lam:
    param: Name
    param_qt: QualifiedType
    latent: RwEffect
    body: "Term"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class RefNew:
    cap: "Term"
    init: "Term"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Deref:
    ref: "Term"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign:
    ref: "Term"
    value: "Term"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Let:
    var: Name
    bound: "Term"
    body: "Term"
    span: Optional[Span] = field(default=None, compare=False)


Term = Union[Cst, Nm, Lam, App, RefNew, Deref, Assign, Let]


def term_free_names(t: Term) -> frozenset:
    """Free names of a term, including names mentioned inside type
    annotations (qualifiers on lambda parameters and latent effects)."""
    if isinstance(t, Cst):
        return frozenset()
    if isinstance(t, Nm):
        return frozenset((t.name,))
    if isinstance(t, Lam):
        inner = (term_free_names(t.body)
                 | qt_free_names(t.param_qt)
                 | t.latent.flat.members)
        return frozenset(inner - {t.param})
    if isinstance(t, App):
        return term_free_names(t.fn) | term_free_names(t.arg)
    if isinstance(t, RefNew):
        return term_free_names(t.cap) | term_free_names(t.init)
    if isinstance(t, Deref):
        return term_free_names(t.ref)
    if isinstance(t, Assign):
        return term_free_names(t.ref) | term_free_names(t.value)
    if isinstance(t, Let):
        return (term_free_names(t.bound)
                | frozenset(term_free_names(t.body) - {t.var}))
    raise TypeError(t)


def _rename_qual(q: Qualifier, mapping: dict) -> Qualifier:
    if not any(n in mapping for n in q.members):
        return q
    return Qualifier(frozenset(mapping.get(n, n) for n in q.members))


def _rename_effect(e: RwEffect, mapping: dict) -> RwEffect:
    return RwEffect(_rename_qual(e.reads, mapping), _rename_qual(e.writes, mapping))


def _rename_ty(ty: Ty, mapping: dict) -> Ty:
    if isinstance(ty, (BaseTy, RefTy)):
        return ty
    if isinstance(ty, FunTy):
        inner = {k: v for k, v in mapping.items() if k != ty.param}
        return FunTy(ty.param,
                     _rename_qt(ty.param_qt, inner),
                     _rename_effect(ty.latent, inner),
                     _rename_qt(ty.result_qt, inner))
    raise TypeError(ty)


def _rename_qt(qt: QualifiedType, mapping: dict) -> QualifiedType:
    return QualifiedType(_rename_ty(qt.ty, mapping), _rename_qual(qt.qual, mapping))


def rename_term(t: Term, mapping: dict) -> Term:
    """Capture-avoiding renaming of free names (Barendregt inputs make the
    shadowing guard a formality)."""
    if not mapping:
        return t
    if isinstance(t, Cst):
        return t
    if isinstance(t, Nm):
        n = mapping.get(t.name)
        return Nm(n, t.span) if n is not None else t
    if isinstance(t, Lam):
        inner = {k: v for k, v in mapping.items() if k != t.param}
        return Lam(t.param, _rename_qt(t.param_qt, inner),
                   _rename_effect(t.latent, inner),
                   rename_term(t.body, inner), t.span)
    if isinstance(t, App):
        return App(rename_term(t.fn, mapping), rename_term(t.arg, mapping), t.span)
    if isinstance(t, RefNew):
        return RefNew(rename_term(t.cap, mapping), rename_term(t.init, mapping), t.span)
    if isinstance(t, Deref):
        return Deref(rename_term(t.ref, mapping), t.span)
    if isinstance(t, Assign):
        return Assign(rename_term(t.ref, mapping), rename_term(t.value, mapping), t.span)
    if isinstance(t, Let):
        inner = {k: v for k, v in mapping.items() if k != t.var}
        return Let(t.var, rename_term(t.bound, mapping),
                   rename_term(t.body, inner), t.span)
    raise TypeError(t)


def alpha_rename_term(t: Term, supply: NameSupply) -> Term:
    """Freshen every binder so bound names are globally unique."""
    def go(t: Term, env: dict) -> Term:
        if isinstance(t, Cst):
            return t
        if isinstance(t, Nm):
            return Nm(env.get(t.name, t.name), t.span)
        if isinstance(t, Lam):
            fresh = supply.fresh_like(t.param)
            env2 = dict(env)
            env2[t.param] = fresh
            return Lam(fresh, _rename_qt(t.param_qt, env),
                       _rename_effect(t.latent, env), go(t.body, env2), t.span)
        if isinstance(t, App):
            return App(go(t.fn, env), go(t.arg, env), t.span)
        if isinstance(t, RefNew):
            return RefNew(go(t.cap, env), go(t.init, env), t.span)
        if isinstance(t, Deref):
            return Deref(go(t.ref, env), t.span)
        if isinstance(t, Assign):
            return Assign(go(t.ref, env), go(t.value, env), t.span)
        if isinstance(t, Let):
            fresh = supply.fresh_like(t.var)
            env2 = dict(env)
            env2[t.var] = fresh
            return Let(fresh, go(t.bound, env), go(t.body, env2), t.span)
        raise TypeError(t)
    return go(t, {})


def alpha_equal_terms(t1: Term, t2: Term) -> bool:
    """Structural equality up to consistent renaming of bound names."""
    def go(a, b, env):
        if type(a) is not type(b):
            return False
        if isinstance(a, Cst):
            return a.value == b.value and type(a.value) is type(b.value)
        if isinstance(a, Nm):
            return env.get(a.name, a.name) == b.name
        if isinstance(a, Lam):
            env2 = dict(env)
            env2[a.param] = b.param
            return (_rename_qt(a.param_qt, env) == _rename_qt(b.param_qt, {})
                    and _rename_effect(a.latent, env) == b.latent
                    and go(a.body, b.body, env2))
        if isinstance(a, App):
            return go(a.fn, b.fn, env) and go(a.arg, b.arg, env)
        if isinstance(a, RefNew):
            return go(a.cap, b.cap, env) and go(a.init, b.init, env)
        if isinstance(a, Deref):
            return go(a.ref, b.ref, env)
        if isinstance(a, Assign):
            return go(a.ref, b.ref, env) and go(a.value, b.value, env)
        if isinstance(a, Let):
            if not go(a.bound, b.bound, env):
                return False
            env2 = dict(env)
            env2[a.var] = b.var
            return go(a.body, b.body, env2)
        raise TypeError(a)
    return go(t1, t2, {})


# ---------------------------------------------------------------------------
# Graph terms (monadic normal form / graph IR)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NCst:
    value: object


@dataclass(frozen=True)
class NLam:
    param: Name
    param_qt: QualifiedType
    latent: RwEffect
    body: "GraphTerm"
    body_dep: Optional[DepMap] = None  # latent dependency of the body


@dataclass(frozen=True)
class NApp:
    fn: Name
    arg: Name


@dataclass(frozen=True)
class NRef:
    cap: Name
    init: Name


@dataclass(frozen=True)
class NDeref:
    ref: Name


@dataclass(frozen=True)
class NAssign:
    ref: Name
    value: Name


GraphNode = Union[NCst, NLam, NApp, NRef, NDeref, NAssign]


@dataclass(frozen=True)
class GName:
    name: Name


@dataclass(frozen=True)
class GLet:
    var: Name
    binding: "Binding"
    body: "GraphTerm"
    dep: Optional[DepMap] = None  # dependency annotation on the binding


GraphTerm = Union[GName, GLet]
Binding = Union[GraphNode, GName, GLet]


def is_node(b: Binding) -> bool:
    return isinstance(b, (NCst, NLam, NApp, NRef, NDeref, NAssign))


def graph_free_names(g: Union[GraphTerm, GraphNode]) -> frozenset:
    if isinstance(g, GName):
        return frozenset((g.name,))
    if isinstance(g, GLet):
        return (graph_free_names(g.binding)
                | frozenset(graph_free_names(g.body) - {g.var}))
    if isinstance(g, NCst):
        return frozenset()
    if isinstance(g, NLam):
        inner = (graph_free_names(g.body)
                 | qt_free_names(g.param_qt)
                 | g.latent.flat.members)
        return frozenset(inner - {g.param})
    if isinstance(g, NApp):
        return frozenset((g.fn, g.arg))
    if isinstance(g, NRef):
        return frozenset((g.cap, g.init))
    if isinstance(g, NDeref):
        return frozenset((g.ref,))
    if isinstance(g, NAssign):
        return frozenset((g.ref, g.value))
    raise TypeError(g)


def _rename_dep(d: Optional[DepMap], mapping: dict) -> Optional[DepMap]:
    if d is None or not mapping:
        return d
    hard = {mapping.get(k, k): mapping.get(v, v) for k, v in d.hard.items()}
    soft = {mapping.get(k, k): frozenset(mapping.get(v, v) for v in t)
            for k, t in d.soft.items()}
    return DepMap.make(hard, soft)


def rename_graph(g, mapping: dict, rename_deps: bool = False):
    """Rename free names in a graph term/node. By default dependency
    annotations are untouched (their updates go through rewiring and domain
    substitution); rename_deps=True renames them too (pure α-renaming)."""
    if not mapping:
        return g
    if isinstance(g, GName):
        return GName(mapping.get(g.name, g.name))
    if isinstance(g, GLet):
        inner = {k: v for k, v in mapping.items() if k != g.var}
        dep = _rename_dep(g.dep, mapping) if rename_deps else g.dep
        return GLet(g.var, rename_graph(g.binding, mapping, rename_deps),
                    rename_graph(g.body, inner, rename_deps), dep)
    if isinstance(g, NCst):
        return g
    if isinstance(g, NLam):
        inner = {k: v for k, v in mapping.items() if k != g.param}
        dep = _rename_dep(g.body_dep, inner) if rename_deps else g.body_dep
        return NLam(g.param, _rename_qt(g.param_qt, inner),
                    _rename_effect(g.latent, inner),
                    rename_graph(g.body, inner, rename_deps), dep)
    if isinstance(g, NApp):
        return NApp(mapping.get(g.fn, g.fn), mapping.get(g.arg, g.arg))
    if isinstance(g, NRef):
        return NRef(mapping.get(g.cap, g.cap), mapping.get(g.init, g.init))
    if isinstance(g, NDeref):
        return NDeref(mapping.get(g.ref, g.ref))
    if isinstance(g, NAssign):
        return NAssign(mapping.get(g.ref, g.ref), mapping.get(g.value, g.value))
    raise TypeError(g)


def alpha_equal_graphs(g1, g2, compare_deps: bool = False) -> bool:
    def qrename(q, env):
        return _rename_qual(q, env)

    def go(a, b, env):
        if isinstance(a, GName) and isinstance(b, GName):
            return env.get(a.name, a.name) == b.name
        if type(a) is not type(b):
            return False
        if isinstance(a, GLet):
            if not go(a.binding, b.binding, env):
                return False
            if compare_deps and _rename_dep(a.dep, env) != b.dep:
                return False
            env2 = dict(env)
            env2[a.var] = b.var
            return go(a.body, b.body, env2)
        if isinstance(a, NCst):
            return a.value == b.value and type(a.value) is type(b.value)
        if isinstance(a, NLam):
            env2 = dict(env)
            env2[a.param] = b.param
            if _rename_qt(a.param_qt, env) != _rename_qt(b.param_qt, {}):
                return False
            if _rename_effect(a.latent, env) != b.latent:
                return False
            if compare_deps and _rename_dep(a.body_dep, env2) != b.body_dep:
                return False
            return go(a.body, b.body, env2)
        if isinstance(a, NApp):
            return (env.get(a.fn, a.fn) == b.fn
                    and env.get(a.arg, a.arg) == b.arg)
        if isinstance(a, NRef):
            return (env.get(a.cap, a.cap) == b.cap
                    and env.get(a.init, a.init) == b.init)
        if isinstance(a, NDeref):
            return env.get(a.ref, a.ref) == b.ref
        if isinstance(a, NAssign):
            return (env.get(a.ref, a.ref) == b.ref
                    and env.get(a.value, a.value) == b.value)
        raise TypeError(a)
    return go(g1, g2, {})


# ---------------------------------------------------------------------------
# Stores and runtime configurations
# ---------------------------------------------------------------------------

@dataclass
class Capability:
    """Store entry for the allocation capability ω."""

    def __repr__(self):
        return "omega"


@dataclass
class Cell:
    """A mutable reference cell; content is a constant (direct semantics)
    or a location name (store-allocated semantics)."""

    content: object


@dataclass
class SavedCst:
    value: object


@dataclass
class SavedLamTerm:
    lam: Lam


@dataclass
class SavedLamGraph:
    lam: NLam


StoreEntry = Union[Capability, Cell, SavedCst, SavedLamTerm, SavedLamGraph]


class Store:
    """Allocation-ordered mapping from locations to entries. Entry 0 always
    binds the capability w = ω."""

    def __init__(self, supply: Optional[NameSupply] = None):
        self.supply = supply or NameSupply()
        self.entries: dict = {}
        self.order: list = []
        self.w = self.supply.loc("w")
        self._put(self.w, Capability())

    def _put(self, loc: Name, entry: StoreEntry) -> None:
        self.entries[loc] = entry
        self.order.append(loc)

    def alloc(self, entry: StoreEntry, text: str = "l") -> Name:
        loc = self.supply.loc(text)
        self._put(loc, entry)
        return loc

    def __contains__(self, loc: Name) -> bool:
        return loc in self.entries

    def __getitem__(self, loc: Name) -> StoreEntry:
        try:
            return self.entries[loc]
        except KeyError:
            raise UnboundName(f"location {loc!r} not in store", name=loc)

    def locations(self) -> list:
        return list(self.order)

    def copy(self) -> "Store":
        s = Store.__new__(Store)
        s.supply = NameSupply(self.supply.next_id)
        s.entries = {}
        s.order = list(self.order)
        s.w = self.w
        for loc, e in self.entries.items():
            s.entries[loc] = Cell(e.content) if isinstance(e, Cell) else e
        return s

    def typing(self) -> TypingContext:
        """Store typing: capability at Alloc^∅, cells at Ref B^∅, saved
        introductions at their value types; phi = the whole store domain."""
        ctx = TypingContext()
        for loc in self.order:
            e = self.entries[loc]
            if isinstance(e, Capability):
                ctx = ctx.bind_loc(loc, QualifiedType(TY_ALLOC))
            elif isinstance(e, Cell):
                content = e.content
                if isinstance(content, Name):
                    inner = self.entries.get(content)
                    base = (const_base(inner.value)
                            if isinstance(inner, SavedCst) else TY_INT)
                else:
                    base = const_base(content)
                ctx = ctx.bind_loc(loc, QualifiedType(RefTy(base)))
            elif isinstance(e, SavedCst):
                ctx = ctx.bind_loc(loc, QualifiedType(const_base(e.value)))
            elif isinstance(e, SavedLamTerm):
                lam = e.lam
                ctx = ctx.bind_loc(loc, QualifiedType(
                    FunTy(lam.param, lam.param_qt, lam.latent,
                          QualifiedType(TY_UNIT))))
            elif isinstance(e, SavedLamGraph):
                lam = e.lam
                ctx = ctx.bind_loc(loc, QualifiedType(
                    FunTy(lam.param, lam.param_qt, lam.latent,
                          QualifiedType(TY_UNIT))))
        return ctx.with_phi(Qualifier.from_iter(ctx.sigma))


def initial_store(supply: Optional[NameSupply] = None) -> Store:
    return Store(supply)


@dataclass
class RuntimeConfig:
    store: Store
    z: Name
    graph: GraphTerm
    dep: DepMap = field(default_factory=lambda: EMPTY_DEP)


# ---------------------------------------------------------------------------
# Pretty printing (surface syntax)
# ---------------------------------------------------------------------------

def qual_to_text(q: Qualifier) -> str:
    return "{" + ",".join(n.pretty() for n in q) + "}"


def effect_to_text(e: RwEffect) -> str:
    return f"rd{qual_to_text(e.reads)} wr{qual_to_text(e.writes)}"


def ty_to_text(ty: Ty) -> str:
    if isinstance(ty, BaseTy):
        return ty.name
    if isinstance(ty, RefTy):
        return f"Ref[{ty.payload.name}]"
    if isinstance(ty, FunTy):
        return (f"(({ty.param.pretty()}: {qt_to_text(ty.param_qt)}) "
                f"=>{{{effect_to_text(ty.latent)}}} {qt_to_text(ty.result_qt)})")
    raise TypeError(ty)


def qt_to_text(qt: QualifiedType) -> str:
    return f"{ty_to_text(qt.ty)}^{qual_to_text(qt.qual)}"


def _atom(t: Term) -> bool:
    return isinstance(t, (Cst, Nm))


def term_to_text(t: Term) -> str:
    if isinstance(t, Cst):
        return const_text(t.value)
    if isinstance(t, Nm):
        return t.name.pretty()
    if isinstance(t, Lam):
        return (f"fun ({t.param.pretty()}: {qt_to_text(t.param_qt)}) "
                f"=>{{{effect_to_text(t.latent)}}} {term_to_text(t.body)}")
    if isinstance(t, App):
        fn = term_to_text(t.fn)
        if not isinstance(t.fn, (Nm, App)):
            fn = f"({fn})"
        arg = term_to_text(t.arg)
        if not _atom(t.arg):
            arg = f"({arg})"
        return f"{fn} {arg}"
    if isinstance(t, RefNew):
        return f"ref({term_to_text(t.cap)}, {term_to_text(t.init)})"
    if isinstance(t, Deref):
        inner = term_to_text(t.ref)
        if not _atom(t.ref):
            inner = f"({inner})"
        return f"!{inner}"
    if isinstance(t, Assign):
        lhs = term_to_text(t.ref)
        if not _atom(t.ref):
            lhs = f"({lhs})"
        rhs = term_to_text(t.value)
        if not _atom(t.value) and not isinstance(t.value, App):
            rhs = f"({rhs})"
        return f"{lhs} := {rhs}"
    if isinstance(t, Let):
        return (f"let {t.var.pretty()} = {term_to_text(t.bound)} in "
                f"{term_to_text(t.body)}")
    raise TypeError(t)


def graph_to_text(g: Union[GraphTerm, GraphNode]) -> str:
    """Graph terms printed in the same surface syntax (parseable)."""
    if isinstance(g, GName):
        return g.name.pretty()
    if isinstance(g, GLet):
        binding = graph_to_text(g.binding)
        if isinstance(g.binding, (GLet,)):
            binding = f"({binding})"
        return f"let {g.var.pretty()} = {binding} in {graph_to_text(g.body)}"
    if isinstance(g, NCst):
        return const_text(g.value)
    if isinstance(g, NLam):
        body = graph_to_text(g.body)
        if isinstance(g.body, GLet):
            body = f"({body})"
        return (f"fun ({g.param.pretty()}: {qt_to_text(g.param_qt)}) "
                f"=>{{{effect_to_text(g.latent)}}} {body}")
    if isinstance(g, NApp):
        return f"{g.fn.pretty()} {g.arg.pretty()}"
    if isinstance(g, NRef):
        return f"ref({g.cap.pretty()}, {g.init.pretty()})"
    if isinstance(g, NDeref):
        return f"!{g.ref.pretty()}"
    if isinstance(g, NAssign):
        return f"{g.ref.pretty()} := {g.value.pretty()}"
    raise TypeError(g)
