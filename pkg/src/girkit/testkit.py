"""Randomized testing support: a type-directed generator of well-typed
terms, differential runners over the three semantics, a brute-force
dependency oracle, rule-opportunity builders for the optimizer, and
corrupted-graph builders for the runtime dependency check.

Everything here is a pure function of its seed: two runs with the same
configuration produce the same programs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (
    App, Assign, Cst, DepMap, Deref, EMPTY_DEP, EMPTY_QUAL, FunTy,
    GenerationExhausted, GirError, GLet, GName, HARD, Lam, Let, Name,
    NAssign, NCst, NLam, NRef, Nm, PURE, Qualifier,
    QualifiedType, RefNew, RefTy, RW, Store, Term, TY_BOOL,
    TY_INT, TY_UNIT, UNIT_V, dep_add_hard, dep_restrict, initial_store,
    saturate, term_free_names, term_to_text,
)
from .graphir import SynthState, initial_state, synthesize, synthesize_config
from .interp import canonical_value, eval_direct, eval_graph, eval_store
from .mnf import check_mnf, to_mnf
from .typecheck import infer_direct


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_WEIGHTS = {
    "const": 2.0,
    "var": 2.0,
    "let": 3.0,
    "lam": 1.5,
    "app": 2.0,
    "ref": 2.0,
    "deref": 2.0,
    "assign": 2.0,
}


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the generator; output is a pure function of this record."""

    seed: int = 0
    max_depth: int = 6
    max_refs: int = 4
    allow_higher_order: bool = True
    weights: tuple = tuple(sorted(DEFAULT_WEIGHTS.items()))

    def weight(self, production: str) -> float:
        for k, v in self.weights:
            if k == production:
                return v
        return 1.0


class _Backtrack(Exception):
    """Internal: the chosen production cannot be completed here."""


# ---------------------------------------------------------------------------
# Type-directed generation
# ---------------------------------------------------------------------------

_BASE_TARGETS = ("Int", "Bool", "Unit")
_ALL_TARGETS = ("Int", "Bool", "Unit", "Ref")


def _target_of(qt: QualifiedType) -> Optional[str]:
    ty = qt.ty
    if isinstance(ty, RefTy) and ty.payload == TY_INT:
        return "Ref"
    if ty == TY_INT:
        return "Int"
    if ty == TY_BOOL:
        return "Bool"
    if ty == TY_UNIT:
        return "Unit"
    return None


class _Gen:
    def __init__(self, cfg: GenConfig, store: Store, budget: int = 4000):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.store = store
        self.supply = store.supply
        self.budget = budget
        self.refs_made = 0

    # -- helpers ----------------------------------------------------------

    def _spend(self):
        self.budget -= 1
        if self.budget <= 0:
            raise GenerationExhausted("generation budget exhausted")

    def _order(self, productions):
        """Weighted random order without replacement."""
        keyed = [(self.rng.random() ** (1.0 / max(self.cfg.weight(p), 1e-9)), p)
                 for p in productions]
        return [p for _, p in sorted(keyed, reverse=True)]

    def _visible_vars(self, ctx, target: str):
        out = []
        for table in (ctx.gamma, ctx.sigma):
            for n, qt in table.items():
                if n in ctx.phi and _target_of(qt) == target:
                    out.append(n)
        out.sort()
        return out

    def _visible_funs(self, ctx, result_target: str):
        out = []
        for table in (ctx.gamma, ctx.sigma):
            for n, qt in table.items():
                if (n in ctx.phi and isinstance(qt.ty, FunTy)
                        and _target_of(qt.ty.result_qt) == result_target):
                    out.append(n)
        out.sort()
        return out

    def _bind(self, ctx, var: Name, bound: Term):
        """Extend the context exactly as let-typing does, or backtrack."""
        try:
            t = infer_direct(ctx, bound)
        except GirError:
            raise _Backtrack
        from .core import overlap
        q = overlap(t.qt.qual, ctx.phi, ctx)
        return (ctx.bind_var(var, QualifiedType(t.qt.ty, q))
                .with_phi(ctx.phi.add(var)))

    # -- leaves -----------------------------------------------------------

    def _const(self, target: str) -> Term:
        if target == "Int":
            return Cst(self.rng.randrange(0, 100))
        if target == "Bool":
            return Cst(self.rng.random() < 0.5)
        if target == "Unit":
            return Cst(UNIT_V)
        raise _Backtrack

    # -- productions ------------------------------------------------------

    def gen(self, ctx, target: str, depth: int) -> Term:
        self._spend()
        if depth <= 0:
            if target in _BASE_TARGETS:
                return self._const(target)
            names = self._visible_vars(ctx, target)
            if not names:
                raise _Backtrack
            return Nm(self.rng.choice(names))

        productions = ["const", "var", "let"]
        if target == "Int":
            productions += ["deref", "app"]
        elif target == "Unit":
            productions += ["assign", "app"]
        elif target == "Ref":
            productions += ["ref"]

        last_error = None
        for p in self._order(productions):
            self._spend()
            try:
                return self._produce(p, ctx, target, depth)
            except _Backtrack as e:
                last_error = e
        raise last_error or _Backtrack

    def _produce(self, p: str, ctx, target: str, depth: int) -> Term:
        rng = self.rng

        if p == "const":
            return self._const(target)

        if p == "var":
            names = self._visible_vars(ctx, target)
            if not names:
                raise _Backtrack
            return Nm(rng.choice(names))

        if p == "deref":
            return Deref(self.gen(ctx, "Ref", depth - 1))

        if p == "assign":
            refs = self._visible_vars(ctx, "Ref")
            if not refs:
                raise _Backtrack
            return Assign(Nm(rng.choice(refs)),
                          self.gen(ctx, "Int", depth - 1))

        if p == "ref":
            if self.refs_made >= self.cfg.max_refs:
                raise _Backtrack
            if self.store.w not in ctx.phi:
                raise _Backtrack
            self.refs_made += 1
            return RefNew(Nm(self.store.w), self.gen(ctx, "Int", depth - 1))

        if p == "app":
            funs = self._visible_funs(ctx, target)
            if not funs:
                raise _Backtrack
            f = Nm(rng.choice(funs))
            arg = self.gen(ctx, "Int", depth - 1)
            t = App(f, arg)
            try:
                infer_direct(ctx, t)
            except GirError:
                raise _Backtrack
            return t

        if p == "let":
            x = self.supply.var("x")
            bound_target = rng.choice(_ALL_TARGETS + ("Fun",))
            if bound_target == "Fun":
                if not self.cfg.allow_higher_order or depth < 2:
                    raise _Backtrack
                bound = self._lam(ctx, depth - 1)
            else:
                bound = self.gen(ctx, bound_target, depth - 1)
            ctx2 = self._bind(ctx, x, bound)
            body = self.gen(ctx2, target, depth - 1)
            return Let(x, bound, body)

        raise _Backtrack

    def _lam(self, ctx, depth: int) -> Term:
        """A closure over an explicit capture set: the body is generated
        with observation restricted to the captures plus the parameter, and
        the declared latent effect is the body's inferred effect."""
        rng = self.rng
        x = self.supply.var("p")
        visible = sorted(n for n in ctx.phi.members)
        captures = {n for n in visible if rng.random() < 0.5}
        # reachability-close the captures so effects of captured closures
        # and references stay observable inside the body
        cap_q = saturate(Qualifier.from_iter(captures), ctx)
        phi2 = (cap_q & ctx.phi).add(x)
        param_qt = QualifiedType(TY_INT, EMPTY_QUAL)
        ctx2 = ctx.bind_var(x, param_qt).with_phi(phi2)
        body_target = rng.choice(("Int", "Unit", "Int"))
        body = self.gen(ctx2, body_target, depth - 1)
        try:
            latent = infer_direct(ctx2, body).eff
            lam = Lam(x, param_qt, latent, body)
            infer_direct(ctx, lam)
        except GirError:
            raise _Backtrack
        return lam


def gen_well_typed(cfg: GenConfig, store: Optional[Store] = None) -> Term:
    """A random well-typed closed-over-the-store term. The result always
    satisfies the direct type system; raises GenerationExhausted only when
    the backtracking budget runs out."""
    if store is None:
        store = initial_store()
    gen = _Gen(cfg, store)
    ctx = store.typing()
    targets = _BASE_TARGETS + ("Ref",)
    for attempt in range(64):
        gen._spend()
        target = gen.rng.choice(targets)
        depth = cfg.max_depth
        try:
            t = gen.gen(ctx, target, depth)
        except _Backtrack:
            continue
        infer_direct(ctx, t)  # generator contract: output is well-typed
        return t
    raise GenerationExhausted("no well-typed term within the retry budget")


# ---------------------------------------------------------------------------
# Differential running
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    agree: bool
    values: dict
    steps: dict
    counterexample: Optional[Term] = None
    message: str = ""


def _max_name_id(t: Term) -> int:
    ids = [n.id for n in term_free_names(t)]

    def walk(u):
        if isinstance(u, (Lam, Let)):
            ids.append(u.param.id if isinstance(u, Lam) else u.var.id)
        for f in getattr(u, "__dataclass_fields__", ()):
            v = getattr(u, f)
            if isinstance(v, (Cst, Nm, Lam, App, RefNew, Deref, Assign, Let)):
                walk(v)

    walk(t)
    return max(ids, default=0)


def _fresh_store_for(t: Term) -> Store:
    store = initial_store()
    store.supply.reserve(_max_name_id(t) + 1)
    return store


def run_three(t: Term, regime: str = HARD,
              fuel: int = 100_000) -> tuple[dict, dict]:
    """Evaluate t under all three semantics; canonicalized values and step
    counts keyed by 'direct' / 'store' / 'graph'."""
    values, steps = {}, {}

    s = _fresh_store_for(t)
    r = eval_direct(s, t, fuel=fuel)
    values["direct"] = canonical_value(r.store, r.value)
    steps["direct"] = r.steps

    s = _fresh_store_for(t)
    r = eval_store(s, t, fuel=fuel)
    values["store"] = canonical_value(r.store, r.value)
    steps["store"] = r.steps

    s = _fresh_store_for(t)
    g = to_mnf(t, s.supply)
    cfg = synthesize_config(s, g, regime=regime)
    r = eval_graph(cfg, fuel=fuel)
    values["graph"] = canonical_value(r.store, r.value)
    steps["graph"] = r.steps

    return values, steps


def differential(t: Term, regime: str = HARD,
                 fault: Optional[Callable] = None,
                 shrink_budget: int = 400) -> Verdict:
    """Run the three semantics and compare canonical results. `fault`
    (a function over the direct semantics' canonical value) injects a
    deliberate discrepancy for harness self-tests. On disagreement the
    counterexample is shrunk until locally minimal: no single-subterm
    deletion preserves the failure."""

    def observe(term):
        values, steps = run_three(term, regime=regime)
        if fault is not None:
            values["direct"] = fault(values["direct"])
        return values, steps

    def disagrees(term) -> bool:
        try:
            infer_direct(_fresh_store_for(term).typing(), term)
            vs, _ = observe(term)
        except GirError:
            return False
        return len(set(vs.values())) > 1

    values, steps = observe(t)
    if len(set(values.values())) == 1:
        return Verdict(True, values, steps)

    small = shrink(t, disagrees, budget=shrink_budget)
    values, steps = observe(small)
    return Verdict(False, values, steps, counterexample=small,
                   message=f"semantics disagree on {term_to_text(small)}")


# ---------------------------------------------------------------------------
# Shrinking
# ---------------------------------------------------------------------------

def _subterms(t: Term) -> list:
    if isinstance(t, Lam):
        return [t.body]
    if isinstance(t, App):
        return [t.fn, t.arg]
    if isinstance(t, RefNew):
        return [t.cap, t.init]
    if isinstance(t, Deref):
        return [t.ref]
    if isinstance(t, Assign):
        return [t.ref, t.value]
    if isinstance(t, Let):
        return [t.bound, t.body]
    return []


def _rebuild(t: Term, i: int, new: Term) -> Term:
    if isinstance(t, Lam):
        return Lam(t.param, t.param_qt, t.latent, new)
    if isinstance(t, App):
        return App(new, t.arg) if i == 0 else App(t.fn, new)
    if isinstance(t, RefNew):
        return RefNew(new, t.init) if i == 0 else RefNew(t.cap, new)
    if isinstance(t, Deref):
        return Deref(new)
    if isinstance(t, Assign):
        return Assign(new, t.value) if i == 0 else Assign(t.ref, new)
    if isinstance(t, Let):
        return Let(t.var, new, t.body) if i == 0 else Let(t.var, t.bound, new)
    raise TypeError(t)


def shrink_candidates(t: Term):
    """Every term reachable by deleting exactly one subterm: replace some
    node by one of its own children, anywhere in the tree."""
    kids = _subterms(t)
    for child in kids:
        yield child
    for i, child in enumerate(kids):
        for c in shrink_candidates(child):
            yield _rebuild(t, i, c)


def shrink(t: Term, still_fails: Callable[[Term], bool],
           budget: int = 400) -> Term:
    """Greedy local minimization: repeatedly take any single-subterm
    deletion that still fails, until none does (or the budget runs out)."""
    spent = 0
    improved = True
    while improved and spent < budget:
        improved = False
        for cand in shrink_candidates(t):
            spent += 1
            if spent >= budget:
                break
            if still_fails(cand):
                t = cand
                improved = True
                break
    return t


# ---------------------------------------------------------------------------
# Brute-force dependency oracle
# ---------------------------------------------------------------------------

def brute_deps(st: SynthState, g) -> DepMap:
    """The whole-program dependency slice computed directly from the
    checker's effect — Δ restricted to the graph's overall effect — with
    no synthesis pass involved."""
    eff = check_mnf(st.ctx, g).eff
    return dep_restrict(st.last_use, eff, st.ctx, st.regime)


# ---------------------------------------------------------------------------
# Corrupted graphs (runtime dependency-check targets)
# ---------------------------------------------------------------------------

def make_corrupted(t: Term, regime: str = HARD,
                   pick: int = 0) -> tuple:
    """Synthesize t's graph, then break exactly one annotation on the
    top-level binding spine by adding a dependency key that can never be
    store-resident. Returns (config, corrupted_node_name); running the
    config raises DependencyViolation at precisely that node."""
    store = _fresh_store_for(t)
    g = to_mnf(t, store.supply)
    cfg = synthesize_config(store, g, regime=regime)

    spine = []
    u = cfg.graph
    while isinstance(u, GLet):
        spine.append(u)
        u = u.body
    if not spine:
        raise ValueError("graph has no bindings to corrupt")
    node = spine[pick % len(spine)].var
    ghost = store.supply.var("ghost")

    def rewrite(u):
        if isinstance(u, GLet):
            dep = u.dep
            if u.var == node:
                dep = dep_add_hard(dep if dep is not None else EMPTY_DEP,
                                   ghost, cfg.z)
            return GLet(u.var, u.binding, rewrite(u.body), dep)
        return u

    return (type(cfg)(cfg.store, cfg.z, rewrite(cfg.graph), cfg.dep), node)


# ---------------------------------------------------------------------------
# Optimizer rule opportunities
# ---------------------------------------------------------------------------

def opportunity(rule: str, cfg: GenConfig) -> tuple:
    """A (store, graph) pair on which the named rewrite rule fires at
    least once: a random well-typed program with a matching pattern
    grafted in. The graph is unannotated normal form."""
    store = initial_store()
    rng = random.Random(cfg.seed ^ 0x9E3779B9)
    base = gen_well_typed(cfg, store)
    sup = store.supply

    if rule == "inline":
        # a literal β-redex: normalization binds the lambda and its
        # argument to names, leaving a known-callee application
        p = sup.var("p")
        y = sup.var("y")
        redex = App(Lam(p, QualifiedType(TY_INT, EMPTY_QUAL), PURE, Nm(p)),
                    Cst(rng.randrange(100)))
        return store, to_mnf(Let(y, redex, base), sup)

    g = to_mnf(base, sup)

    if rule == "dce":
        d = sup.var("dead")
        return store, GLet(d, NCst(rng.randrange(100)), g, None)

    if rule == "cse":
        k = rng.randrange(100)
        a, b = sup.var("a"), sup.var("b")
        return store, GLet(a, NCst(k), GLet(b, NCst(k), g, None), None)

    if rule == "hoist":
        f, p, h = sup.var("f"), sup.var("p"), sup.var("h")
        body = GLet(h, NCst(rng.randrange(100)), GName(h), None)
        lam = NLam(p, QualifiedType(TY_INT, EMPTY_QUAL), PURE, body, None)
        return store, GLet(f, lam, g, None)

    if rule == "comm":
        # a write next to an unrelated pure binding: no data dependency
        # and disjoint footprints, so the pair may be swapped
        c, r, s, k = sup.var("c"), sup.var("r"), sup.var("s"), sup.var("k")
        inner = GLet(s, NAssign(r, c),
                     GLet(k, NCst(rng.randrange(100)), g, None), None)
        return store, GLet(c, NCst(rng.randrange(100)),
                           GLet(r, NRef(store.w, c), inner, None), None)

    raise ValueError(f"unknown rule {rule!r}")


# ---------------------------------------------------------------------------
# Fuzz driver
# ---------------------------------------------------------------------------

CHECKS = ("translation", "synthesis", "deps", "differential", "optimizer")


@dataclass
class FuzzSummary:
    check: str
    seed: int
    count: int
    failures: int = 0
    details: list = field(default_factory=list)

    def render(self) -> str:
        lines = [f"{self.count} programs checked "
                 f"(check={self.check}, seed={self.seed}): "
                 f"{self.failures} failure(s)"]
        for idx, msg in self.details[:20]:
            lines.append(f"  #{idx}: {msg}")
        return "\n".join(lines)


def _check_translation(t: Term, store: Store) -> Optional[str]:
    ctx = store.typing()
    direct = infer_direct(ctx, t)
    mnf = check_mnf(ctx, to_mnf(t, store.supply))
    if direct != mnf:
        return f"typing drift: direct {direct!r} vs normal form {mnf!r}"
    return None


def _check_synthesis(t: Term, store: Store) -> Optional[str]:
    g = to_mnf(t, store.supply)
    for regime in (HARD, RW):
        st, _ = initial_state(store, regime=regime)
        _, got = synthesize(st, g)
        want = brute_deps(st, g)
        if got != want:
            return (f"[{regime}] slice {got!r} differs from oracle {want!r}")
    return None


def _check_deps(t: Term, store: Store) -> Optional[str]:
    from .core import DependencyViolation
    g = to_mnf(t, store.supply)
    for regime in (HARD, RW):
        cfg = synthesize_config(store.copy(), g, regime=regime)
        try:
            eval_graph(cfg, fuel=100_000)
        except DependencyViolation as e:
            return f"[{regime}] dependency violation: {e}"
    return None


def _check_differential(t: Term, store: Store) -> Optional[str]:
    v = differential(t)
    if not v.agree:
        return v.message
    return None


def _check_optimizer(t: Term, store: Store) -> Optional[str]:
    from .core import RuntimeConfig
    from .optimize import RULES, optimize
    g = to_mnf(t, store.supply)
    st, z = initial_state(store, regime=HARD)
    g2, slice_ = synthesize(st, g)
    before = eval_graph(RuntimeConfig(store.copy(), z, g2, slice_),
                        fuel=100_000)
    ref = canonical_value(before.store, before.value)
    g3, _ = optimize(st, g2, sorted(RULES), fuel=50, supply=store.supply)
    after = eval_graph(RuntimeConfig(store.copy(), z, g3, slice_),
                       fuel=100_000)
    got = canonical_value(after.store, after.value)
    if ref != got:
        return f"optimizer changed the result: {ref!r} -> {got!r}"
    return None


_CHECK_FNS = {
    "translation": _check_translation,
    "synthesis": _check_synthesis,
    "deps": _check_deps,
    "differential": _check_differential,
    "optimizer": _check_optimizer,
}


def fuzz(count: int = 100, seed: int = 0, max_depth: int = 6,
         check: str = "differential") -> FuzzSummary:
    """Generate `count` well-typed programs and run the named check on
    each; failures are collected, never raised."""
    if check not in _CHECK_FNS:
        raise ValueError(f"unknown check {check!r}; pick one of {CHECKS}")
    fn = _CHECK_FNS[check]
    summary = FuzzSummary(check=check, seed=seed, count=count)
    for i in range(count):
        cfg = GenConfig(seed=seed + i, max_depth=max_depth)
        store = initial_store()
        try:
            t = gen_well_typed(cfg, store)
            msg = fn(t, store)
        except GenerationExhausted:
            msg = None  # a dry seed is not a failure of the system under test
        except GirError as e:
            msg = f"unexpected error: {type(e).__name__}: {e}"
        if msg is not None:
            summary.failures += 1
            summary.details.append((i, msg))
    return summary
