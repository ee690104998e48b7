"""Equational graph-to-graph rewrites (dead code, commuting, hoisting,
inlining, common subexpressions) applied under congruence with explicit
side-condition checks; every fired rewrite re-runs dependency synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    DepMap, EMPTY_QUAL, GLet, GName, GraphTerm, Name, NameSupply, NApp,
    NCst, NLam, Qualifier, RwEffect, SideConditionFailed, TY_ALLOC,
    TypingContext, graph_free_names, graph_to_text, rename_graph,
    saturate,
)
from .graphir import SynthState, _bind_ctx, erase, synthesize
from .mnf import check_binding


@dataclass
class RewriteReport:
    rule: str
    site: tuple
    fired: bool
    reason: str = ""


# ---------------------------------------------------------------------------
# Site navigation
# ---------------------------------------------------------------------------

def sites(g: GraphTerm) -> list:
    """All binding positions, outside-in and left-to-right. Path steps:
    0 enters a let's binding (or a bound lambda's body), 1 its body."""
    out = []

    def go(g, path):
        if isinstance(g, GLet):
            out.append(path)
            b = g.binding
            if isinstance(b, GLet):
                go(b, path + (0,))
            elif isinstance(b, NLam):
                go(b.body, path + (0,))
            go(g.body, path + (1,))

    go(g, ())
    return out


def _navigate(st: SynthState, g: GraphTerm, path: tuple):
    """Walk to a binding site, tracking the context and the definitions
    on the scope spine. Returns (ctx, defs, focus, rebuild) where rebuild
    reassembles the whole (unannotated) graph around a replacement."""
    ctx, regime = st.ctx, st.regime
    defs: dict = {}

    def go(ctx, g, path):
        if not path:
            if not isinstance(g, GLet):
                raise SideConditionFailed(f"path does not address a binding")
            return ctx, g, (lambda frag: frag)
        i, rest = path[0], path[1:]
        if not isinstance(g, GLet):
            raise SideConditionFailed(f"bad path step {i} at a leaf")
        if i == 0:
            b = g.binding
            if isinstance(b, GLet):
                c, f, rb = go(ctx, b, rest)
                return c, f, (lambda frag:
                              GLet(g.var, rb(frag), g.body, None))
            if isinstance(b, NLam):
                tb = check_binding(ctx, b)
                ctx2 = (ctx.bind_var(b.param, b.param_qt)
                        .with_phi(tb.qt.qual.add(b.param)))
                c, f, rb = go(ctx2, b.body, rest)
                return c, f, (lambda frag:
                              GLet(g.var,
                                   NLam(b.param, b.param_qt, b.latent,
                                        rb(frag), None),
                                   g.body, None))
            raise SideConditionFailed(f"path enters a leaf binding")
        if i == 1:
            tb = check_binding(ctx, g.binding)
            defs[g.var] = (g.binding, tb)
            ctx2 = _bind_ctx(ctx, g.var, tb)
            c, f, rb = go(ctx2, g.body, rest)
            return c, f, (lambda frag: GLet(g.var, g.binding, rb(frag), None))
        raise SideConditionFailed(f"bad path step {i}")

    ctx2, focus, rebuild = go(ctx, g, tuple(path))
    return ctx2, defs, focus, rebuild


def _resynth(st: SynthState, g: GraphTerm) -> GraphTerm:
    g2, _ = synthesize(st, erase(g))
    return g2


def _capability(ctx: TypingContext):
    for loc, qt in ctx.sigma.items():
        if qt.ty == TY_ALLOC:
            return loc
    return None


def _alloc_only(ctx: TypingContext, eff: RwEffect) -> tuple[bool, str]:
    """The discardability condition: no writes, reads confined to the
    allocation capability's reach."""
    if eff.writes:
        return False, "write effect"
    if not eff.reads:
        return True, ""
    cap = _capability(ctx)
    wstar = saturate(Qualifier.of(cap), ctx) if cap else EMPTY_QUAL
    if not saturate(eff.reads, ctx) <= wstar:
        return False, "reads beyond the allocation capability"
    return True, ""


def _dep_mentions(g, x: Name) -> bool:
    def in_dep(d: DepMap) -> bool:
        return d is not None and (x in d.domain() or x in d.targets())

    if isinstance(g, GName):
        return False
    if isinstance(g, GLet):
        return (in_dep(g.dep) or _dep_mentions(g.binding, x)
                or _dep_mentions(g.body, x))
    if isinstance(g, NLam):
        return in_dep(g.body_dep) or _dep_mentions(g.body, x)
    return False


def _resolve_lam(defs: dict, name: Name):
    """Chase alias bindings and nested-block tails to the lambda a name
    denotes, if it is defined on the scope spine."""
    seen = set()
    while name not in seen:
        seen.add(name)
        d = defs.get(name)
        if d is None:
            return None
        b = d[0]
        # walk nested blocks to their tail, tracking local definitions
        local = dict()
        while True:
            if isinstance(b, GLet):
                spine = b
                while isinstance(spine, GLet):
                    local[spine.var] = spine.binding
                    spine = spine.body
                b = GName(spine.name)
            if isinstance(b, GName):
                if b.name in local:
                    b = local[b.name]
                    continue
                break
            break
        if isinstance(b, NLam):
            return b
        if isinstance(b, GName):
            name = b.name
            continue
        return None
    return None


def _max_id(g) -> int:
    best = 0

    def bump(n: Name):
        nonlocal best
        best = max(best, n.id)

    def go(g):
        if isinstance(g, GName):
            bump(g.name)
        elif isinstance(g, GLet):
            bump(g.var)
            go(g.binding)
            go(g.body)
        elif isinstance(g, NLam):
            bump(g.param)
            go(g.body)
        else:
            for n in graph_free_names(g):
                bump(n)

    go(g)
    return best


def _freshen(g, supply: NameSupply):
    """Rename every binder in a graph term to a fresh name."""
    def go(g, env):
        if isinstance(g, GName):
            return GName(env.get(g.name, g.name))
        if isinstance(g, GLet):
            v2 = supply.fresh_like(g.var)
            b2 = go_binding(g.binding, env)
            env2 = dict(env)
            env2[g.var] = v2
            return GLet(v2, b2, go(g.body, env2), None)
        raise TypeError(g)

    def go_binding(b, env):
        if isinstance(b, (GName, GLet)):
            return go(b, env)
        if isinstance(b, NLam):
            p2 = supply.fresh_like(b.param)
            env2 = dict(env)
            env2[b.param] = p2
            from .core import _rename_effect, _rename_qt
            return NLam(p2, _rename_qt(b.param_qt, env),
                        _rename_effect(b.latent, env2),
                        go(b.body, env2), None)
        return rename_graph(b, env)

    return go(g, {})


# ---------------------------------------------------------------------------
# The five rules
# ---------------------------------------------------------------------------

def rw_dce(st: SynthState, g: GraphTerm, site: tuple,
           supply: NameSupply | None = None) -> GraphTerm:
    """Remove a binding whose result is dead and whose effect is at most
    allocation."""
    ctx, _defs, focus, rebuild = _navigate(st, g, site)
    tb = check_binding(ctx, focus.binding)
    ok, why = _alloc_only(ctx, tb.eff)
    if not ok:
        raise SideConditionFailed(f"binding not discardable: {why}")
    if focus.var in graph_free_names(focus.body):
        raise SideConditionFailed(f"{focus.var!r} used in the continuation")
    if _dep_mentions(focus.body, focus.var):
        raise SideConditionFailed(
            f"{focus.var!r} appears in continuation dependencies")
    return _resynth(st, rebuild(focus.body))


def rw_comm(st: SynthState, g: GraphTerm, site: tuple,
            supply: NameSupply | None = None) -> GraphTerm:
    """Swap two adjacent bindings with disjoint saturated effects."""
    ctx, _defs, focus, rebuild = _navigate(st, g, site)
    if not isinstance(focus.body, GLet):
        raise SideConditionFailed("no adjacent second binding")
    x1, b1 = focus.var, focus.binding
    inner = focus.body
    x2, b2 = inner.var, inner.binding
    t1 = check_binding(ctx, b1)
    ctx2 = _bind_ctx(ctx, x1, t1)
    t2 = check_binding(ctx2, b2)
    e1 = saturate(t1.eff.flat, ctx2)
    e2 = saturate(t2.eff.flat, ctx2)
    if not e1.isdisjoint(e2):
        raise SideConditionFailed(f"effects overlap on {e1 & e2!r}")
    if x1 in graph_free_names(b2):
        raise SideConditionFailed(f"second binding mentions {x1!r}")
    if x2 in graph_free_names(b1):
        raise SideConditionFailed(f"first binding mentions {x2!r}")
    swapped = GLet(x2, b2, GLet(x1, b1, inner.body, None), None)
    return _resynth(st, rebuild(swapped))


def rw_hoist(st: SynthState, g: GraphTerm, site: tuple,
             supply: NameSupply | None = None) -> GraphTerm:
    """Move a strictly pure, parameter-independent first binding out of
    a lambda body."""
    ctx, _defs, focus, rebuild = _navigate(st, g, site)
    lam = focus.binding
    if not isinstance(lam, NLam):
        raise SideConditionFailed("binding is not a lambda")
    inner = lam.body
    if not isinstance(inner, GLet):
        raise SideConditionFailed("lambda body has no binding to hoist")
    tb = check_binding(ctx, lam)
    ctx2 = (ctx.bind_var(lam.param, lam.param_qt)
            .with_phi(tb.qt.qual.add(lam.param)))
    ti = check_binding(ctx2, inner.binding)
    if not ti.eff.is_pure:
        raise SideConditionFailed("hoisted binding is not pure")
    if lam.param in graph_free_names(inner.binding):
        raise SideConditionFailed("binding depends on the parameter")
    lam2 = NLam(lam.param, lam.param_qt, lam.latent, inner.body, None)
    hoisted = GLet(inner.var, inner.binding,
                   GLet(focus.var, lam2, focus.body, None), None)
    return _resynth(st, rebuild(hoisted))


def rw_inline(st: SynthState, g: GraphTerm, site: tuple,
              supply: NameSupply | None = None) -> GraphTerm:
    """Replace an application of a locally-bound lambda to a locally-bound
    discardable argument by the lambda's (freshened) body."""
    ctx, defs, focus, rebuild = _navigate(st, g, site)
    app = focus.binding
    if not isinstance(app, NApp):
        raise SideConditionFailed("binding is not an application")
    lam = _resolve_lam(defs, app.fn)
    if lam is None:
        raise SideConditionFailed(
            f"function {app.fn!r} is not locally bound to a lambda")
    adef = defs.get(app.arg)
    if adef is None:
        raise SideConditionFailed(
            f"argument {app.arg!r} is not locally bound")
    ok, why = _alloc_only(ctx, adef[1].eff)
    if not ok:
        raise SideConditionFailed(f"argument binding not discardable: {why}")
    if supply is None:
        supply = NameSupply(_max_id(g) + 1)
    body = _freshen(erase(lam.body), supply)
    body = rename_graph(body, {lam.param: app.arg})
    inlined = GLet(focus.var, body, focus.body, None)
    return _resynth(st, rebuild(inlined))


def _identical(a, b) -> bool:
    """Strict structural identity on erased bindings.  Plain equality is
    not enough for constants: bool is an int subtype, so 0 == False."""
    if type(a) is not type(b):
        return False
    if isinstance(a, NCst):
        return type(a.value) is type(b.value) and a.value == b.value
    if isinstance(a, GLet):
        return (a.var == b.var and _identical(a.binding, b.binding)
                and _identical(a.body, b.body))
    if isinstance(a, NLam):
        return (a.param == b.param and a.param_qt == b.param_qt
                and a.latent == b.latent and _identical(a.body, b.body))
    return a == b


def rw_cse(st: SynthState, g: GraphTerm, site: tuple,
           supply: NameSupply | None = None) -> GraphTerm:
    """Collapse two syntactically identical adjacent bindings that do not
    allocate; the second's uses are renamed to the first."""
    ctx, _defs, focus, rebuild = _navigate(st, g, site)
    if not isinstance(focus.body, GLet):
        raise SideConditionFailed("no adjacent second binding")
    inner = focus.body
    if not _identical(erase(focus.binding), erase(inner.binding)):
        raise SideConditionFailed("bindings are not identical")
    tb = check_binding(ctx, focus.binding)
    cap = _capability(ctx)
    wstar = saturate(Qualifier.of(cap), ctx) if cap else EMPTY_QUAL
    if not saturate(tb.eff.reads, ctx).isdisjoint(wstar):
        raise SideConditionFailed("binding allocates")
    merged = GLet(focus.var, focus.binding,
                  rename_graph(inner.body, {inner.var: focus.var}), None)
    return _resynth(st, rebuild(merged))


RULES = {
    "dce": rw_dce,
    "comm": rw_comm,
    "hoist": rw_hoist,
    "inline": rw_inline,
    "cse": rw_cse,
}


def optimize(st: SynthState, g: GraphTerm, passes: list,
             fuel: int = 1000, supply: NameSupply | None = None,
             log_misses: bool = False) -> tuple[GraphTerm, list]:
    """Apply the named rules to fixpoint (or until fuel runs out), visiting
    congruence positions outside-in, left-to-right. Returns the rewritten
    graph and the report log."""
    for p in passes:
        if p not in RULES:
            raise SideConditionFailed(f"unknown pass {p!r}")
    if supply is None:
        supply = NameSupply(_max_id(g) + 1)
    reports: list = []
    seen = {graph_to_text(erase(g))}
    changed = True
    while changed and fuel > 0:
        changed = False
        for rule in passes:
            fired = True
            while fired and fuel > 0:
                fired = False
                for path in sites(g):
                    try:
                        g2 = RULES[rule](st, g, path, supply)
                    except SideConditionFailed as e:
                        if log_misses:
                            reports.append(
                                RewriteReport(rule, path, False, str(e)))
                        continue
                    key = graph_to_text(erase(g2))
                    if key in seen:  # don't oscillate (e.g. re-commuting)
                        continue
                    seen.add(key)
                    reports.append(RewriteReport(rule, path, True))
                    g = g2
                    fired = True
                    changed = True
                    fuel -= 1
                    break
    return g, reports
