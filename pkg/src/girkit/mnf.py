"""Monadic normal form: translation from direct-style terms, grammar
membership, MNF typing, and the embedding back into direct-style terms.

The translation is strict: every block ends in a returned name, and nested
computations stay nested (no ANF flattening).
"""

from __future__ import annotations

from .core import (
    App, Assign, Cst, Deref, GLet, GName, GraphTerm, Lam, Let, Name,
    NameSupply, NApp, NAssign, NCst, NDeref, NLam, NRef, Nm, RefNew, Term,
    TypingContext,
)
from .typecheck import Typing, infer_direct


def to_mnf(t: Term, supply: NameSupply) -> GraphTerm:
    """Translate a direct-style term into strict MNF. Names introduced on
    the right-hand side are always fresh (drawn from the supply)."""
    if isinstance(t, Nm):
        return GName(t.name)
    if isinstance(t, Cst):
        x = supply.var("c")
        return GLet(x, NCst(t.value), GName(x))
    if isinstance(t, Lam):
        y = supply.var("f")
        body = to_mnf(t.body, supply)
        return GLet(y, NLam(t.param, t.param_qt, t.latent, body), GName(y))
    if isinstance(t, App):
        x1 = supply.var("a")
        x2 = supply.var("a")
        x3 = supply.var("a")
        return GLet(x1, to_mnf(t.fn, supply),
                    GLet(x2, to_mnf(t.arg, supply),
                         GLet(x3, NApp(x1, x2), GName(x3))))
    if isinstance(t, RefNew):
        x1 = supply.var("r")
        x2 = supply.var("r")
        x3 = supply.var("r")
        return GLet(x1, to_mnf(t.cap, supply),
                    GLet(x2, to_mnf(t.init, supply),
                         GLet(x3, NRef(x1, x2), GName(x3))))
    if isinstance(t, Deref):
        x1 = supply.var("d")
        x2 = supply.var("d")
        return GLet(x1, to_mnf(t.ref, supply),
                    GLet(x2, NDeref(x1), GName(x2)))
    if isinstance(t, Assign):
        x1 = supply.var("s")
        x2 = supply.var("s")
        x3 = supply.var("s")
        return GLet(x1, to_mnf(t.ref, supply),
                    GLet(x2, to_mnf(t.value, supply),
                         GLet(x3, NAssign(x1, x2), GName(x3))))
    if isinstance(t, Let):
        return GLet(t.var, to_mnf(t.bound, supply), to_mnf(t.body, supply))
    raise TypeError(t)


def embed(g) -> Term:
    """Read a graph term back as a direct-style term (annotations dropped)."""
    if isinstance(g, GName):
        return Nm(g.name)
    if isinstance(g, GLet):
        return Let(g.var, embed(g.binding), embed(g.body))
    if isinstance(g, NCst):
        return Cst(g.value)
    if isinstance(g, NLam):
        return Lam(g.param, g.param_qt, g.latent, embed(g.body))
    if isinstance(g, NApp):
        return App(Nm(g.fn), Nm(g.arg))
    if isinstance(g, NRef):
        return RefNew(Nm(g.cap), Nm(g.init))
    if isinstance(g, NDeref):
        return Deref(Nm(g.ref))
    if isinstance(g, NAssign):
        return Assign(Nm(g.ref), Nm(g.value))
    raise TypeError(g)


def is_mnf(t: Term) -> bool:
    """True iff the term fits the MNF grammar (node operands are names,
    let chains end in a name)."""
    def graph_like(t: Term) -> bool:
        if isinstance(t, Nm):
            return True
        if isinstance(t, Let):
            return binding_like(t.bound) and graph_like(t.body)
        return False

    def binding_like(t: Term) -> bool:
        return node_like(t) or graph_like(t)

    def node_like(t: Term) -> bool:
        if isinstance(t, Cst):
            return True
        if isinstance(t, Lam):
            return graph_like(t.body)
        if isinstance(t, App):
            return isinstance(t.fn, Nm) and isinstance(t.arg, Nm)
        if isinstance(t, RefNew):
            return isinstance(t.cap, Nm) and isinstance(t.init, Nm)
        if isinstance(t, Deref):
            return isinstance(t.ref, Nm)
        if isinstance(t, Assign):
            return isinstance(t.ref, Nm) and isinstance(t.value, Nm)
        return False

    return graph_like(t)


def check_mnf(ctx: TypingContext, g) -> Typing:
    """Type a graph term under the MNF rules. Node rules mirror the direct
    rules with name operands, so node cases delegate to the direct checker
    on the embedded one-node term; lets and lambdas recurse structurally."""
    if isinstance(g, GName):
        return infer_direct(ctx, Nm(g.name))
    if isinstance(g, GLet):
        bound = check_binding(ctx, g.binding)
        # same shape as the direct let rule
        from .core import QualifiedType, overlap, subst_qual, ty_free_names
        from .core import TypeMismatch
        p = bound.qt.qual
        bind_q = overlap(p, ctx.phi, ctx)
        ctx2 = (ctx.bind_var(g.var, QualifiedType(bound.qt.ty, bind_q))
                .with_phi(ctx.phi.add(g.var)))
        body = check_mnf(ctx2, g.body)
        if g.var in ty_free_names(body.qt.ty):
            raise TypeMismatch(
                f"let-bound {g.var!r} occurs in the body's result type")
        from .core import QualifiedType as QT
        res_qual = subst_qual(body.qt.qual, g.var, p)
        eff = bound.eff.seq(body.eff).subst(g.var, p)
        return Typing(QT(body.qt.ty, res_qual), eff)
    raise TypeError(g)


def check_binding(ctx: TypingContext, b) -> Typing:
    if isinstance(b, (GName, GLet)):
        return check_mnf(ctx, b)
    if isinstance(b, NCst):
        return infer_direct(ctx, Cst(b.value))
    if isinstance(b, NLam):
        # mirror the direct lambda rule with an MNF body
        from .core import (EffectEscape, FunTy, PURE, Qualifier,
                           QualifiedType, QualifierEscape, graph_free_names)
        q = Qualifier(graph_free_names(b))
        if not q <= ctx.phi:
            raise QualifierEscape(
                f"closure captures {q - ctx.phi!r} outside observation",
                qual=q, phi=ctx.phi)
        phi2 = q.add(b.param)
        ctx2 = ctx.bind_var(b.param, b.param_qt).with_phi(phi2)
        if not b.latent.flat <= phi2:
            raise EffectEscape(
                f"declared latent effect {b.latent!r} mentions names outside "
                f"{phi2!r}", eff=b.latent, phi=phi2)
        body = check_mnf(ctx2, b.body)
        if not body.eff.included_in(b.latent):
            raise EffectEscape(
                f"body effect {body.eff!r} not covered by declared latent "
                f"{b.latent!r}", eff=body.eff)
        fun = FunTy(b.param, b.param_qt, b.latent, body.qt)
        return Typing(QualifiedType(fun, q), PURE)
    if isinstance(b, NApp):
        return infer_direct(ctx, App(Nm(b.fn), Nm(b.arg)))
    if isinstance(b, NRef):
        return infer_direct(ctx, RefNew(Nm(b.cap), Nm(b.init)))
    if isinstance(b, NDeref):
        return infer_direct(ctx, Deref(Nm(b.ref)))
    if isinstance(b, NAssign):
        return infer_direct(ctx, Assign(Nm(b.ref), Nm(b.value)))
    raise TypeError(b)


def collapse_administrative(g, watermark: int) -> Term:
    """Inline the single-use administrative bindings the translation
    introduced (those whose variable id is >= the supply watermark taken
    before translating), reconstructing a term α-equivalent to the source."""
    def subst_value(t: Term, x: Name, v: Term) -> Term:
        if isinstance(t, Nm):
            return v if t.name == x else t
        if isinstance(t, Cst):
            return t
        if isinstance(t, Lam):
            if t.param == x:
                return t
            return Lam(t.param, t.param_qt, t.latent,
                       subst_value(t.body, x, v), t.span)
        if isinstance(t, App):
            return App(subst_value(t.fn, x, v), subst_value(t.arg, x, v))
        if isinstance(t, RefNew):
            return RefNew(subst_value(t.cap, x, v), subst_value(t.init, x, v))
        if isinstance(t, Deref):
            return Deref(subst_value(t.ref, x, v))
        if isinstance(t, Assign):
            return Assign(subst_value(t.ref, x, v), subst_value(t.value, x, v))
        if isinstance(t, Let):
            bound = subst_value(t.bound, x, v)
            body = t.body if t.var == x else subst_value(t.body, x, v)
            return Let(t.var, bound, body)
        raise TypeError(t)

    def go(g) -> Term:
        if isinstance(g, GName):
            return Nm(g.name)
        if isinstance(g, GLet):
            bound = go_binding(g.binding)
            body = go(g.body)
            if g.var.id >= watermark:
                return subst_value(body, g.var, bound)
            return Let(g.var, bound, body)
        return go_binding(g)

    def go_binding(b) -> Term:
        if isinstance(b, (GName, GLet)):
            return go(b)
        if isinstance(b, NCst):
            return Cst(b.value)
        if isinstance(b, NLam):
            return Lam(b.param, b.param_qt, b.latent, go(b.body))
        if isinstance(b, NApp):
            return App(Nm(b.fn), Nm(b.arg))
        if isinstance(b, NRef):
            return RefNew(Nm(b.cap), Nm(b.init))
        if isinstance(b, NDeref):
            return Deref(Nm(b.ref))
        if isinstance(b, NAssign):
            return Assign(Nm(b.ref), Nm(b.value))
        raise TypeError(b)

    return go(g)
