"""Dependency synthesis for the graph IR: annotate MNF terms with hard
(and, in the read/write regime, soft) dependency maps driven by the
last-use coeffect Δ; plus dependency checking and erasure.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    DepMap, DepMismatch, EMPTY_DEP, GLet, GName, GraphTerm, HARD, Name,
    NLam, Nm, QualifiedType, RuntimeConfig, Store,
    TypingContext, dep_last_use, dep_restrict, dep_restrict_names,
    dep_rewire, dep_submap, dep_update, overlap, points_to,
    saturate, subst_qual, ty_free_names, TypeMismatch,
)
from .mnf import check_binding
from .typecheck import Typing, infer_direct


@dataclass
class SynthState:
    """Context plus the last-use coeffect Δ (and the dependency regime)."""

    ctx: TypingContext
    last_use: DepMap
    regime: str = HARD


def synthesize(st: SynthState, g: GraphTerm) -> tuple[GraphTerm, DepMap]:
    """Annotate every binding of a well-typed MNF term with its dependency
    map and return the whole term's dependency slice.

    The slice always equals the last-use map restricted to the term's
    saturated effect; in the hard regime the rule-by-rule composition is
    asserted to coincide with it exactly, in the read/write regime the
    composition is a sub-map refinement (internal writes can downgrade an
    external hard dependency to a soft one, which the restriction view
    over-approximates)."""
    g2, out, slice_, _typing = _synth(st.ctx, st.last_use, g, st.regime)
    return g2, slice_


def _let_typing(ctx: TypingContext, var: Name, bound: Typing,
                body: Typing) -> Typing:
    if var in ty_free_names(body.qt.ty):
        raise TypeMismatch(f"let-bound {var!r} occurs in the result type")
    p = bound.qt.qual
    res_qual = subst_qual(body.qt.qual, var, p)
    eff = bound.eff.seq(body.eff).subst(var, p)
    return Typing(QualifiedType(body.qt.ty, res_qual), eff)


def _bind_ctx(ctx: TypingContext, var: Name, bound: Typing) -> TypingContext:
    bind_q = overlap(bound.qt.qual, ctx.phi, ctx)
    return (ctx.bind_var(var, QualifiedType(bound.qt.ty, bind_q))
            .with_phi(ctx.phi.add(var)))


def _synth(ctx, delta, g, regime):
    """Returns (annotated, composed-output, slice, typing)."""
    if isinstance(g, GName):
        typing = infer_direct(ctx, Nm(g.name))
        return g, EMPTY_DEP, EMPTY_DEP, typing
    if isinstance(g, GLet):
        b2, d1, tb = _synth_binding(ctx, delta, g.binding, regime)
        ctx2 = _bind_ctx(ctx, g.var, tb)
        delta2 = dep_last_use(delta, g.var, tb.eff, ctx, regime)
        body2, d2, _slice2, t2 = _synth(ctx2, delta2, g.body, regime)
        reroute = dep_restrict_names(delta, saturate(tb.qt.qual, ctx))
        out = dep_update(d1, dep_rewire(d2, g.var, reroute))
        typing = _let_typing(ctx, g.var, tb, t2)
        slice_ = dep_restrict(delta, typing.eff, ctx, regime)
        if regime == HARD:
            assert out == slice_, (
                f"hard-regime composition {out!r} != slice {slice_!r}")
        else:
            assert dep_submap(out, slice_), (
                f"rw composition {out!r} not within slice {slice_!r}")
        return GLet(g.var, b2, body2, d1), out, slice_, typing
    raise TypeError(g)


def _synth_binding(ctx, delta, b, regime):
    """Returns (annotated-binding, binding-dep, typing)."""
    if isinstance(b, (GName, GLet)):
        b2, out, _slice, typing = _synth(ctx, delta, b, regime)
        return b2, out, typing
    if isinstance(b, NLam):
        typing = check_binding(ctx, b)  # validates capture/latent first
        fun_q = typing.qt.qual
        phi2 = fun_q.add(b.param)
        ctx2 = ctx.bind_var(b.param, b.param_qt).with_phi(phi2)
        # body synthesized with every last use pointing at the parameter
        delta_body = points_to(ctx2.domain(), b.param)
        body2, body_out, _slice, _tbody = _synth(ctx2, delta_body, b.body,
                                                 regime)
        annotated = NLam(b.param, b.param_qt, b.latent, body2, body_out)
        return annotated, EMPTY_DEP, typing
    # plain graph nodes: dependency = Δ restricted to the node's effect
    typing = check_binding(ctx, b)
    d = dep_restrict(delta, typing.eff, ctx, regime)
    return b, d, typing


def check_deps(st: SynthState, g: GraphTerm) -> Typing:
    """Verify every annotation is a sub-map of the slice its rule demands."""
    typing, _ = _check(st.ctx, st.last_use, g, st.regime)
    return typing


def _check(ctx, delta, g, regime):
    if isinstance(g, GName):
        return infer_direct(ctx, Nm(g.name)), EMPTY_DEP
    if isinstance(g, GLet):
        tb = _check_binding(ctx, delta, g.binding, regime)
        annotated = g.dep if g.dep is not None else EMPTY_DEP
        required = dep_restrict(delta, tb.eff, ctx, regime)
        if not dep_submap(annotated, required):
            raise DepMismatch(
                f"annotation {annotated!r} on {g.var!r} exceeds required "
                f"slice {required!r}",
                node=g.var, annotated=annotated, required=required)
        ctx2 = _bind_ctx(ctx, g.var, tb)
        delta2 = dep_last_use(delta, g.var, tb.eff, ctx, regime)
        t2, _ = _check(ctx2, delta2, g.body, regime)
        return _let_typing(ctx, g.var, tb, t2), EMPTY_DEP
    raise TypeError(g)


def _check_binding(ctx, delta, b, regime) -> Typing:
    if isinstance(b, (GName, GLet)):
        typing, _ = _check(ctx, delta, b, regime)
        return typing
    if isinstance(b, NLam):
        typing = check_binding(ctx, b)
        fun_q = typing.qt.qual
        ctx2 = (ctx.bind_var(b.param, b.param_qt)
                .with_phi(fun_q.add(b.param)))
        delta_body = points_to(ctx2.domain(), b.param)
        tbody, _ = _check(ctx2, delta_body, b.body, regime)
        annotated = b.body_dep if b.body_dep is not None else EMPTY_DEP
        required = dep_restrict(delta_body, tbody.eff, ctx2, regime)
        if not dep_submap(annotated, required):
            raise DepMismatch(
                f"latent annotation {annotated!r} exceeds required "
                f"{required!r}", node=b.param,
                annotated=annotated, required=required)
        return typing
    return check_binding(ctx, b)


def erase(g):
    """Drop every dependency annotation, preserving structure."""
    if isinstance(g, GName):
        return g
    if isinstance(g, GLet):
        return GLet(g.var, erase(g.binding), erase(g.body), None)
    if isinstance(g, NLam):
        return NLam(g.param, g.param_qt, g.latent, erase(g.body), None)
    return g


def initial_state(store: Store, z: Name | None = None,
                  regime: str = HARD) -> tuple[SynthState, Name]:
    """Synthesis state for a whole program: the store typing with every
    location's last use pointing at the start variable z."""
    ctx = store.typing()
    if z is None:
        z = store.supply.var("z")
    delta = points_to(ctx.domain(), z)
    return SynthState(ctx, delta, regime), z


def synthesize_config(store: Store, g: GraphTerm,
                      regime: str = HARD) -> RuntimeConfig:
    st, z = initial_state(store, regime=regime)
    g2, slice_ = synthesize(st, g)
    return RuntimeConfig(store, z, g2, slice_)
