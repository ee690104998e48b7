"""Type checking for the direct-style calculus: syntax-directed inference
of qualified types and read/write effects, plus the subtyping judgment.

Subsumption is folded into application/let argument checking, so inference
is deterministic and returns minimal ("lazy") qualifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    App, Assign, BaseTy, Cst, Deref, EffectEscape, FunTy, Lam, Let, Nm,
    OverlapViolation, PURE, Qualifier, QualifiedType, QualifierEscape,
    RefNew, RefTy, RwEffect, Term, Ty, TypeMismatch, TypingContext,
    TY_ALLOC, const_base, overlap, saturate, subst_qual,
    term_free_names, ty_free_names, EMPTY_QUAL,
)
from . import core


@dataclass(frozen=True)
class Typing:
    qt: QualifiedType
    eff: RwEffect


def ty_subtype(ctx: TypingContext, sub: Ty, sup: Ty) -> bool:
    """Structural subtyping: base types by equality, Ref invariant,
    functions contravariant in domain and covariant in codomain/effect."""
    if isinstance(sub, BaseTy) and isinstance(sup, BaseTy):
        return sub.name == sup.name
    if isinstance(sub, RefTy) and isinstance(sup, RefTy):
        return sub.payload == sup.payload
    if isinstance(sub, FunTy) and isinstance(sup, FunTy):
        # domain: sup's parameter type must subtype sub's (contravariance)
        if not ty_subtype(ctx, sup.param_qt.ty, sub.param_qt.ty):
            return False
        if not sup.param_qt.qual <= sub.param_qt.qual:
            return False
        # codomain judged under the context extended with the smaller
        # (super) argument; align sub's parameter name with sup's.
        x = sup.param
        mapping = {sub.param: x} if sub.param != x else {}
        res_sub = core._rename_qt(sub.result_qt, mapping)
        lat_sub = core._rename_effect(sub.latent, mapping)
        ctx2 = ctx.bind_var(x, sup.param_qt)
        if not ty_subtype(ctx2, res_sub.ty, sup.result_qt.ty):
            return False
        if not res_sub.qual <= sup.result_qt.qual:
            return False
        return lat_sub.included_in(sup.latent)
    return False


def check_subtype(ctx: TypingContext,
                  lhs: tuple[QualifiedType, RwEffect],
                  rhs: tuple[QualifiedType, RwEffect]) -> bool:
    """Qualified-type-with-effect subtyping: q ⊆ q' over the context
    domain, structural type subtyping, componentwise effect inclusion."""
    (qt1, e1), (qt2, e2) = lhs, rhs
    dom = frozenset(ctx.domain())
    for q in (qt1.qual, qt2.qual, e1.flat, e2.flat):
        for n in q.members:
            if n not in dom:
                raise core.UnboundName(f"ill-scoped qualifier member {n!r}",
                                       name=n)
    if not qt1.qual <= qt2.qual:
        return False
    if not e1.included_in(e2):
        return False
    return ty_subtype(ctx, qt1.ty, qt2.ty)


def _observable(ctx: TypingContext, t: Term, typing: Typing) -> Typing:
    if not typing.qt.qual <= ctx.phi:
        raise QualifierEscape(
            f"qualifier {typing.qt.qual!r} escapes observation {ctx.phi!r}",
            span=getattr(t, "span", None),
            qual=typing.qt.qual, phi=ctx.phi)
    if not typing.eff.flat <= ctx.phi:
        raise EffectEscape(
            f"effect {typing.eff!r} escapes observation {ctx.phi!r}",
            span=getattr(t, "span", None),
            eff=typing.eff, phi=ctx.phi)
    return typing


def infer_direct(ctx: TypingContext, t: Term) -> Typing:
    """Infer the minimal qualified type and effect of a direct-style term."""
    span = getattr(t, "span", None)

    if isinstance(t, Cst):
        return _observable(ctx, t, Typing(QualifiedType(const_base(t.value)), PURE))

    if isinstance(t, Nm):
        qt = ctx.lookup(t.name)
        if t.name not in ctx.phi:
            raise QualifierEscape(f"name {t.name!r} not observable", span=span,
                                  qual=Qualifier.of(t.name), phi=ctx.phi)
        # untracked base-typed bindings stay untracked (the allocation
        # capability and anything reference- or function-typed is tracked)
        if (isinstance(qt.ty, BaseTy) and qt.ty != TY_ALLOC
                and not qt.qual):
            return Typing(QualifiedType(qt.ty, EMPTY_QUAL), PURE)
        return Typing(QualifiedType(qt.ty, Qualifier.of(t.name)), PURE)

    if isinstance(t, Lam):
        q = Qualifier(term_free_names(t))
        if not q <= ctx.phi:
            raise QualifierEscape(
                f"closure captures {q - ctx.phi!r} outside observation",
                span=span, qual=q, phi=ctx.phi)
        phi2 = q.add(t.param)
        ctx2 = ctx.bind_var(t.param, t.param_qt).with_phi(phi2)
        if not t.latent.flat <= phi2:
            raise EffectEscape(
                f"declared latent effect {t.latent!r} mentions names outside "
                f"{phi2!r}", span=span, eff=t.latent, phi=phi2)
        body = infer_direct(ctx2, t.body)
        if not body.eff.included_in(t.latent):
            raise EffectEscape(
                f"body effect {body.eff!r} not covered by declared latent "
                f"{t.latent!r}", span=span, eff=body.eff)
        fun = FunTy(t.param, t.param_qt, t.latent, body.qt)
        return _observable(ctx, t, Typing(QualifiedType(fun, q), PURE))

    if isinstance(t, App):
        fn = infer_direct(ctx, t.fn)
        if not isinstance(fn.qt.ty, FunTy):
            raise TypeMismatch(f"applied non-function {fn.qt!r}", span=span)
        f = fn.qt.ty
        arg = infer_direct(ctx, t.arg)
        if not ty_subtype(ctx, arg.qt.ty, f.param_qt.ty):
            raise TypeMismatch(
                f"argument type {arg.qt.ty!r} does not match domain "
                f"{f.param_qt.ty!r}", span=span)
        p = arg.qt.qual
        allowed = f.param_qt.qual
        got = overlap(p, fn.qt.qual, ctx)
        if not got <= allowed:
            raise OverlapViolation(
                f"argument/function overlap {got!r} exceeds declared domain "
                f"qualifier {allowed!r}", span=span, got=got, allowed=allowed)
        x = f.param
        if x in ty_free_names(f.result_qt.ty):
            raise TypeMismatch(
                f"parameter {x!r} occurs in the result type", span=span)
        # the latent effect must reach only through the function itself or
        # its parameter; close the function qualifier so that names bound
        # to aliases (as normalization introduces) keep typing
        if not f.latent.flat <= saturate(fn.qt.qual, ctx).add(x):
            raise EffectEscape(
                f"latent effect {f.latent!r} not confined to the function "
                f"qualifier plus parameter", span=span, eff=f.latent)
        if not f.result_qt.qual <= ctx.phi.add(x):
            raise QualifierEscape(
                f"result qualifier {f.result_qt.qual!r} escapes", span=span,
                qual=f.result_qt.qual, phi=ctx.phi)
        res_qual = subst_qual(f.result_qt.qual, x, p)
        eff = fn.eff.seq(arg.eff).seq(f.latent).subst(x, p)
        return _observable(ctx, t, Typing(
            QualifiedType(f.result_qt.ty, res_qual), eff))

    if isinstance(t, RefNew):
        cap = infer_direct(ctx, t.cap)
        if cap.qt.ty != TY_ALLOC:
            raise TypeMismatch(
                f"ref needs the allocation capability, got {cap.qt.ty!r}",
                span=span)
        init = infer_direct(ctx, t.init)
        if not isinstance(init.qt.ty, BaseTy) or init.qt.ty.name == "Alloc":
            raise TypeMismatch(
                f"references hold base values, got {init.qt.ty!r}", span=span)
        if init.qt.qual:
            raise TypeMismatch(
                f"stored value must be untracked (qualifier ∅), got "
                f"{init.qt.qual!r}", span=span)
        eff = cap.eff.seq(init.eff).seq(RwEffect.read(cap.qt.qual))
        return _observable(ctx, t, Typing(
            QualifiedType(RefTy(init.qt.ty)), eff))

    if isinstance(t, Deref):
        ref = infer_direct(ctx, t.ref)
        if not isinstance(ref.qt.ty, RefTy):
            raise TypeMismatch(f"dereferenced non-reference {ref.qt.ty!r}",
                               span=span)
        eff = ref.eff.seq(RwEffect.read(ref.qt.qual))
        return _observable(ctx, t, Typing(
            QualifiedType(ref.qt.ty.payload), eff))

    if isinstance(t, Assign):
        ref = infer_direct(ctx, t.ref)
        if not isinstance(ref.qt.ty, RefTy):
            raise TypeMismatch(f"assigned non-reference {ref.qt.ty!r}",
                               span=span)
        val = infer_direct(ctx, t.value)
        if val.qt.ty != ref.qt.ty.payload:
            raise TypeMismatch(
                f"assignment payload {val.qt.ty!r} vs cell {ref.qt.ty!r}",
                span=span)
        if val.qt.qual:
            raise TypeMismatch(
                f"stored value must be untracked (qualifier ∅), got "
                f"{val.qt.qual!r}", span=span)
        eff = ref.eff.seq(val.eff).seq(RwEffect.write(ref.qt.qual))
        return _observable(ctx, t, Typing(QualifiedType(core.TY_UNIT), eff))

    if isinstance(t, Let):
        bound = infer_direct(ctx, t.bound)
        p = bound.qt.qual
        bind_q = overlap(p, ctx.phi, ctx)
        ctx2 = (ctx.bind_var(t.var, QualifiedType(bound.qt.ty, bind_q))
                .with_phi(ctx.phi.add(t.var)))
        body = infer_direct(ctx2, t.body)
        if t.var in ty_free_names(body.qt.ty):
            raise TypeMismatch(
                f"let-bound {t.var!r} occurs in the body's result type",
                span=span)
        res_qual = subst_qual(body.qt.qual, t.var, p)
        eff = bound.eff.seq(body.eff).subst(t.var, p)
        return _observable(ctx, t, Typing(
            QualifiedType(body.qt.ty, res_qual), eff))

    raise TypeError(t)
