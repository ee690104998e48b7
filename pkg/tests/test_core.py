"""Qualifier algebra, dependency-map algebra, and name plumbing."""

import pickle

from hypothesis import given, settings, strategies as st

from girkit.core import (
    DepMap, EMPTY_DEP, EMPTY_QUAL, HARD, Name, NameSupply, PURE, Qualifier,
    QualifiedType, RW, RwEffect, TypingContext, TY_INT, RefTy, UnboundName,
    dep_dom_subst, dep_last_use, dep_restrict, dep_rewire, dep_submap,
    dep_update, overlap, saturate, subst_qual,
)

import pytest


def q(*names):
    return Qualifier.from_iter(names)


def fresh_names(n, text="n"):
    sup = NameSupply()
    return [sup.var(f"{text}{i}") for i in range(n)]


def chain_ctx(pairs):
    """Context [n: Ref Int^{q}] for each (name, qual) pair, phi = all."""
    ctx = TypingContext()
    names = []
    for n, qual in pairs:
        ctx = ctx.bind_var(n, QualifiedType(RefTy(TY_INT), qual))
        names.append(n)
    return ctx.with_phi(q(*names))


# ---------------------------------------------------------------------------
# Names
# ---------------------------------------------------------------------------

class TestName:
    def test_equality_ignores_display_text(self):
        sup = NameSupply()
        a = sup.var("a")
        assert a == Name(a.kind, a.id, "other_text")
        assert hash(a) == hash(Name(a.kind, a.id, "other_text"))

    def test_var_and_loc_namespaces_are_disjoint(self):
        v = Name(0, 7, "n")
        l = Name(1, 7, "n")
        assert v != l

    def test_ordering_is_total_and_deterministic(self):
        names = fresh_names(5)
        assert sorted(reversed(names)) == names

    def test_names_survive_pickling(self):
        n = NameSupply().var("a")
        n2 = pickle.loads(pickle.dumps(n))
        assert n2 == n and hash(n2) == hash(n)


# ---------------------------------------------------------------------------
# Saturation
# ---------------------------------------------------------------------------

class TestSaturate:
    def test_reaches_through_one_level(self):
        x, y = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL), (y, q(x))])
        assert saturate(q(y), ctx) == q(x, y)

    def test_empty_is_a_fixed_point(self):
        x, y = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL), (y, q(x))])
        assert saturate(EMPTY_QUAL, ctx) == EMPTY_QUAL

    def test_closes_a_three_step_chain(self):
        c, b, a = fresh_names(3)
        ctx = chain_ctx([(c, EMPTY_QUAL), (b, q(c)), (a, q(b))])
        assert saturate(q(a), ctx) == q(a, b, c)

    def test_unbound_member_is_rejected(self):
        x, ghost = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL)])
        with pytest.raises(UnboundName):
            saturate(q(ghost), ctx)

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_monotone_extensive_idempotent(self, data):
        names = fresh_names(5)
        pairs = []
        for i, n in enumerate(names):
            earlier = names[:i]
            sub = data.draw(st.sets(st.sampled_from(earlier))
                            if earlier else st.just(set()))
            pairs.append((n, q(*sub)))
        ctx = chain_ctx(pairs)
        small = q(*data.draw(st.sets(st.sampled_from(names))))
        big = small | q(*data.draw(st.sets(st.sampled_from(names))))
        assert saturate(small, ctx) <= saturate(big, ctx)     # monotone
        assert small <= saturate(small, ctx)                  # extensive
        assert saturate(saturate(small, ctx), ctx) == saturate(small, ctx)


# ---------------------------------------------------------------------------
# Qualifier substitution and overlap
# ---------------------------------------------------------------------------

class TestSubstQual:
    def test_member_is_replaced_by_the_whole_set(self):
        x, z, a, b = fresh_names(4)
        assert subst_qual(q(x, z), x, q(a, b)) == q(a, b, z)

    def test_nonmember_is_untouched(self):
        x, z, a = fresh_names(3)
        assert subst_qual(q(z), x, q(a)) == q(z)

    def test_effect_substitution_is_componentwise(self):
        x, loc = fresh_names(2)
        e = RwEffect(reads=q(x), writes=q(x))
        assert e.subst(x, q(loc)) == RwEffect(reads=q(loc), writes=q(loc))

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_both_arguments(self, data):
        names = fresh_names(6)
        x = names[0]
        qs = q(*data.draw(st.sets(st.sampled_from(names))))
        qb = qs | q(*data.draw(st.sets(st.sampled_from(names))))
        ps = q(*data.draw(st.sets(st.sampled_from(names))))
        pb = ps | q(*data.draw(st.sets(st.sampled_from(names))))
        assert subst_qual(qs, x, ps) <= subst_qual(qb, x, pb)


class TestOverlap:
    def test_intersects_saturations(self):
        x, y = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL), (y, q(x))])
        assert overlap(q(x), q(y), ctx) == q(x)

    def test_self_overlap_is_saturation(self):
        x, y = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL), (y, q(x))])
        assert overlap(q(y), q(y), ctx) == saturate(q(y), ctx)

    def test_disjoint_reach_sets_do_not_overlap(self):
        a, b = fresh_names(2)
        ctx = chain_ctx([(a, EMPTY_QUAL), (b, EMPTY_QUAL)])
        assert overlap(q(a), q(b), ctx) == EMPTY_QUAL


# ---------------------------------------------------------------------------
# Dependency maps
# ---------------------------------------------------------------------------

class TestDepMapNormalForm:
    def test_empty_soft_sets_are_dropped(self):
        a, b = fresh_names(2)
        assert DepMap.make({a: b}, {a: set()}) == DepMap.make({a: b}, {})

    def test_soft_may_repeat_the_hard_target(self):
        # the redundant entry must survive: a later update can override
        # the hard target, and dropping it would break associativity
        a, b = fresh_names(2)
        d = DepMap.make({a: b}, {a: {b}})
        assert d.soft == {a: frozenset({b})}


class TestDepUpdate:
    def test_hard_entries_are_right_biased(self):
        a, b, c = fresh_names(3)
        d = dep_update(DepMap.make({a: b}), DepMap.make({a: c}))
        assert d == DepMap.make({a: c})

    def test_empty_is_the_identity(self):
        a, b, c = fresh_names(3)
        d = DepMap.make({a: b}, {c: {a}})
        assert dep_update(d, EMPTY_DEP) == d
        assert dep_update(EMPTY_DEP, d) == d

    def test_soft_entries_union_per_key(self):
        a, b, c = fresh_names(3)
        d = dep_update(DepMap.make({}, {a: {b}}), DepMap.make({}, {a: {c}}))
        assert d == DepMap.make({}, {a: {b, c}})

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_associative(self, data):
        names = fresh_names(4)

        def any_dep():
            hard = data.draw(st.dictionaries(
                st.sampled_from(names), st.sampled_from(names), max_size=3))
            soft = data.draw(st.dictionaries(
                st.sampled_from(names),
                st.sets(st.sampled_from(names), min_size=1, max_size=2),
                max_size=2))
            return DepMap.make(hard, soft)

        d1, d2, d3 = any_dep(), any_dep(), any_dep()
        assert (dep_update(dep_update(d1, d2), d3)
                == dep_update(d1, dep_update(d2, d3)))


class TestDepRestrict:
    def test_read_keeps_the_read_names_hard_entry(self):
        x, u, z = fresh_names(3)
        ctx = chain_ctx([(x, EMPTY_QUAL), (u, EMPTY_QUAL)])
        d = DepMap.make({x: z, u: z})
        got = dep_restrict(d, RwEffect.read(q(x)), ctx, RW)
        assert got == DepMap.make({x: z})

    def test_pure_effect_restricts_to_nothing(self):
        x, z = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL)])
        d = DepMap.make({x: z}, {x: {z}})
        assert dep_restrict(d, PURE, ctx, RW) == EMPTY_DEP
        assert dep_restrict(d, PURE, ctx, HARD) == EMPTY_DEP

    def test_write_routes_hard_and_soft_into_soft(self):
        x, a, b = fresh_names(3)
        ctx = chain_ctx([(x, EMPTY_QUAL)])
        d = DepMap.make({x: a}, {x: {b}})
        got = dep_restrict(d, RwEffect.write(q(x)), ctx, RW)
        assert got == DepMap.make({}, {x: {a, b}})

    def test_hard_regime_uses_the_flat_footprint(self):
        x, a = fresh_names(2)
        ctx = chain_ctx([(x, EMPTY_QUAL)])
        d = DepMap.make({x: a}, {x: {a}})
        got = dep_restrict(d, RwEffect.write(q(x)), ctx, HARD)
        assert got == DepMap.make({x: a})


class TestDepRewire:
    def test_targets_are_rerouted_through_the_second_map(self):
        a, b, c, x, y = fresh_names(5)
        d1 = DepMap.make({a: b, c: x, y: x})
        d2 = DepMap.make({c: a, y: b})
        assert dep_rewire(d1, x, d2) == DepMap.make({a: b, c: a, y: b})

    def test_noop_when_nothing_targets_the_pivot(self):
        a, b, x = fresh_names(3)
        d = DepMap.make({a: b})
        assert dep_rewire(d, x, DepMap.make({a: a})) == d

    def test_entry_dropped_when_the_second_map_is_silent(self):
        c, x = fresh_names(2)
        assert dep_rewire(DepMap.make({c: x}), x, EMPTY_DEP) == EMPTY_DEP


class TestDepDomSubst:
    def test_domain_member_replaced(self):
        x, z, loc = fresh_names(3)
        assert (dep_dom_subst(DepMap.make({x: z}), q(loc), x)
                == DepMap.make({loc: z}))

    def test_absent_pivot_is_a_noop(self):
        a, b, x, loc = fresh_names(4)
        d = DepMap.make({a: b})
        assert dep_dom_subst(d, q(loc), x) == d

    def test_fan_out_to_every_member(self):
        x, z, a, b, l1, l2 = fresh_names(6)
        got = dep_dom_subst(DepMap.make({x: z, a: b}), q(l1, l2), x)
        assert got == DepMap.make({l1: z, l2: z, a: b})


class TestDepLastUse:
    def test_write_retargets_hard_and_resets_soft(self):
        r, x, old = fresh_names(3)
        ctx = chain_ctx([(r, EMPTY_QUAL)])
        d = DepMap.make({}, {r: {old}})
        got = dep_last_use(d, x, RwEffect.write(q(r)), ctx, RW)
        assert got == DepMap.make({r: x, x: x})

    def test_pure_only_registers_the_new_node(self):
        r, x, z = fresh_names(3)
        ctx = chain_ctx([(r, EMPTY_QUAL)])
        d = DepMap.make({r: z})
        got = dep_last_use(d, x, PURE, ctx, RW)
        assert got == DepMap.make({r: z, x: x})

    def test_read_appends_to_the_soft_set(self):
        r, x, a = fresh_names(3)
        ctx = chain_ctx([(r, EMPTY_QUAL)])
        d = DepMap.make({}, {r: {a}})
        got = dep_last_use(d, x, RwEffect.read(q(r)), ctx, RW)
        assert got.soft[r] == frozenset({a, x})

    def test_hard_regime_points_every_used_name_at_the_node(self):
        r, x, z = fresh_names(3)
        ctx = chain_ctx([(r, EMPTY_QUAL)])
        d = DepMap.make({r: z})
        got = dep_last_use(d, x, RwEffect.read(q(r)), ctx, HARD)
        assert got == DepMap.make({r: x, x: x})


class TestDepSubmap:
    def test_reflexive_and_empty_bottom(self):
        a, b = fresh_names(2)
        d = DepMap.make({a: b}, {b: {a}})
        assert dep_submap(d, d)
        assert dep_submap(EMPTY_DEP, d)
        assert not dep_submap(d, EMPTY_DEP)

    def test_soft_entry_covered_by_hard_target(self):
        a, b = fresh_names(2)
        assert dep_submap(DepMap.make({}, {a: {b}}), DepMap.make({a: b}))
