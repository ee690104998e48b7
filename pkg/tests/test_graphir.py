"""Dependency synthesis, checking, and erasure on graph terms."""

import pytest
from hypothesis import given, settings, strategies as st

from girkit.core import (
    Cell, DepMap, DepMismatch, EMPTY_DEP, GLet, GName, HARD, NAssign, NCst,
    NDeref, RW, graph_to_text, initial_store,
)
from girkit.graphir import check_deps, erase, initial_state, synthesize
from girkit.mnf import to_mnf
from girkit.testkit import GenConfig, brute_deps, gen_well_typed


def two_write_graph():
    """let c = 1 in let a = (x := c) in let b = (x := c) in b, over a
    store holding the cell x."""
    store = initial_store()
    x = store.alloc(Cell(0), "x")
    sup = store.supply
    c, a, b = sup.var("c"), sup.var("a"), sup.var("b")
    g = GLet(c, NCst(1),
             GLet(a, NAssign(x, c),
                  GLet(b, NAssign(x, c), GName(b))))
    return store, x, (c, a, b), g


def spine(g):
    out = []
    while isinstance(g, GLet):
        out.append(g)
        g = g.body
    return out


class TestSynthesize:
    def test_read_gets_a_hard_entry_in_both_regimes(self):
        store = initial_store()
        x = store.alloc(Cell(0), "x")
        a = store.supply.var("a")
        g = GLet(a, NDeref(x), GName(a))
        for regime in (HARD, RW):
            st_, z = initial_state(store, regime=regime)
            g2, _ = synthesize(st_, g)
            assert g2.dep == DepMap.make({x: z})

    def test_second_write_depends_on_the_first(self):
        store, x, (c, a, b), g = two_write_graph()
        # hard regime: the write chain is a hard must-run-after edge
        st_, z = initial_state(store, regime=HARD)
        g2, _ = synthesize(st_, g)
        dep_b = spine(g2)[2].dep
        assert dep_b == DepMap.make({x: a})
        # read/write regime: a preceding write is only a soft (skippable)
        # predecessor of the next write
        st_, z = initial_state(store, regime=RW)
        g2, _ = synthesize(st_, g)
        dep_b = spine(g2)[2].dep
        assert dep_b == DepMap.make({}, {x: {a}})

    def test_pure_node_gets_the_empty_annotation(self):
        store, x, (c, a, b), g = two_write_graph()
        st_, _ = initial_state(store, regime=HARD)
        g2, _ = synthesize(st_, g)
        assert spine(g2)[0].dep == EMPTY_DEP

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_returned_slice_is_the_effect_restriction(self, seed):
        store = initial_store()
        t = gen_well_typed(GenConfig(seed=seed, max_depth=4), store)
        g = to_mnf(t, store.supply)
        for regime in (HARD, RW):
            st_, _ = initial_state(store, regime=regime)
            _, got = synthesize(st_, g)
            assert got == brute_deps(st_, g)

    def test_deterministic_across_runs(self):
        store = initial_store()
        t = gen_well_typed(GenConfig(seed=5, max_depth=4), store)
        g = to_mnf(t, store.supply)
        st_, _ = initial_state(store)
        a = synthesize(st_, g)
        b = synthesize(st_, g)
        assert graph_to_text(a[0]) == graph_to_text(b[0]) and a[1] == b[1]


class TestCheckDeps:
    def test_synthesized_annotations_always_check(self):
        for seed in range(8):
            store = initial_store()
            t = gen_well_typed(GenConfig(seed=seed, max_depth=4), store)
            g = to_mnf(t, store.supply)
            for regime in (HARD, RW):
                st_, _ = initial_state(store, regime=regime)
                g2, _ = synthesize(st_, g)
                check_deps(st_, g2)  # must not raise

    def test_stale_hard_target_is_rejected(self):
        store, x, (c, a, b), g = two_write_graph()
        st_, z = initial_state(store, regime=HARD)
        g2, _ = synthesize(st_, g)
        lets = spine(g2)
        # rewrite b's annotation to skip past a, pointing back at the start
        bad = GLet(lets[0].var, lets[0].binding,
                   GLet(lets[1].var, lets[1].binding,
                        GLet(lets[2].var, lets[2].binding,
                             GName(b), DepMap.make({x: z})),
                        lets[1].dep),
                   lets[0].dep)
        with pytest.raises(DepMismatch):
            check_deps(st_, bad)

    def test_empty_annotation_on_a_pure_node_checks(self):
        store = initial_store()
        a = store.supply.var("a")
        g = GLet(a, NCst(1), GName(a), None)
        st_, _ = initial_state(store)
        check_deps(st_, g)  # must not raise


class TestErase:
    def test_erasure_inverts_synthesis(self):
        store = initial_store()
        t = gen_well_typed(GenConfig(seed=3, max_depth=4), store)
        g = to_mnf(t, store.supply)
        st_, _ = initial_state(store)
        g2, slice_ = synthesize(st_, g)
        assert graph_to_text(erase(g2)) == graph_to_text(g)
        # and re-synthesizing the erasure under the same state reproduces
        # the annotated graph and slice exactly
        g3, slice3 = synthesize(st_, erase(g2))
        assert graph_to_text(g3) == graph_to_text(g2) and slice3 == slice_

    def test_erase_is_idempotent(self):
        store, _, _, g = two_write_graph()
        st_, _ = initial_state(store)
        g2, _ = synthesize(st_, g)
        once = erase(g2)
        assert graph_to_text(erase(once)) == graph_to_text(once)
