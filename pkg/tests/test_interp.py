"""The three executable semantics and their agreement."""

import pytest
from hypothesis import given, settings, strategies as st

from girkit.core import (
    App, Assign, Cell, Cst, Deref, DependencyViolation, FuelExhausted, Lam,
    Let, Name, Nm, OverlapViolation, PURE, QualifiedType, RefNew,
    SavedCst, TY_INT, initial_store,
)
from girkit.graphir import synthesize_config
from girkit.interp import (
    canonical_value, eval_direct, eval_graph, eval_store, separation_probe,
)
from girkit.mnf import to_mnf
from girkit.testkit import GenConfig, gen_well_typed, make_corrupted, run_three


def ref_and_read(store, init=5):
    return Deref(RefNew(Nm(store.w), Cst(init)))


class TestEvalDirect:
    def test_allocate_then_read(self):
        store = initial_store()
        r = eval_direct(store.copy(), ref_and_read(store))
        assert r.value == Cst(5)
        assert len(r.store.order) == 2  # capability + the fresh cell

    def test_values_do_not_step(self):
        store = initial_store()
        r = eval_direct(store.copy(), Cst(7))
        assert r.value == Cst(7) and r.steps == 0

    def test_assign_then_read_sees_the_write(self):
        store = initial_store()
        sup = store.supply
        x, u = sup.var("x"), sup.var("u")
        t = Let(x, RefNew(Nm(store.w), Cst(1)),
                Let(u, Assign(Nm(x), Cst(2)), Deref(Nm(x))))
        assert eval_direct(store.copy(), t).value == Cst(2)

    def test_fuel_runs_out_on_long_programs(self):
        store = initial_store()
        with pytest.raises(FuelExhausted):
            eval_direct(store.copy(), ref_and_read(store), fuel=1)


class TestEvalStore:
    def test_constants_commit_to_the_store(self):
        store = initial_store()
        r = eval_store(store.copy(), Cst(42))
        assert isinstance(r.value, Name) and r.value.is_loc
        assert r.store[r.value] == SavedCst(42)

    def test_beta_resolves_through_locations(self):
        store = initial_store()
        p = store.supply.var("p")
        t = App(Lam(p, QualifiedType(TY_INT), PURE, Nm(p)), Cst(9))
        r = eval_store(store.copy(), t)
        assert canonical_value(r.store, r.value) == ("cst", "Int", 9)

    def test_store_and_direct_agree_canonically(self):
        store = initial_store()
        t = ref_and_read(store)
        rd = eval_direct(store.copy(), t)
        rs = eval_store(store.copy(), t)
        assert (canonical_value(rd.store, rd.value)
                == canonical_value(rs.store, rs.value))

    def test_store_only_adds_introduction_steps_on_pure_terms(self):
        store = initial_store()
        x = store.supply.var("x")
        t = Let(x, Cst(1), Nm(x))
        rd = eval_direct(store.copy(), t)
        rs = eval_store(store.copy(), t)
        assert rd.steps == 1       # just the let
        assert rs.steps == 2       # constant introduction, then the let


class TestEvalGraph:
    def test_pure_graph_returns_the_stored_constant(self):
        store = initial_store()
        g = to_mnf(Cst(1), store.supply)
        cfg = synthesize_config(store, g)
        r = eval_graph(cfg)
        assert isinstance(r.value, Name)
        assert canonical_value(r.store, r.value) == ("cst", "Int", 1)

    def test_corrupted_annotation_is_caught_at_its_node(self):
        t = gen_well_typed(GenConfig(seed=2, max_depth=5))
        cfg, node = make_corrupted(t)
        with pytest.raises(DependencyViolation) as exc:
            eval_graph(cfg)
        assert exc.value.payload["node"] == node

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_three_semantics_agree(self, seed):
        t = gen_well_typed(GenConfig(seed=seed, max_depth=4))
        values, _ = run_three(t)
        assert len(set(values.values())) == 1


class TestCanonicalValue:
    def test_references_resolve_to_their_content(self):
        store = initial_store()
        loc = store.alloc(Cell(3), "x")
        assert canonical_value(store, loc) == ("ref", ("cst", "Int", 3))


class TestSeparationProbe:
    def test_independent_allocations_stay_disjoint(self):
        store = initial_store()

        def prog(k):
            sup = store.supply
            r, u = sup.var("r"), sup.var("u")
            return Let(r, RefNew(Nm(store.w), Cst(k)),
                       Let(u, Assign(Nm(r), Cst(k + 1)), Deref(Nm(r))))

        rep = separation_probe(prog(1), prog(10), store)
        assert rep.disjoint and rep.failure is None
        assert rep.steps > 0 and len(rep.history) == rep.steps + 1

    def test_aliased_references_are_rejected_up_front(self):
        store = initial_store()
        loc = store.alloc(Cell(0), "x")
        with pytest.raises(OverlapViolation):
            separation_probe(Nm(loc), Nm(loc), store)

    def test_pure_terms_are_trivially_disjoint(self):
        store = initial_store()
        rep = separation_probe(Cst(1), Cst(2), store)
        assert rep.disjoint
