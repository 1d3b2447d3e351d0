import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depsketch.graph import (
    CiQuery,
    Dag,
    GraphError,
    brute_force_d_separated,
    build_gm_template,
    d_separated,
    factorization_error,
    parse_dag,
    parse_query,
    resolve_varrho,
    verify_dts,
    verify_sp2,
)


def q(text):
    return parse_query(text)


def test_chain_blocked_by_middle():
    dag = parse_dag("A -> B\nB -> C\n")
    assert d_separated(dag, q("A ; C | B"))
    assert not d_separated(dag, q("A ; C |"))


def test_collider_opens_when_conditioned():
    dag = parse_dag("A -> C\nB -> C")
    assert d_separated(dag, q("A ; B |"))
    assert not d_separated(dag, q("A ; B | C"))


def test_collider_opens_via_descendant():
    dag = parse_dag("A -> C\nB -> C\nC -> D")
    assert not d_separated(dag, q("A ; B | D"))


def test_gm1_n3_observations_separated_given_latents():
    dag = build_gm_template("gm1", 3)
    assert d_separated(dag, q("xi3 ; xi1 | F0,F1,F2"))


def test_gm1_n2_template_edges():
    dag = build_gm_template("gm1", 2)
    assert set(dag.nodes) == {"F0", "F1", "F2", "xi1", "xi2"}
    assert set(dag.edges) == {
        ("F0", "F1"), ("F0", "F2"), ("F1", "F2"),
        ("F0", "xi1"), ("F0", "xi2"), ("F1", "xi2"),
    }


def test_gm3_has_feedback_edge():
    dag = build_gm_template("gm3", 1)
    assert ("xi1", "F1") in dag.edges


def test_gm2_tangent_shares_parents():
    dag = build_gm_template("gm2", 1, with_tangent=True)
    assert dag.parents("xip1") == dag.parents("xi1") == frozenset({"F1"})


@pytest.mark.parametrize("family", ["gm1", "gm2"])
def test_tangent_parents_match_for_exogenous_families(family):
    dag = build_gm_template(family, 5, with_tangent=True)
    for i in range(1, 6):
        assert dag.parents(f"xip{i}") == dag.parents(f"xi{i}")


def test_gm3_tangent_reads_current_latent():
    dag = build_gm_template("gm3", 3, with_tangent=True)
    assert dag.parents("xip2") == frozenset({"F0", "F1", "F2"})


@pytest.mark.parametrize("family,varrho", [("gm1", "shift1"), ("gm2", "shift0"), ("gm3", "shift0")])
def test_history_independence_holds(family, varrho):
    for n in range(1, 9):
        rep = verify_sp2(build_gm_template(family, n), varrho)
        assert rep.passed, rep.failures[:3]


def test_shifted_history_fails_on_gm3_feedback_edge():
    rep = verify_sp2(build_gm_template("gm3", 3), "shift1")
    assert not rep.passed
    bad = {str(c.query) for c in rep.failures}
    assert "xi2 ; F2 | F0,F1" in bad


@pytest.mark.parametrize("family", ["gm1", "gm2", "gm3"])
def test_dts_conditional_independence(family):
    rep = verify_dts(build_gm_template(family, 6, with_tangent=True))
    assert len(rep.checks) == 6 and rep.passed


def test_factorization_exact():
    for family, vr in [("gm1", "shift1"), ("gm2", "shift0"), ("gm3", "shift0")]:
        for n in range(1, 5):
            assert factorization_error(family, n, vr, seed=n) < 1e-12
    assert factorization_error("gm3", 2, "shift1", seed=0) > 1e-3


def test_resolve_varrho_forms():
    assert resolve_varrho("shift1", 3) == [0, 1, 2]
    assert resolve_varrho(lambda i: i, 2) == [1, 2]
    with pytest.raises(GraphError):
        resolve_varrho([1, 0], 2)
    with pytest.raises(GraphError):
        resolve_varrho([2], 1)


def test_query_validation():
    dag = parse_dag("A -> B")
    with pytest.raises(GraphError):
        d_separated(dag, q("A ; Z |"))
    with pytest.raises(GraphError):
        d_separated(dag, CiQuery({"A"}, {"B"}, {"A"}))


def test_dag_rejects_cycles_and_duplicates():
    with pytest.raises(GraphError):
        Dag(["a", "b"], [("a", "b"), ("b", "a")])
    with pytest.raises(GraphError):
        Dag(["a", "a"], [])


def test_text_roundtrip():
    dag = build_gm_template("gm3", 3, with_tangent=True)
    again = parse_dag("# comment\n" + dag.to_text())
    assert set(again.edges) == set(dag.edges) and set(again.nodes) == set(dag.nodes)
    assert str(parse_query("xi1, xi2 ; F3 | F0")) == "xi1,xi2 ; F3 | F0"


# ---- properties ----


@st.composite
def dag_and_query(draw):
    k = draw(st.integers(3, 7))
    names = [f"v{i}" for i in range(k)]
    pairs = [(a, b) for a, b in itertools.combinations(range(k), 2)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [(names[a], names[b]) for (a, b), m in zip(pairs, mask) if m]
    perm = draw(st.permutations(names))
    x, y = perm[0], perm[1]
    z = draw(st.lists(st.sampled_from(perm[2:]), unique=True, max_size=k - 2))
    return Dag(names, edges), CiQuery({x}, {y}, set(z))


@settings(max_examples=300, deadline=None)
@given(dag_and_query())
def test_reachability_matches_path_enumeration(case):
    dag, query = case
    assert d_separated(dag, query) == brute_force_d_separated(dag, query)


@settings(max_examples=200, deadline=None)
@given(dag_and_query())
def test_symmetric_in_x_and_y(case):
    dag, query = case
    assert d_separated(dag, query) == d_separated(dag, CiQuery(query.y, query.x, query.z))


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 8), st.data())
def test_chain_blocked_by_any_inner_node(k, data):
    names = [f"c{i}" for i in range(k)]
    dag = Dag(names, list(zip(names, names[1:])))
    mid = data.draw(st.sampled_from(names[1:-1]))
    assert d_separated(dag, CiQuery({names[0]}, {names[-1]}, {mid}))
