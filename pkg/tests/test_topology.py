import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cabletrace import crossing as cx
from cabletrace import topology as tp
from cabletrace.templates import FAKE_KNOTS, KNOTTED, TEMPLATES


def random_code(rng, n):
    """A valid one-cable sequence: n ids, each visited once over and once under."""
    toks = []
    for k in range(1, n + 1):
        toks += [f"O{k}", f"U{k}"]
    rng.shuffle(toks)
    return " ".join(toks)


def codes(state):
    return state.code()


@st.composite
def sequences(draw, max_n=8):
    n = draw(st.integers(0, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return tp.from_code(random_code(np.random.default_rng(seed), n))


# --------------------------------------------------------------------------
# worked examples


def test_loop_cancels():
    assert tp.cancel_crossings(tp.from_code("O1 U1")).code() == ""


def test_double_pair_cancels():
    out = tp.cancel_crossings(tp.from_code("O1 O2 U1 U2"))
    assert out.code() == ""
    assert out.provenance["moves"] == ["II"]


def test_overhand_is_irreducible():
    code = "U1 O2 U3 O1 U2 O3"
    assert tp.cancel_crossings(tp.from_code(code)).code() == code


def test_fake_templates_reduce_to_nothing():
    for name in FAKE_KNOTS + ("fake_loop",):
        assert tp.cancel_crossings(tp.from_code(TEMPLATES[name].code)).code() == ""


def test_knotted_templates_keep_a_knot():
    for name in KNOTTED:
        st_ = tp.cancel_crossings(tp.from_code(TEMPLATES[name].code))
        assert tp.detect_knots(st_)


def test_same_sign_partners_block_double_pair():
    # an adjacent pair of mixed signs is not a strand passing over (or under) both
    assert tp._reid_two(tp.from_code("O1 U2 U1 O2").sequence) is None
    assert tp.cancel_crossings(tp.from_code("O1 U2 U1 O2")).code() == "O1 U2 U1 O2"


def test_renumbered_code():
    st_ = tp.from_code("U4 O2 U4")
    assert st_.code(renumber=True) == "U1 O2 U1"


# --------------------------------------------------------------------------
# cancellation properties


@given(sequences())
@settings(max_examples=300, deadline=None)
def test_cancellation_properties(state):
    once = tp.cancel_crossings(state)
    twice = tp.cancel_crossings(once)
    assert codes(twice) == codes(once)
    assert len(once) <= len(state)
    moves = once.provenance["moves"]
    assert len(state) - len(once) == sum(2 if m == "I" else 4 for m in moves)
    counts = Counter(e.crossing for e in once.sequence)
    assert all(c == 2 for c in counts.values())
    # survivors keep their relative order
    idx = [e.trace_index for e in once.sequence]
    assert idx == sorted(idx)


@given(sequences())
@settings(max_examples=100, deadline=None)
def test_cancellation_is_a_fixpoint(state):
    out = tp.cancel_crossings(state).sequence
    assert tp._reid_one(out) is None and tp._reid_two(out) is None


# --------------------------------------------------------------------------
# knots


def test_empty_sequence_no_knots():
    assert tp.detect_knots(tp.from_code("")) == []


def test_overhand_span():
    (span,) = tp.detect_knots(tp.from_code("U1 O2 U3 O1 U2 O3"))
    assert (span.start_idx, span.end_idx) == (0, 3)
    assert span.first_undercrossing.token() == "U1"


def test_span_needs_intermediate_over():
    (span,) = tp.detect_knots(tp.from_code("U1 U2 O1 O2"))
    assert (span.start_idx, span.end_idx) == (1, 3)
    assert span.first_undercrossing.crossing == 2


def test_spans_do_not_overlap():
    spans = tp.detect_knots(tp.from_code("U1 O2 U3 O1 U2 O3 U4 O5 U6 O4 U5 O6"))
    assert [(s.start_idx, s.end_idx) for s in spans] == [(0, 3), (6, 9)]


# --------------------------------------------------------------------------
# sequences from crossings


def test_overhand_pipeline_sequence(case):
    scene, img, tr = case("overhand")
    obs = cx.correct_crossings(cx.classify_all(cx.OracleClassifier(scene), img, tr.points,
                                               cx.detect_crossings(tr.points)))
    state = tp.build_sequence(obs, tr)
    assert state.code() == "U1 O2 U3 O1 U2 O3"
    assert state.provenance["termination"] == "endpoint_reached"


def test_no_crossings_empty_sequence():
    assert tp.build_sequence([]).code() == ""


def test_single_loop_sequence(case):
    scene, img, tr = case("fake_loop")
    obs = cx.correct_crossings(cx.classify_all(cx.OracleClassifier(scene), img, tr.points,
                                               cx.detect_crossings(tr.points)))
    assert tp.build_sequence(obs).code() == TEMPLATES["fake_loop"].code


def test_unclassified_crossings_rejected():
    obs = [cx.CrossingObservation(np.zeros(2), [cx.Encounter(0, 0.0), cx.Encounter(5, 5.0)])]
    with pytest.raises(ValueError):
        tp.build_sequence(obs)


# --------------------------------------------------------------------------
# grasp points


def brute_g(img, p, half=10, threshold=100):
    x, y = np.round(p).astype(int)
    win = img[max(y - half, 0):y + half, max(x - half, 0):x + half]
    return int((win >= threshold).sum())


@pytest.fixture(scope="module")
def overhand_plan():
    from conftest import template_case
    scene, img, tr = template_case("overhand")
    obs = cx.correct_crossings(cx.classify_all(cx.OracleClassifier(scene), img, tr.points,
                                               cx.detect_crossings(tr.points)))
    state = tp.cancel_crossings(tp.build_sequence(obs, tr))
    knot = tp.detect_knots(state)[0]
    return scene, img, tr, state, knot


def test_loose_overhand_grasp_points(overhand_plan):
    scene, img, tr, state, knot = overhand_plan
    plan = tp.select_cage_pinch(knot, state, tr.points, img)
    assert plan.feasible and plan.search_extended == (False, False)
    cps = np.array(state.crossing_positions)
    for p in (plan.cage_point, plan.pinch_point):
        assert np.linalg.norm(cps - p, axis=1).min() >= tp.EXCLUSION
        assert any(np.allclose(p, q) for q in tr.points)
    assert plan.cage_score == brute_g(img, plan.cage_point)
    assert plan.pinch_score == brute_g(img, plan.pinch_point)
    g = tp.graspability(img, tr.points, cps)
    ok = np.isfinite(g)
    assert all(g[k] == brute_g(img, tr.points[k]) for k in np.flatnonzero(ok)[::5])


def test_zero_threshold_never_extends(overhand_plan):
    _, img, tr, state, knot = overhand_plan
    plan = tp.select_cage_pinch(knot, state, tr.points, img, T=0.0)
    assert plan.search_extended == (False, False)
    lo, hi = state.sequence[knot.start_idx].trace_index, state.sequence[2].trace_index
    assert lo <= plan.cage_index <= hi


def dense_case(n_points=40):
    """Straight bright trace with six encounters 24 px apart, each its own exclusion
    centre, so every in-range point is within 15 px of a crossing."""
    img = np.zeros((100, 520), np.uint8)
    img[46:55, :] = 220
    pts = np.stack([np.arange(n_points) * 12.0 + 10, np.full(n_points, 50.0)], axis=1)
    where = [10, 12, 14, 16, 18, 20]
    code = "U1 O2 U3 O1 U2 O3".split()
    seq = [tp.SeqEncounter(int(t[1:]), t[0], tuple(pts[w]), float(w)) for t, w in zip(code, where)]
    state = tp.TopologyState(seq, [tuple(pts[w]) for w in where])
    return img, pts, state


def test_dense_template_extends_search():
    img, pts, state = dense_case()
    knot = tp.detect_knots(state)[0]
    plan = tp.select_cage_pinch(knot, state, pts, img)
    assert plan.search_extended == (True, True) and plan.feasible
    assert plan.pinch_index > 18 and plan.cage_index > 14
    cps = np.array(state.crossing_positions)
    assert np.linalg.norm(cps - plan.pinch_point, axis=1).min() >= tp.EXCLUSION


def test_extension_runs_off_the_trace():
    img, pts, state = dense_case(n_points=22)
    knot = tp.detect_knots(state)[0]
    plan = tp.select_cage_pinch(knot, state, pts, img)
    assert not plan.feasible


def test_invalid_span():
    img, pts, state = dense_case()
    with pytest.raises(ValueError):
        tp.select_cage_pinch(tp.KnotSpan(4, 2, state.sequence[4]), state, pts, img)


def test_report_json(tmp_path, overhand_plan):
    _, img, tr, state, knot = overhand_plan
    plan = tp.select_cage_pinch(knot, state, tr.points, img)
    rep = tp.topology_report(state, state, [knot], [plan])
    tp.save_report(tmp_path / "r.json", rep)
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["verdict"] == "knot"
    assert tp.TopologyState.from_dict(back["simplified_sequence"]).code() == state.code()
