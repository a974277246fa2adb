import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopgame.demos import builtin_model
from stopgame.hamiltonian import bracket_matrix, eval_hamiltonian, isaacs_audit
from stopgame.model import compute_bounds, generate_random_model, model_from_tables


def _matrix_game(br):
    """1-state, zero-generator model whose bracket at w=0 is exactly ``br``."""
    br = np.asarray(br, dtype=np.float64)
    n_u, n_v = br.shape
    times = [0.0, 1.0]
    q = np.zeros((2, n_u, n_v, 1, 1))
    h = np.broadcast_to(br[None, None], (2, 1, n_u, n_v)).copy()
    return model_from_tables(times, q, h, np.zeros((2, 1)),
                             list(range(n_u)), list(range(n_v)))


def test_hand_computed_matrix_game():
    # rows are minimizer actions: row maxima (3, 2) -> value 2 at u=1;
    # column minima (1, 0) -> lower value 1 at v=0
    m = _matrix_game([[1.0, 3.0], [2.0, 0.0]])
    res = eval_hamiltonian(m, 0.5, 0, np.zeros(1))
    assert res.value == 2.0
    assert res.argmin_u == 1
    assert res.inner_argmax_v == 0
    assert res.lower_value == 1.0
    assert res.argmax_v == 0
    assert res.isaacs_gap == 1.0


def test_saddle_point_game_has_zero_gap():
    m = _matrix_game([[2.0, 5.0], [1.0, 3.0]])  # saddle at (1, 1)
    res = eval_hamiltonian(m, 0.0, 0, np.zeros(1))
    assert res.isaacs_gap == pytest.approx(0.0, abs=0.0)
    assert res.value == 3.0 and res.lower_value == 3.0
    assert res.argmin_u == 1 and res.argmax_v == 1


def test_ties_break_to_lowest_index():
    m = _matrix_game([[1.0, 1.0], [1.0, 1.0]])
    res = eval_hamiltonian(m, 0.0, 0, np.zeros(1))
    assert res.argmin_u == 0
    assert res.inner_argmax_v == 0
    assert res.argmax_v == 0


def test_bracket_matrix_definition():
    m = generate_random_model(3, 2, 2, 1.0, seed=4)
    t, i = 0.3, 1
    w = np.array([0.5, -1.0, 2.0])
    br = bracket_matrix(m, t, i, w)
    q = m.q_at(t)
    h = m.h_at(t)
    ref = np.empty((2, 2))
    for u in range(2):
        for v in range(2):
            ref[u, v] = q[u, v, i] @ w + h[i, u, v]
    assert np.allclose(br, ref, atol=1e-14)


def test_non_finite_w_rejected():
    m = builtin_model("two_state_game")
    with pytest.raises(ValueError, match="non-finite"):
        eval_hamiltonian(m, 0.0, 0, np.array([np.nan, 0.0]))


def test_minimax_inequality_random_samples():
    rng = np.random.default_rng(17)
    m = generate_random_model(3, 3, 2, 1.0, seed=17)
    for _ in range(200):
        t = rng.uniform(0.0, 1.0)
        i = rng.integers(0, 3)
        w = rng.normal(size=3) * 3.0
        res = eval_hamiltonian(m, t, int(i), w)
        assert res.isaacs_gap >= -1e-12


def test_constant_shift_invariance():
    # generator rows sum to zero, so H(w + c) == H(w)
    m = generate_random_model(4, 2, 3, 2.0, seed=8)
    rng = np.random.default_rng(8)
    for _ in range(50):
        t = rng.uniform(0.0, 2.0)
        i = int(rng.integers(0, 4))
        w = rng.normal(size=4)
        c = rng.normal() * 10.0
        a = eval_hamiltonian(m, t, i, w)
        b = eval_hamiltonian(m, t, i, w + c)
        assert b.value == pytest.approx(a.value, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=2),
       st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=2))
def test_lipschitz_in_w(w1, w2):
    m = builtin_model("two_state_game")
    b = compute_bounds(m)
    w1 = np.array(w1)
    w2 = np.array(w2)
    for i in range(m.d):
        a = eval_hamiltonian(m, 0.4, i, w1).value
        c = eval_hamiltonian(m, 0.4, i, w2).value
        assert abs(a - c) <= m.d * b.m_q * np.max(np.abs(w1 - w2)) + 1e-12


def test_isaacs_audit_zero_gap_for_separable_costs():
    m = builtin_model("two_state_game")
    rng = np.random.default_rng(2)
    ts = rng.uniform(0.0, 1.0, size=16)
    ws = rng.normal(size=(16, 2))
    gap, witness = isaacs_audit(m, ts, ws)
    assert gap <= 1e-12
    t_w, i_w, w_w = witness
    assert 0.0 <= t_w <= 1.0 and i_w in (0, 1) and w_w.shape == (2,)


def test_isaacs_audit_finds_positive_gap():
    m = _matrix_game([[1.0, 3.0], [2.0, 0.0]])
    gap, witness = isaacs_audit(m, np.array([0.5]), np.zeros((1, 1)))
    assert gap == pytest.approx(1.0)
