import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nhent.evolve import Schedule, correlation_matrix, evolve_trajectory, init_neel
from nhent.model import ModelParams, build_hamiltonian, sample_disorder
from nhent.observables import (
    antipodal_quarters,
    chord_coordinate,
    connected_correlation,
    correlation_exponent,
    correlation_profile,
    density_profile,
    entanglement_entropy,
    entropy_profile,
    half_chain_entropy,
    mutual_information,
    power_law_exponent,
)
from nhent.reference import brute_force_evolution, clean_pbc_correlation


def random_frame(L, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((L, L // 2)) + 1j * rng.standard_normal((L, L // 2))
    return np.linalg.qr(A)[0]


def evolved(L, gamma, W, seed, n_steps=20, boundary="open"):
    params = ModelParams(gamma=gamma, W=W, L=L, boundary=boundary)
    return evolve_trajectory(params, sample_disorder(params, seed), Schedule(n_steps=n_steps, record_last=1))[-1]


def test_product_state_entropy_zero():
    D = np.diag([0, 1, 0, 1]).astype(complex)
    assert entanglement_entropy(D, [0, 1]) == 0.0


def test_single_mode_half_filling():
    Q = np.zeros((4, 2), dtype=complex)
    Q[0, 0] = Q[1, 0] = 1 / math.sqrt(2)
    Q[3, 1] = 1
    assert entanglement_entropy(correlation_matrix(Q), [0]) == pytest.approx(math.log(2), abs=1e-15)


def test_clean_periodic_half_chain_entropy():
    L = 256
    S = half_chain_entropy(clean_pbc_correlation(L))
    assert abs(S - (math.log(L) / 3 + 0.34)) < 0.03


def test_empty_or_bad_subsystem():
    D = np.eye(4) * 0.5
    with pytest.raises(ValueError):
        entanglement_entropy(D, [])
    with pytest.raises(ValueError):
        entanglement_entropy(D, [4])
    with pytest.raises(ValueError):
        entanglement_entropy(D, [1, 1])


def test_neel_density():
    np.testing.assert_array_equal(density_profile(correlation_matrix(init_neel(8))), [0, 1] * 4)


def test_density_sum_rule():
    n = density_profile(evolved(16, -0.5, 2.0, 3))
    assert abs(n.sum() - 8) < 1e-8
    assert n.min() > -1e-9 and n.max() < 1 + 1e-9


def test_neel_correlations_vanish():
    D = correlation_matrix(init_neel(16))
    assert all(connected_correlation(D, l) == 0 for l in range(1, 9))


def test_clean_correlation_parity():
    L = 512
    C = correlation_profile(clean_pbc_correlation(L))
    ls = np.arange(1, 41)
    even, odd = ls[ls % 2 == 0], ls[ls % 2 == 1]
    assert np.max(C[even - 1]) < 1e-28
    # finite-L sums converge to 1/(pi l)^2 with O(l/L) corrections
    np.testing.assert_allclose(C[odd - 1], 1 / (np.pi * odd) ** 2, rtol=0.05)
    assert np.all(np.abs(C[odd[:3] - 1] * (np.pi * odd[:3]) ** 2 - 1) < 1e-3)


def test_connected_correlation_range():
    D = correlation_matrix(init_neel(8))
    with pytest.raises(ValueError):
        connected_correlation(D, 0)
    with pytest.raises(ValueError):
        connected_correlation(D, 5)


def test_connected_correlation_matches_profile():
    D = evolved(16, -0.5, 1.0, 2)
    np.testing.assert_allclose(correlation_profile(D), [connected_correlation(D, l) for l in range(1, 9)], rtol=1e-14)
    # 1-based site L/2 is index L/2 - 1
    assert connected_correlation(D, 1) == abs(D[7, 8]) ** 2


def test_chord_coordinate():
    assert chord_coordinate(32, 64) == pytest.approx(64 / np.pi, rel=1e-15)
    assert chord_coordinate(1, 10**6) == pytest.approx(1.0, rel=1e-10)
    assert chord_coordinate(3, 20) == pytest.approx(chord_coordinate(17, 20), rel=1e-14)


def test_clean_pbc_closed_form_exponent():
    assert correlation_exponent(clean_pbc_correlation(256)) == pytest.approx(2.0, abs=1e-9)


def test_clean_pbc_steady_state_exponent():
    # time average of C over the recorded window, as for every other steady-state observable
    L = 128
    params = ModelParams(gamma=-0.5, W=0.0, L=L, boundary="periodic")
    C = np.mean([correlation_profile(D) for D in evolve_trajectory(params, np.zeros(L))], axis=0)
    ls = np.arange(1, L // 2 + 1, 2)
    assert abs(power_law_exponent(chord_coordinate(ls, L), C[ls - 1]) - 2.0) < 0.1


def test_mutual_information_product_state():
    D = correlation_matrix(init_neel(12))
    assert mutual_information(D, range(3), range(6, 9)) == 0.0


def test_mutual_information_complementary():
    D = evolved(12, -0.5, 1.0, 4)
    A, B = range(5), range(5, 12)
    assert mutual_information(D, A, B) == pytest.approx(2 * entanglement_entropy(D, A), abs=1e-9)


def test_mutual_information_overlap_rejected():
    with pytest.raises(ValueError):
        mutual_information(np.eye(8) * 0.5, [0, 1], [1, 2])


def test_antipodal_quarters():
    A, B = antipodal_quarters(16)
    assert list(A) == [0, 1, 2, 3] and list(B) == [12, 13, 14, 15]


def test_strong_disorder_mutual_information():
    params = ModelParams(gamma=-0.5, W=6.0, L=128)
    A, B = antipodal_quarters(128)
    I = [np.mean([mutual_information(D, A, B) for D in evolve_trajectory(params, sample_disorder(params, s))])
         for s in range(8)]
    assert np.mean(I) < 0.02


@pytest.mark.parametrize("L, gamma, W, t", [(6, 0.0, 0.0, 5.0), (8, -0.5, 2.0, 20.0), (10, -0.5, 5.0, 10.0)])
def test_entropies_match_brute_force(L, gamma, W, t):
    params = ModelParams(gamma=gamma, W=W, L=L)
    dis = sample_disorder(params, 17)
    n = math.ceil(t / 2)
    D = evolve_trajectory(params, dis, Schedule(dt=t / n, n_steps=n, record_last=1))[-1]
    ref = brute_force_evolution(build_hamiltonian(params, dis), t)
    rng = np.random.default_rng(0)
    subsets = [list(range(l)) for l in range(1, L)] + [sorted(rng.choice(L, k, replace=False)) for k in (2, 3, 4)]
    for A in subsets:
        assert abs(entanglement_entropy(D, A) - ref.entropy(A)) < 1e-8


frames = st.tuples(st.integers(2, 12).map(lambda n: 2 * n), st.integers(0, 2**32))


@settings(max_examples=40, deadline=None)
@given(frame=frames, data=st.data())
def test_complementarity(frame, data):
    L, seed = frame
    D = correlation_matrix(random_frame(L, seed))
    A = data.draw(st.lists(st.integers(0, L - 1), min_size=1, max_size=L - 1, unique=True))
    Ac = sorted(set(range(L)) - set(A))
    assert abs(entanglement_entropy(D, A) - entanglement_entropy(D, Ac)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(frame=frames, data=st.data())
def test_entropy_bounds_and_subadditivity(frame, data):
    L, seed = frame
    D = correlation_matrix(random_frame(L, seed))
    sites = data.draw(st.permutations(range(L)))
    k = data.draw(st.integers(1, L - 1))
    j = data.draw(st.integers(k, L))
    A, B = sites[:k], sites[k:j] if j > k else sites[k:k + 1]
    S = entanglement_entropy(D, A)
    assert 0 <= S <= len(A) * math.log(2) + 1e-9
    if len(B) and not set(A) & set(B):
        assert mutual_information(D, A, B) >= -1e-8


@settings(max_examples=25, deadline=None)
@given(L=st.integers(2, 16).map(lambda n: 2 * n), seed=st.integers(0, 2**32))
def test_profile_complementarity_and_bounds(L, seed):
    D = correlation_matrix(random_frame(L, seed))
    S = entropy_profile(D)
    suffix = [entanglement_entropy(D, range(l, L)) for l in range(1, L)]
    np.testing.assert_allclose(S, suffix, atol=1e-8)
    l = np.arange(1, L)
    assert np.all(S <= np.minimum(l, L - l) * math.log(2) + 1e-9)


def test_translation_invariant_profile_is_symmetric():
    S = entropy_profile(clean_pbc_correlation(64))
    np.testing.assert_allclose(S, S[::-1], atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(L=st.integers(3, 10).map(lambda n: 2 * n), seed=st.integers(0, 2**32),
       gamma=st.sampled_from([0.0, -0.5]), W=st.floats(0, 6))
def test_clipping_neutral(L, seed, gamma, W):
    D = evolved(L, gamma, W, seed)
    np.testing.assert_allclose(entropy_profile(D, eps=5e-13), entropy_profile(D), atol=1e-9)


@pytest.mark.long
def test_skin_domain_wall_density():
    L = 320
    params = ModelParams(gamma=-0.5, W=1.5, L=L)
    n = np.mean([density_profile(D) for D in evolve_trajectory(params, sample_disorder(params, 0))], axis=0)
    assert n[: L // 4].mean() > 0.9
    assert n[-L // 4 :].mean() < 0.1
    assert abs(n.sum() - L / 2) < 1e-8
