import numpy as np
import pytest

import channels
import criteria
import measurements
import qmat
import states
import thresholds
from models import DimensionMismatchError, SteeringError, STEERABLE, INCONCLUSIVE


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


# --- averaged fidelities ---

@pytest.mark.parametrize("d", [2, 3])
def test_maximally_entangled_state_reaches_unit_fidelity(d):
    bob = measurements.mub_pair(d)
    alice = measurements.conjugate_set(bob)
    w = states.isotropic_state(d, 1.0)
    np.testing.assert_allclose(criteria.per_setting_fidelities(w, alice, bob), [1.0, 1.0], atol=1e-12)
    report = criteria.evaluate_lsi(w, alice, bob)
    assert report.kind == "lsi"
    assert report.verdict == STEERABLE
    assert report.margin == pytest.approx(1 - thresholds.nst_enumerate(bob).f_plus)


def test_averaged_fidelity_dimension_checks(singlet, qubit_mub):
    with pytest.raises(DimensionMismatchError):
        criteria.averaged_fidelity(singlet, measurements.measurement_set(np.eye(2)), qubit_mub)
    with pytest.raises(DimensionMismatchError):
        criteria.alice_operators(singlet, measurements.mub_pair(3))


def test_lsi_needs_finite_bob_with_fixed_alice(singlet, qubit_mub):
    with pytest.raises(SteeringError):
        criteria.evaluate_lsi(singlet, qubit_mub, criteria.CONTINUOUS)
    with pytest.raises(SteeringError):
        criteria.evaluate_lsi(singlet, None, "haar-ish")
    with pytest.raises(SteeringError):
        criteria.evaluate_lsi(singlet, None, qubit_mub, criterion="strongest")


# --- extremal fidelities ---

def test_qubit_extremes_are_exact(qubit_mub):
    ext = criteria.extremal_fidelity(states.isotropic_state(2, 1.0), qubit_mub)
    assert ext.exact
    assert ext.f_plus_bar == pytest.approx(1.0, abs=1e-12)
    assert ext.f_minus_bar == pytest.approx(0.0, abs=1e-12)
    witness = ext.alice_witness
    assert criteria.averaged_fidelity(states.isotropic_state(2, 1.0), witness, qubit_mub) == pytest.approx(1.0)


def test_qubit_extremes_bracket_random_alice_choices():
    w = states.random_bipartite_state(2, seed=3)
    bob = measurements.haar_measurement_set(2, 3, seed=1)
    ext = criteria.extremal_fidelity(w, bob)
    for seed in range(20):
        alice = measurements.haar_measurement_set(2, 3, seed=50 + seed)
        value = criteria.averaged_fidelity(w, alice, bob)
        assert ext.f_minus_bar - 1e-12 <= value <= ext.f_plus_bar + 1e-12


@pytest.mark.parametrize("d", [3, 4])
def test_polar_ascent_finds_known_extremes(d):
    bob = measurements.mub_pair(d)
    ext = criteria.extremal_fidelity(states.isotropic_state(d, 1.0), bob)
    assert not ext.exact
    assert ext.f_plus_bar == pytest.approx(1.0, abs=1e-9)
    assert ext.f_minus_bar == pytest.approx(0.0, abs=1e-9)
    assert len(ext.trace) == bob.settings


@pytest.mark.parametrize("d", [3, 4, 5])
def test_werner_is_invisible_to_the_wjd_type_criterion(d):
    f_plus, _ = thresholds.continuous_thresholds(d)
    ext = criteria.continuous_extremal_fidelity(states.werner_state(d, 1.0), samples=3, seed=0, starts=8)
    assert ext.f_plus_bar == pytest.approx(1 / (d - 1), abs=1e-8)
    assert ext.f_plus_bar < f_plus
    report = criteria.evaluate_lsi(states.werner_state(d, 1.0), None, criteria.CONTINUOUS,
                                   criterion="wjd", samples=3)
    assert report.verdict == INCONCLUSIVE


def test_auto_picks_the_firing_criterion():
    report = criteria.evaluate_lsi(states.werner_state(3, 1.0), None, criteria.CONTINUOUS, samples=3)
    assert report.kind == "werner-type"
    assert report.verdict == STEERABLE
    assert report.details['wjd_type']['verdict'] == INCONCLUSIVE
    assert report.details['f_minus_bar'] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_werner_boundary(d):
    edge = 1 - 1 / d
    below = criteria.evaluate_lsi(states.werner_state(d, edge - 0.01), None, criteria.CONTINUOUS,
                                  criterion="werner", samples=3)
    above = criteria.evaluate_lsi(states.werner_state(d, edge + 0.01), None, criteria.CONTINUOUS,
                                  criterion="werner", samples=3)
    at = criteria.evaluate_lsi(states.werner_state(d, edge), None, criteria.CONTINUOUS,
                               criterion="werner", samples=3)
    assert below.verdict == INCONCLUSIVE
    assert above.verdict == STEERABLE
    assert at.verdict == INCONCLUSIVE
    assert at.details['boundary_adjacent']
    assert above.averaged_fidelity == pytest.approx((1 - edge - 0.01) / d, abs=1e-9)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_isotropic_boundary(d):
    edge = (thresholds.harmonic_number(d) - 1) / (d - 1)
    below = criteria.evaluate_lsi(states.isotropic_state(d, edge - 0.01), None, criteria.CONTINUOUS,
                                  criterion="wjd", samples=3)
    above = criteria.evaluate_lsi(states.isotropic_state(d, edge + 0.01), None, criteria.CONTINUOUS,
                                  criterion="wjd", samples=3)
    assert below.verdict == INCONCLUSIVE
    assert above.verdict == STEERABLE
    eta = edge + 0.01
    assert above.averaged_fidelity == pytest.approx((1 - eta) / d + eta, abs=1e-9)


def test_separable_states_are_never_steerable(qubit_mub):
    bob3 = measurements.mub_pair(3)
    for seed in range(100):
        w2 = states.random_separable_state(2, seed=seed)
        assert criteria.evaluate_lsi(w2, None, qubit_mub).verdict == INCONCLUSIVE
        w3 = states.random_separable_state(3, seed=seed)
        alice = measurements.haar_measurement_set(3, 2, seed=seed)
        assert criteria.evaluate_lsi(w3, alice, bob3).verdict == INCONCLUSIVE


def test_product_state_extremes_follow_bob_outcomes(rng):
    for seed in range(10):
        psi = qmat.haar_unitary(2, seed=rng)[:, 0]
        sigma = qmat.random_density_matrix(2, seed=seed)
        w = states.product_state(np.outer(psi, psi.conj()), sigma)
        bob = measurements.haar_measurement_set(2, 3, seed=seed, weights=[0.5, 0.3, 0.2])
        overlaps = np.real(np.einsum('mia,ij,mja->ma', bob.bases.conj(), sigma, bob.bases))
        ext = criteria.extremal_fidelity(w, bob)
        assert ext.f_plus_bar == pytest.approx(bob.weights @ overlaps.max(axis=1), abs=1e-10)
        assert ext.f_minus_bar == pytest.approx(bob.weights @ overlaps.min(axis=1), abs=1e-10)


def test_qubit_wjd_and_werner_type_criteria_agree(qubit_mub):
    candidates = [states.werner_state(2, w) for w in np.linspace(0.0, 1.0, 11)]
    candidates += [states.isotropic_state(2, eta) for eta in (0.2, 0.6, 0.9)]
    candidates += [states.random_bipartite_state(2, seed=seed) for seed in range(10)]
    bobs = [qubit_mub, measurements.haar_measurement_set(2, 3, seed=9)]
    fired = 0
    for w in candidates:
        for bob in bobs:
            wjd = criteria.evaluate_lsi(w, None, bob, criterion="wjd")
            werner = criteria.evaluate_lsi(w, None, bob, criterion="werner")
            assert wjd.margin == pytest.approx(werner.margin, abs=1e-10)
            assert wjd.verdict == werner.verdict
            fired += wjd.steerable
    assert fired > 0


# --- qubit geometric criteria ---

def test_geometric_criterion_on_the_singlet(singlet):
    bob_dirs = [[1, 0, 0], [0, 0, 1]]
    alice_dirs = [[-1, 0, 0], [0, 0, -1]]
    report = criteria.geometric_criterion(singlet, alice_dirs, bob_dirs)
    assert report.kind == "geometric"
    assert report.averaged_fidelity == pytest.approx(1.0)
    assert report.thresholds == pytest.approx((-1 / np.sqrt(2), 1 / np.sqrt(2)))
    assert report.verdict == STEERABLE
    assert report.details['affine_check'] < 1e-12
    chsh = report.details['chsh']
    assert chsh['applicable']
    assert chsh['value'] == pytest.approx(2 * np.sqrt(2))
    assert chsh['violated']


def test_geometric_and_plain_fidelity_agree(rng):
    for seed in range(20):
        w = states.random_bipartite_state(2, seed=seed)
        n = int(rng.integers(2, 5))
        bob_dirs = [random_unit(rng) for _ in range(n)]
        alice_dirs = [random_unit(rng) for _ in range(n)]
        weights = measurements.random_weights(n, rng)
        report = criteria.geometric_criterion(w, alice_dirs, bob_dirs, weights)
        assert report.details['affine_check'] < 1e-12


def test_steering_operator_equals_chsh_operator(rng):
    for _ in range(20):
        n = random_unit(rng)
        n_perp = np.cross(n, random_unit(rng))
        n_perp /= np.linalg.norm(n_perp)
        a, b = random_unit(rng), random_unit(rng)
        q_n = rng.uniform(0.05, 0.95)
        t_steer, t_chsh = criteria.chsh_operators(a, b, n, n_perp, q_n, 1 - q_n)
        assert np.abs(t_steer - t_chsh).max() < 1e-12


def test_minus_side_geometric_violation_is_a_chsh_violation(singlet):
    directions = [[1, 0, 0], [0, 0, 1]]
    report = criteria.geometric_criterion(singlet, directions, directions)
    assert report.averaged_fidelity == pytest.approx(-1.0)
    assert report.verdict == STEERABLE
    chsh = report.details['chsh']
    assert chsh['alice_sign'] == -1.0
    assert chsh['value'] == pytest.approx(2 * np.sqrt(2))
    assert chsh['violated']


def test_geometric_violations_imply_chsh_violations(rng):
    for index in range(20):
        sign = 1.0 if index % 2 == 0 else -1.0
        u = np.kron(qmat.haar_unitary(2, seed=rng), np.eye(2))
        eta = rng.uniform(0.9, 1.0)
        w = states.validate_density_matrix(u @ states.isotropic_state(2, eta).matrix @ u.conj().T)
        _, _, T = states.standard_form(w)
        n = random_unit(rng)
        n_perp = np.cross(n, random_unit(rng))
        n_perp /= np.linalg.norm(n_perp)
        alice = [sign * T @ v / np.linalg.norm(T @ v) for v in (n, n_perp)]
        q = rng.uniform(0.3, 0.7)
        report = criteria.geometric_criterion(w, alice, [n, n_perp], [q, 1 - q])
        assert report.verdict == STEERABLE
        assert np.sign(report.averaged_fidelity) == sign
        chsh = report.details['chsh']
        assert chsh['alice_sign'] == sign
        assert chsh['violated']
        assert chsh['value'] == pytest.approx(2 * abs(report.averaged_fidelity) / np.hypot(q, 1 - q))


def test_geometric_criterion_never_flags_separable_states(rng):
    for seed in range(100):
        w = states.random_separable_state(2, seed=seed)
        _, _, T = states.standard_form(w)
        bob_dirs = [random_unit(rng) for _ in range(int(rng.integers(2, 4)))]
        alice_dirs = [T @ n / np.linalg.norm(T @ n) for n in bob_dirs]
        weights = measurements.random_weights(len(bob_dirs), rng)
        for sign in (1.0, -1.0):
            report = criteria.geometric_criterion(w, [sign * a for a in alice_dirs], bob_dirs, weights)
            assert report.verdict == INCONCLUSIVE


def test_chsh_mapping():
    cos_t, sin_t = criteria.chsh_mapping(0.5, 0.5)
    assert cos_t == pytest.approx(1 / np.sqrt(2))
    assert sin_t == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(SteeringError):
        criteria.chsh_mapping(1.0, 0.0)


def test_explicit_mub_form(singlet):
    report = criteria.explicit_mub_form(singlet, [-1, 0, 0], [0, 0, -1], [1, 0, 0], [0, 0, 1], 0.5, 0.5)
    assert report.kind == "explicit-mub"
    assert report.averaged_fidelity == pytest.approx(np.sqrt(2))
    assert report.details['chsh_equivalent'] == pytest.approx(2 * np.sqrt(2))
    assert report.verdict == STEERABLE
    with pytest.raises(SteeringError):
        criteria.explicit_mub_form(singlet, [1, 0, 0], [0, 0, 1], [1, 0, 0], [0.6, 0, 0.8], 0.5, 0.5)


# --- sphere integrals ---

def test_sphere_nodes():
    nodes, weights = criteria.sphere_nodes(16)
    assert nodes.shape == (16 * 32, 3)
    np.testing.assert_allclose(np.linalg.norm(nodes, axis=1), 1.0, atol=1e-12)
    assert weights.sum() == pytest.approx(4 * np.pi)
    # integral of n_z^2 over the sphere is 4 pi / 3
    assert weights @ nodes[:, 2] ** 2 == pytest.approx(4 * np.pi / 3)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.6, 1.0])
def test_isotropic_t_integral(t):
    value, error, _ = criteria.t_state_integral((-t, -t, -t), resolution=64)
    assert value == pytest.approx(2 * t, abs=1e-6)
    assert error < 1e-6
    # no validity check here, and only t^2 enters
    assert criteria.t_state_integral((t, t, t))[0] == pytest.approx(value, abs=1e-12)


def test_t_state_verdict_flips_at_one_half():
    assert criteria.t_state_criterion((-0.49, -0.49, -0.49)).verdict == INCONCLUSIVE
    assert criteria.t_state_criterion((-0.51, -0.51, -0.51)).verdict == STEERABLE
    at = criteria.t_state_criterion((-0.5, -0.5, -0.5))
    assert at.verdict == INCONCLUSIVE
    assert at.details['boundary_adjacent']
    report = criteria.t_state_criterion((-0.6, -0.6, -0.6))
    assert report.kind == "t-state"
    assert report.averaged_fidelity == pytest.approx(1.2, abs=1e-6)


def test_t_state_criterion_rejects_invalid_states():
    with pytest.raises(ValueError):
        criteria.t_state_criterion((0.6, 0.6, 0.6))


def test_random_t_states_converge(random_tstate):
    for _ in range(10):
        t = random_tstate()
        report = criteria.t_state_criterion(t, resolution=64)
        assert report.details['quadrature_error'] < 1e-4
        assert report.details['integral'] <= 2 * np.abs(t).max() + 1e-9


def test_general_two_qubit_matches_t_state_integral(random_tstate):
    t = random_tstate()
    general = criteria.general_two_qubit_criterion(states.t_state(t))
    assert general.averaged_fidelity == pytest.approx(criteria.t_state_integral(t)[0], abs=1e-9)
    assert general.kind == "two-qubit"


def test_general_two_qubit_ignores_local_vectors():
    T = np.diag([-0.5, -0.4, -0.3])
    bare = states.two_qubit_from_standard_form([0, 0, 0], [0, 0, 0], T)
    biased = states.two_qubit_from_standard_form([0, 0, 0.1], [0.1, 0, 0], T)
    first = criteria.general_two_qubit_criterion(bare)
    second = criteria.general_two_qubit_criterion(biased)
    assert first.averaged_fidelity == pytest.approx(second.averaged_fidelity, abs=1e-12)


def test_pure_product_states_are_never_steerable(rng):
    for _ in range(200):
        a, b = random_unit(rng), random_unit(rng)
        w = states.two_qubit_from_standard_form(a, b, np.outer(a, b))
        report = criteria.general_two_qubit_criterion(w)
        assert report.verdict == INCONCLUSIVE
        assert report.details['integral'] == pytest.approx(1.0, abs=1e-9)
        assert report.details['quadrature_error'] < 1e-9


def test_general_two_qubit_criterion_never_flags_separable_states():
    for seed in range(100):
        report = criteria.general_two_qubit_criterion(states.random_separable_state(2, seed=seed))
        assert report.verdict == INCONCLUSIVE
        assert report.details['integral'] <= 1.0 + report.error_budget


def test_quadrature_error_bound_is_conservative():
    # rank-two correlations: the integrand has a cone point on the equator
    T = np.diag([0.8, 0.3, 0.0])
    value, error, used = criteria.correlation_integral(T, resolution=16)
    reference, _, _ = criteria.correlation_integral(T, resolution=criteria.MAX_RESOLUTION)
    assert used >= 16
    assert abs(value - reference) <= error + 1e-12


def test_sphere_integral_doubles_until_the_bound_settles():
    calls = []

    def integrand(nodes):
        calls.append(len(nodes))
        return np.sqrt(0.81 * nodes[:, 2] ** 2 + 1e-4 * nodes[:, 0] ** 2)

    value, error, used = criteria.sphere_integral(integrand, resolution=8, even=True)
    assert used > 8
    assert len(calls) >= 4
    assert error <= criteria.QUAD_TARGET or used == criteria.MAX_RESOLUTION


# --- entanglement fidelity ---

def test_entanglement_fidelity_threshold():
    assert criteria.entanglement_fidelity_threshold(2) == pytest.approx(5 / 8)


@pytest.mark.parametrize("f,steerable,preserving", [
    (0.49, False, False),
    (0.51, False, True),
    (0.615, False, True),
    (0.635, True, True),
    (0.9, True, True),
])
def test_depolarizing_verdicts(f, steerable, preserving):
    eta = channels.isotropic_eta_from_fidelity(f, 2)
    report = criteria.entanglement_fidelity_criterion(channels.depolarizing_channel(2, eta))
    assert report.kind == "entanglement-fidelity"
    assert report.steerable is steerable
    assert report.details['entanglement_preserving'] is preserving
    assert report.details['entanglement_fidelity'] == pytest.approx(f)
    assert report.averaged_fidelity == pytest.approx((2 * f + 1) / 3)


def test_entanglement_fidelity_boundary_is_half_eta():
    report = criteria.entanglement_fidelity_criterion(channels.depolarizing_channel(2, 0.5))
    assert report.details['entanglement_fidelity'] == pytest.approx(5 / 8)
    assert report.verdict == INCONCLUSIVE
    assert report.details['boundary_adjacent']


def test_entanglement_fidelity_matches_isotropic_wjd_criterion():
    for eta in (0.35, 0.5):
        channel = channels.depolarizing_channel(3, eta)
        by_fidelity = criteria.entanglement_fidelity_criterion(channel)
        by_state = criteria.evaluate_lsi(channels.choi_state(channel), None, criteria.CONTINUOUS,
                                         criterion="wjd", samples=3)
        assert by_fidelity.verdict == by_state.verdict
        assert by_fidelity.averaged_fidelity == pytest.approx(by_state.averaged_fidelity, abs=1e-8)


def test_entanglement_fidelity_dimension_check():
    with pytest.raises(DimensionMismatchError):
        criteria.entanglement_fidelity_criterion(channels.depolarizing_channel(2, 0.5), d=3)
