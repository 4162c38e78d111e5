"""Acceptance battery: one test per named criterion, at full problem sizes.

Each criterion function already encodes its own tolerance; the tests assert
the returned verdict and surface the one-line summary on failure.
"""

from pspinlab import verify


def check(result):
    assert result.passed, result.line()
    print(result.line())


def test_free_energy_exactness():
    check(verify.criterion_free_energy_exactness(seed=0))


def test_enumeration_oracles():
    check(verify.criterion_enumeration_oracles(seed=0, n_instances=50))


def test_pd_moment_identity():
    check(verify.criterion_pd_moment_identity(seed=0, zetas=(0.3, 0.5, 0.7),
                                              K=10_000, M=10_000))


def test_pd_moment_identity_rejects_bad_zeta():
    # negative control: the check reports failure instead of crashing
    result = verify.criterion_pd_moment_identity(seed=0, zetas=(-0.2,))
    assert result.name == "pd_moment_identity"
    assert not result.passed


def test_tilt_invariance():
    check(verify.criterion_tilt_invariance(seed=0, zeta=0.5, K=4000, M=4000))


def test_theta_extension():
    check(verify.criterion_theta_extension(seed=0, n_samples=1000))


def test_cavity_residual_decay():
    check(verify.criterion_cavity_residual_decay(seed=0, reps=400))


def test_fixed_point_selfconsistency():
    check(verify.criterion_fixed_point(seed=0, s_out=1000, s_in=1000))


def test_symmetry_iff_qstar_zero():
    check(verify.criterion_symmetry_battery(seed=0))


def test_field_forces_overlap():
    check(verify.criterion_field_positivity(seed=0, s_out=500, s_in=500))


def test_determinism():
    check(verify.criterion_determinism(seed=0))
