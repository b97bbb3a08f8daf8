import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from o2chain import exact
from o2chain.model import ChainSpec
from o2chain.mps import DmrgSettings
from o2chain.observables import (EngineFailure, chi_f_from_fidelity, delta_convergence_study,
                                 fidelity_from_vectors, measure_point, scan)


def test_identical_states():
    v = np.random.default_rng(0).standard_normal(50)
    v /= np.linalg.norm(v)
    fid, infid = fidelity_from_vectors(v, v)
    assert fid == 1.0 and infid == 0.0
    assert chi_f_from_fidelity(infid, 10, 1e-3) == 0.0
    # global sign is a gauge choice
    assert fidelity_from_vectors(v, -v)[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(1e-7, 1.0), n=st.integers(2, 30))
def test_infidelity_of_rotated_vector(theta, n):
    rng = np.random.default_rng(n)
    a, b = np.linalg.qr(rng.standard_normal((n, 2)))[0].T
    rot = math.cos(theta) * a + math.sin(theta) * b
    fid, infid = fidelity_from_vectors(a, rot)
    assert fid == pytest.approx(math.cos(theta), rel=1e-12)
    # 1 - cos(theta) = 2 sin^2(theta / 2), without cancellation
    assert infid == pytest.approx(2 * math.sin(theta / 2) ** 2, rel=1e-9)
    assert 0.0 <= fid <= 1.0


def test_ed_chi_f_matches_sum_over_states():
    spec = ChainSpec("u", 1, 8, 0.9)
    p = measure_point(spec, 1e-5, "ed")
    assert p.chi_f == pytest.approx(exact.chi_f_perturbative(spec), rel=1e-4)
    assert 0 <= p.fidelity <= 1 and p.entropy >= 0


def test_point_is_deterministic():
    spec = ChainSpec("u", 1, 6, 0.7)
    a = measure_point(spec, 5e-4, "ed")
    b = measure_point(spec, 5e-4, "ed")
    assert a.as_dict() == b.as_dict()
    s = DmrgSettings(epsilon=1e-10)
    c = measure_point(spec, 5e-4, "dmrg", s)
    d = measure_point(spec, 5e-4, "dmrg", s)
    assert c.as_dict() == d.as_dict()


def test_dmrg_point_matches_ed():
    spec = ChainSpec("u", 1, 8, 1.0)
    ed = measure_point(spec, 5e-4, "ed")
    dm = measure_point(spec, 5e-4, "dmrg", DmrgSettings(epsilon=1e-12))
    assert abs(dm.fidelity - ed.fidelity) < 1e-10
    assert abs(dm.entropy - ed.entropy) < 1e-8
    assert abs(dm.entropy_derivative - ed.entropy_derivative) < 1e-4
    assert dm.quality["converged"] and dm.quality["epsilon"] == 1e-12
    assert ed.quality["epsilon"] == 0.0


def test_delta_halving_consistent_with_first_order_bias():
    spec = ChainSpec("u", 1, 6, 1.0)
    ref = exact.chi_f_perturbative(spec)
    c1 = measure_point(spec, 5e-4, "ed").chi_f
    c2 = measure_point(spec, 2.5e-4, "ed").chi_f
    # first-order bias: halving delta halves the error
    assert abs(c2 - ref) == pytest.approx(abs(c1 - ref) / 2, rel=0.05)
    assert abs(c1 - c2) == pytest.approx(abs(c1 - ref) / 2, rel=0.05)


def test_forward_vs_central_entropy_derivative():
    spec = ChainSpec("u", 1, 6, 0.9)
    h = 5e-4
    S = [exact.entanglement_entropy_exact(exact.ground_state(spec.with_D(spec.D + k * h))) for k in (-1, 0, 1)]
    forward = -(S[2] - S[1]) / h
    central = -(S[2] - S[0]) / (2 * h)
    second = (S[2] - 2 * S[1] + S[0]) / h**2
    assert measure_point(spec, h, "ed").entropy_derivative == pytest.approx(forward, rel=1e-12)
    # forward minus central is -h S''/2 to leading order
    assert abs(forward - central) <= abs(second) * h / 2 * 1.01 + 1e-9


def test_delta_study_monotone():
    study = delta_convergence_study(ChainSpec("u", 1, 6, 1.0), [1e-3, 1e-4, 1e-5])
    assert np.all(np.diff(study.errors) < 0)
    assert np.all(study.errors[1:] <= study.errors[:-1] / 9)
    assert np.all(study.observed_order >= 0.95)
    rows = list(study.rows())
    assert len(rows) == 3 and rows[0]["delta"] == 1e-3


def test_scan_warm_start_equivalent():
    spec = ChainSpec("u", 1, 8, 1.0)
    s = DmrgSettings(epsilon=1e-12)
    Ds = [1.0, 0.98, 0.96]
    warm = list(scan(spec, Ds, 5e-4, "dmrg", s))
    cold = list(scan(spec, Ds, 5e-4, "dmrg", s, warm_start=False))
    for a, b in zip(warm, cold):
        assert abs(a.chi_f - b.chi_f) < 1e-6 * b.chi_f
        assert abs(a.entropy - b.entropy) < 1e-9


def test_bad_arguments_and_failure():
    spec = ChainSpec("u", 1, 6, 1.0)
    with pytest.raises(ValueError):
        measure_point(spec, 0.0, "ed")
    with pytest.raises(ValueError):
        measure_point(spec, 1e-3, "qmc")
    with pytest.raises(EngineFailure) as info:
        measure_point(spec, 1e-3, "dmrg", DmrgSettings(max_sweeps=1, min_sweeps=1, entropy_convergence=0.0))
    assert info.value.point is not None
    assert not info.value.point.quality["converged"]
