import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from o2chain import fss
from o2chain.fss import Series

# generator parameters; positive correction terms keep every form well conditioned
TRUTH = {
    "CHI_PEAK_POS_BKT": [0.35, 1.7, 0.8],
    "SPRIME_POS_IOG": [0.353, 2.49, 0.7, -1.1],
    "SPRIME_POS_BKT": [1.0979, 3.597, 2.0, -3.0],
    "SPRIME_HEIGHT_IOG": [0.064, 2.0, 0.9, 0.05],
    "SPRIME_HEIGHT_BKT": [0.00648, 3.037, 0.6, 0.4, 0.1],
    "CHI_HEIGHT_LOG": [0.2423, 0.5],
    "POWER_LAW": [0.2, 3.0, 0.721],
    "POLY_INV_LOG": [0.1, 0.8, -0.5],
    "LINEAR_INV_L": [0.35062, 4.0],
}
HEIGHT_L = np.arange(32, 1025, 32, dtype=float)
POS_L = np.arange(32, 385, 16, dtype=float)


def sizes(ident):
    return HEIGHT_L if "HEIGHT" in ident or ident == "POWER_LAW" else POS_L


def parabola_series(step=1e-3, center=0.5):
    D = np.round(np.arange(0.4, 0.6 + step / 2, step), 12)
    return Series(32, D, 1 - (D - center) ** 2)


def test_parabola_peak_exact():
    p = fss.find_peak(parabola_series())
    assert abs(p.position - 0.5) < 1e-10
    assert abs(p.height - 1.0) < 1e-10
    assert p.window[0] < p.position < p.window[1]
    assert p.window[1] - p.window[0] == pytest.approx(0.01, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(c=st.floats(0.45, 0.55), a=st.floats(0.5, 5.0), k=st.floats(-5.0, 5.0))
def test_cubic_peak_exact(c, a, k):
    # y = -a (x-c)^2 + b (x-c)^3 with |b| < 6a: the max over the bracket is at c
    b = k * a
    D = np.round(np.arange(0.3, 0.7 + 5e-4, 1e-3), 12)
    y = -a * (D - c) ** 2 + b * (D - c) ** 3
    p = fss.find_peak(Series(16, D, y), bracket=(0.4, 0.6))
    assert abs(p.position - c) < 1e-10
    assert abs(p.height) < 1e-10
    # height is never below the raw samples in its window, beyond interpolation slack
    sel = (D >= p.window[0]) & (D <= p.window[1])
    assert p.height >= y[sel].max() - 1e-12


def test_spline_boundary_sensitivity():
    # smooth peak: the boundary condition moves the estimate far below the grid step
    D = np.round(np.arange(0.9, 1.3, 1e-3), 12)
    y = 1 / (1 + ((D - 1.1034) / 0.2) ** 2)
    err = {bc: abs(fss.find_peak(Series(32, D, y), bc=bc).position - 1.1034)
           for bc in ("not-a-knot", "natural", "clamped")}
    assert max(err.values()) < 1e-5
    assert err["not-a-knot"] < 1e-8
    assert err["not-a-knot"] < err["natural"] < err["clamped"]


def test_noisy_lorentzian():
    rng = np.random.default_rng(3)
    D0 = 1.0973
    D = np.round(np.arange(1.0, 1.2, 1e-3), 12)
    y = 0.05 / (1 + ((D - D0) / 0.1) ** 2) + 1e-6 * rng.standard_normal(len(D))
    assert abs(fss.find_peak(Series(64, D, y)).position - D0) < 1e-4


def test_peak_errors():
    D = np.round(np.arange(0.0, 0.1, 1e-3), 12)
    with pytest.raises(fss.NoInteriorMax):
        fss.find_peak(Series(8, D, D))
    coarse = np.arange(0.0, 1.0, 0.05)
    with pytest.raises(fss.WindowTooSparse):
        fss.find_peak(Series(8, coarse, -(coarse - 0.5) ** 2))
    with pytest.raises(ValueError):
        Series(8, [0.1, 0.1, 0.2], [1, 2, 3])


def test_crossing_lines():
    D = np.linspace(0, 1, 101)
    a, b = Series(8, D, D), Series(16, D, 1 - D)
    assert fss.crossing_point(a, b) == pytest.approx(0.5, abs=1e-12)


def test_crossing_constructed():
    D1 = np.round(np.arange(0.9, 1.3, 1e-3), 12)
    D2 = np.round(np.arange(0.95, 1.35, 2e-3), 12)
    f = lambda x: 0.6 + 0.3 * np.sin(3 * (x - 1.1))
    g = lambda x: 0.6 - 0.2 * np.tanh(4 * (x - 1.1)) + 0.05 * (x - 1.1) ** 2
    a, b = Series(32, D1, f(D1)), Series(64, D2, g(D2))
    x = fss.crossing_point(a, b)
    assert abs(x - 1.1) < 1e-6
    assert abs(fss.crossing_point(b, a) - x) < 1e-10


def test_crossing_errors():
    D = np.linspace(0, 1, 51)
    with pytest.raises(fss.NoSignChange):
        fss.crossing_point(Series(8, D, D + 1), Series(16, D, D))
    with pytest.raises(fss.MultipleRoots):
        fss.crossing_point(Series(8, D, np.sin(12 * D)), Series(16, D, np.zeros_like(D)))
    # narrowing the window isolates one root
    x = fss.crossing_point(Series(8, D, np.sin(12 * D)), Series(16, D, np.zeros_like(D)), window=(0.2, 0.4))
    assert x == pytest.approx(math.pi / 12, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(0.3, 0.7), s1=st.floats(0.5, 3.0), s2=st.floats(-3.0, -0.5))
def test_crossing_symmetric(x0, s1, s2):
    D = np.linspace(0.0, 1.0, 201)
    a = Series(8, D, s1 * (D - x0) + 0.1 * D**2)
    b = Series(16, D, s2 * (D - x0) + 0.1 * D**2)
    x = fss.crossing_point(a, b)
    assert abs(x - fss.crossing_point(b, a)) <= 1e-10
    assert abs(x - x0) < 1e-8


@pytest.mark.parametrize("ident", sorted(TRUTH))
def test_identifiability_noise_free(ident):
    L = sizes(ident)
    truth = np.array(TRUTH[ident])
    y = fss.get_model(ident)(L, *truth)
    res = fss.fit_scaling(ident, L, y, truth * 1.1)
    assert res.success
    assert np.allclose(res.values, truth, rtol=1e-6, atol=0)


def test_power_law_example():
    L = np.arange(32, 1025, 32, dtype=float)
    y = 0.2 + 3 / L**0.721
    res = fss.fit_scaling("POWER_LAW", L, y, fss.default_init("POWER_LAW", L, y))
    assert np.allclose(res.values, [0.2, 3, 0.721], rtol=1e-6)


def test_eq13_synthetic_recovery():
    L = np.arange(32, 385, 32, dtype=float)
    truth = [1.0979, 3.597, 2.0, -3.0]
    y = fss.get_model("SPRIME_POS_BKT")(L, *truth)
    res = fss.fit_scaling("SPRIME_POS_BKT", L, y, fss.default_init("SPRIME_POS_BKT", L, y))
    assert abs(res["Dc"] - 1.0979) < 1e-3
    assert abs(res["b"] - 3.597) < 0.01 * 3.597


def test_eq12_recovery_within_uncertainty():
    L = np.arange(96, 1025, 32, dtype=float)
    truth = [0.353, 2.49, 0.7, -1.1]
    rng = np.random.default_rng(11)
    y = fss.get_model("SPRIME_POS_IOG")(L, *truth) + 1e-4 * rng.standard_normal(len(L))
    res = fss.fit_scaling("SPRIME_POS_IOG", L, y, fss.default_init("SPRIME_POS_IOG", L, y))
    assert abs(res["Dc"] - 0.353) < 3 * res.error("Dc")
    assert abs(res["b"] - 2.49) < 3 * res.error("b")


def test_leading_order_two_point_fit():
    L = np.array([256.0, 512.0])
    y = 1.0979 + 3.597**2 / np.log(L) ** 2
    res = fss.fit_scaling("SPRIME_POS_BKT", L, y, [1.0, 3.0, 0, 0], fixed={"d": 0, "e": 0})
    assert res["Dc"] == pytest.approx(1.0979, rel=1e-10)
    assert res["b"] == pytest.approx(3.597, rel=1e-10)
    assert res.dof == 0 and np.isnan(res.error("Dc")) and res.error("d") == 0.0
    assert "(fixed)" in res.to_text()


def test_fit_argument_errors():
    L = np.array([32.0, 64.0])
    with pytest.raises(ValueError):
        fss.fit_scaling("POWER_LAW", L, [1.0, 2.0], [1, 1, 1])
    with pytest.raises(KeyError):
        fss.fit_scaling("POWER_LAW", L, [1.0, 2.0], [1, 1, 1], fixed={"q": 1})
    with pytest.raises(KeyError):
        fss.get_model("EQ99")
    with pytest.raises(fss.SingularJacobian):
        L = np.full(6, 64.0)
        fss.fit_scaling("LINEAR_INV_L", L, 1 + 1 / L, [1, 1])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_residual_invariant_under_reordering(seed):
    rng = np.random.default_rng(seed)
    L = np.arange(32, 1025, 64, dtype=float)
    y = 0.2 + 3 / L**0.7 + 1e-4 * rng.standard_normal(len(L))
    perm = rng.permutation(len(L))
    a = fss.fit_scaling("POWER_LAW", L, y, [0.2, 3, 0.7])
    b = fss.fit_scaling("POWER_LAW", L[perm], y[perm], [0.2, 3, 0.7])
    assert a.residual_norm == pytest.approx(b.residual_norm, rel=1e-9, abs=1e-15)
    assert np.allclose(a.values, b.values, rtol=1e-7)


def test_central_charge_examples():
    assert fss.central_charge(0.064, 2.49, "IOG") == pytest.approx(0.956, abs=1e-3)
    assert fss.central_charge(0.00648, 3.597, "BKT") == pytest.approx(1.006, abs=2e-3)
    assert fss.central_charge(1 / (6 * 2.49), 2.49, "IOG") == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        fss.central_charge(-1, 2, "IOG")
    with pytest.raises(ValueError):
        fss.central_charge(1, 2, "XY")
    c, dc = fss.central_charge_with_error(0.064, 2.49, "IOG", 0.006, 0.11)
    assert c == pytest.approx(0.956, abs=1e-3) and 0.05 < dc < 0.15


@settings(max_examples=100)
@given(c=st.floats(0.1, 10.0), b=st.floats(0.01, 100.0))
def test_central_charge_inverse_identity(c, b):
    assert fss.central_charge(c / (12 * b * b), b, "BKT") == pytest.approx(c, rel=1e-12)


def test_chi_height_extrapolate():
    L = np.array([32, 64, 128, 256, 512], float)
    res = fss.chi_height_extrapolate(L, 0.2423 + 0.4 / np.log(L), "BKT_LOG")
    assert abs(res["C"] - 0.2423) < 1e-8
    rng = np.random.default_rng(1)
    L = np.arange(32, 1025, 32, dtype=float)
    y = 0.05 + 1.5 / L**0.721
    y = y * (1 + 0.01 * rng.standard_normal(len(L)))
    res = fss.chi_height_extrapolate(L, y, "IOG_POWER", sigma=0.01 * np.abs(y))
    assert abs(res["p"] - 0.721) < 3 * res.error("p")
    with pytest.raises(ValueError):
        fss.chi_height_extrapolate(L[:3], y[:3], "BKT_LOG")


def test_classification_labels():
    L = np.arange(32, 1025, 32, dtype=float)
    iog = fss.get_model("SPRIME_HEIGHT_IOG")(L, 0.064, 2.0, 0.9, 0.05)
    bkt = fss.get_model("SPRIME_HEIGHT_BKT")(L, 0.00648, 3.0, 0.6, 0.4, 0.1)
    a = fss.classify_transition(L, iog)
    b = fss.classify_transition(L, bkt)
    assert a.label == "IOG" and abs(a.p - 2.0) < 1e-6
    assert b.label == "BKT" and abs(b.p - 3.0) < 1e-6
    rng = np.random.default_rng(0)
    for _ in range(10):
        mid = fss.get_model("SPRIME_HEIGHT_IOG")(L, 0.02, 2.5, 0.0, 0.0)
        mid = mid * (1 + 0.01 * rng.standard_normal(len(L)))
        try:
            c = fss.classify_transition(L, mid, sigma=0.01 * mid)
        except fss.Ambiguous:
            continue
        assert abs(c.p - 2.5) >= c.p_error
        assert c.label == ("IOG" if c.p < 2.5 else "BKT")
    far = fss.get_model("SPRIME_HEIGHT_IOG")(L, 0.02, 4.5, 0.0, 0.0)
    with pytest.raises(fss.Ambiguous):
        fss.classify_transition(L, far)


def test_reports():
    L = np.arange(32, 400, 32, dtype=float)
    res = fss.fit_scaling("LINEAR_INV_L", L, 0.35 + 4 / L, [0.3, 3])
    text = res.to_text()
    assert text.startswith("model: LINEAR_INV_L") and "C: 0.35" in text
    table = res.plot_table(0.35 + 4 / L)
    assert len(table) == len(L) and table[0]["y_fit"] == pytest.approx(table[0]["y"])
    assert len(res.plot_table(n=5)) == 5
    csv_text = fss.fits_to_csv([res])
    assert csv_text.splitlines()[0].startswith("model,")


def test_guard():
    p = fss.PeakEstimate(32, 1.1, 0.05, (1.095, 1.105), "cubic-spline")
    assert fss.crossing_guard(p, 1.0)
    assert not fss.crossing_guard(p, 1.2)
