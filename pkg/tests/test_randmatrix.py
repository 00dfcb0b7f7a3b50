import math

import numpy as np
import pytest
from scipy import integrate

from analysis.errors import DegenerateDistanceError, InvalidArgumentError, OutOfRegimeError
from analysis.randmatrix import (
    PART_COSINE,
    PART_SINC,
    CubeEnsemble,
    LimitingLaw,
    RegimeDescriptor,
    build_kernels,
    cauchy_density,
    compare_esd,
    eigensolver_residual,
    esd,
    law_curve,
    law_for,
    mp_cdf,
    mp_density,
    regime,
    sample_cube,
    semicircle_cdf,
    semicircle_density,
    spectra,
    spectrum,
)

BETA_FIG10 = 0.1277


# ==================================================
# ENSEMBLE / REGIME
# ==================================================
def test_sample_cube_inside_and_deterministic():
    e = CubeEnsemble(n=2, side_m=1.0, lambda_m=0.3, seed=5)
    pts = sample_cube(e)
    assert pts.shape == (2, 3)
    assert np.all((pts >= 0) & (pts <= 1.0))
    assert np.array_equal(pts, sample_cube(e))


def test_sample_cube_is_uniform():
    pts = sample_cube(CubeEnsemble(n=10_000, side_m=20.0, lambda_m=0.3, seed=1))
    np.testing.assert_allclose(pts.mean(axis=0), 10.0, rtol=0.02)


def test_invalid_ensembles():
    with pytest.raises(InvalidArgumentError):
        CubeEnsemble(n=1, side_m=1.0, lambda_m=0.3)
    with pytest.raises(InvalidArgumentError):
        CubeEnsemble(n=10, side_m=0.0, lambda_m=0.3)
    with pytest.raises(InvalidArgumentError):
        CubeEnsemble(n=10, side_m=1.0, lambda_m=-0.3)


def test_regime_reference_values():
    fig10 = regime(CubeEnsemble(n=8000, side_m=20.0, lambda_m=0.3))
    assert fig10.beta == pytest.approx(BETA_FIG10, abs=1e-4)
    assert fig10.rho_lambda3 == pytest.approx(0.027)

    fig11 = regime(CubeEnsemble(n=8000, side_m=40.0, lambda_m=0.3))
    assert fig11.beta == pytest.approx(0.0319, abs=1e-4)
    assert fig11.rho_lambda3 == pytest.approx(0.0034, abs=1e-4)

    desk = regime(CubeEnsemble(n=2000, side_m=10.0, lambda_m=0.3))
    assert desk.beta == pytest.approx(fig10.beta, rel=1e-12)


def test_regime_is_linear_in_n():
    a = regime(CubeEnsemble(n=1000, side_m=7.0, lambda_m=0.3))
    b = regime(CubeEnsemble(n=2000, side_m=7.0, lambda_m=0.3))
    assert b.beta == pytest.approx(2 * a.beta)
    assert b.rho_lambda3 == pytest.approx(2 * a.rho_lambda3)


def test_regime_from_density_agrees():
    e = CubeEnsemble(n=3000, side_m=12.0, lambda_m=0.25)
    reg = regime(e)
    other = RegimeDescriptor.from_density(reg.rho_lambda3, e.side_m / e.lambda_m)
    assert other.beta == pytest.approx(reg.beta, rel=0.01)
    assert reg.beta / (reg.rho_lambda3 * e.side_m / e.lambda_m) == pytest.approx(0.0709, abs=1e-4)


# ==================================================
# KERNELS / EIGENVALUES
# ==================================================
def test_kernel_scalar_entries():
    quarter = build_kernels(np.array([[0.0, 0.0, 0.0], [0.075, 0.0, 0.0]]), 0.3)
    assert quarter.sinc_part[0, 1] == pytest.approx(2 / math.pi, abs=1e-15)

    half = build_kernels(np.array([[0.0, 0.0, 0.0], [0.0, 0.15, 0.0]]), 0.3)
    assert half.cosine_part[0, 1] == pytest.approx(1 / math.pi, abs=1e-15)


def test_kernels_symmetric_zero_diagonal():
    pts = sample_cube(CubeEnsemble(n=200, side_m=3.0, lambda_m=0.3, seed=8))
    k = build_kernels(pts, 0.3)
    for name in (PART_COSINE, PART_SINC):
        m = k.part(name)
        assert np.array_equal(m, m.T)
        assert np.all(np.diag(m) == 0.0)
    off = k.sinc_part[~np.eye(200, dtype=bool)]
    assert off.max() <= 1.0
    assert off.min() >= -0.2173


def test_coincident_points_rejected():
    with pytest.raises(DegenerateDistanceError):
        build_kernels(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]), 0.3)


def test_unknown_part_rejected():
    k = build_kernels(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 0.3)
    with pytest.raises(InvalidArgumentError):
        k.part("tangent")


def test_esd_two_by_two():
    np.testing.assert_allclose(esd(np.array([[0.0, 0.7], [0.7, 0.0]])), [-0.7, 0.7], atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        esd(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_trace_and_frobenius_identities():
    pts = sample_cube(CubeEnsemble(n=400, side_m=4.0, lambda_m=0.3, seed=3))
    k = build_kernels(pts, 0.3)
    for name in (PART_COSINE, PART_SINC):
        a = k.part(name)
        eigs = esd(a)
        assert np.all(np.diff(eigs) >= 0)
        frob = np.sum(a**2)
        assert abs(eigs.sum()) <= 1e-8 * math.sqrt(frob) * a.shape[0]
        assert np.sum(eigs**2) == pytest.approx(frob, rel=1e-6)
        assert eigensolver_residual(a) < 1e-8


# ==================================================
# LIMITING LAWS
# ==================================================
def test_mp_edges_and_outside_support():
    law = LimitingLaw.marcenko_pastur(BETA_FIG10)
    a, b = law.support()
    assert a == pytest.approx((1 - math.sqrt(BETA_FIG10)) ** 2)
    assert b == pytest.approx((1 + math.sqrt(BETA_FIG10)) ** 2)
    assert (a, b) == (pytest.approx(0.4130, abs=1e-4), pytest.approx(1.8424, abs=1e-4))
    assert mp_density(a - 0.01, BETA_FIG10) == 0.0
    assert mp_density(b + 0.01, BETA_FIG10) == 0.0


@pytest.mark.parametrize("beta", [0.0319, BETA_FIG10, 0.6])
def test_densities_integrate_to_one(beta):
    a, b = LimitingLaw.marcenko_pastur(beta).support()
    mass, _ = integrate.quad(mp_density, a, b, args=(beta,), limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)

    r = 2 * math.sqrt(beta)
    mass, _ = integrate.quad(semicircle_density, -r, r, args=(beta,), limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_semicircle_values():
    assert semicircle_density(0.0, 0.25) == pytest.approx(1 / (math.pi * 0.5))
    assert semicircle_density(1.01, 0.25) == 0.0
    assert semicircle_cdf(0.0, 0.25) == pytest.approx(0.5)
    assert semicircle_cdf(-5.0, 0.25) == 0.0
    assert semicircle_cdf(5.0, 0.25) == 1.0


def test_cauchy_properties():
    assert cauchy_density(0.0) == pytest.approx(1 / math.pi)
    xs = np.linspace(0.1, 50, 30)
    np.testing.assert_array_equal(cauchy_density(xs), cauchy_density(-xs))
    mass, _ = integrate.quad(cauchy_density, -1e4, 1e4, points=[0.0], limit=500)
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_mp_cdf_matches_quadrature():
    a, b = LimitingLaw.marcenko_pastur(BETA_FIG10).support()
    for x in np.linspace(a + 0.01, b - 0.01, 9):
        direct, _ = integrate.quad(mp_density, a, x, args=(BETA_FIG10,), limit=200)
        assert mp_cdf(x, BETA_FIG10) == pytest.approx(direct, abs=1e-7)
    assert mp_cdf(a - 1, BETA_FIG10) == 0.0
    assert mp_cdf(b + 1, BETA_FIG10) == 1.0


def test_out_of_regime():
    with pytest.raises(OutOfRegimeError):
        mp_density(1.0, 1.2)
    with pytest.raises(OutOfRegimeError):
        LimitingLaw.marcenko_pastur(1.0)
    with pytest.raises(InvalidArgumentError):
        LimitingLaw.semicircle(0.0)


def test_law_for_parts(caplog):
    low = RegimeDescriptor(beta=0.1, rho_lambda3=0.02)
    assert law_for(PART_SINC, low).name == "marcenko-pastur"
    assert law_for(PART_COSINE, low).name == "semicircle"

    high = RegimeDescriptor(beta=3.0, rho_lambda3=0.001)
    with caplog.at_level("WARNING", logger="analysis.randmatrix"):
        assert law_for(PART_COSINE, high).name == "cauchy"
    assert any("Cauchy" in r.message for r in caplog.records)
    with pytest.raises(OutOfRegimeError):
        law_for(PART_SINC, high)


def test_law_curve_grid():
    df = law_curve(LimitingLaw.semicircle(0.2))
    assert list(df.columns) == ["x", "density"]
    assert len(df) == 500
    cauchy = law_curve(LimitingLaw.cauchy())
    assert cauchy["x"].iloc[0] == -10.0 and cauchy["x"].iloc[-1] == 10.0


# ==================================================
# COMPARISON
# ==================================================
def test_ks_small_for_samples_from_the_law():
    beta = 0.2
    rng = np.random.default_rng(4)
    n = 8000
    # x-projection of a uniform point in a disk of radius 2√β is semicircular
    radius = 2 * math.sqrt(beta) * np.sqrt(rng.uniform(size=n))
    x = radius * np.cos(rng.uniform(0, 2 * np.pi, size=n))
    ks, l1 = compare_esd(np.sort(x), LimitingLaw.semicircle(beta))
    assert ks < 0.025
    assert l1 < 0.2


def test_ks_large_for_constant_spectrum():
    for law in (LimitingLaw.marcenko_pastur(BETA_FIG10), LimitingLaw.semicircle(0.3), LimitingLaw.cauchy()):
        ks, _ = compare_esd(np.ones(50), law)
        assert ks >= 0.5


def test_compare_esd_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        compare_esd([], LimitingLaw.cauchy())


def test_spectra_shift_convention():
    e = CubeEnsemble(n=150, side_m=3.0, lambda_m=0.3, seed=2)
    out = spectra(e)
    assert out[PART_SINC].shift_applied == 1.0
    assert out[PART_COSINE].shift_applied == 0.0
    assert out[PART_SINC].eigenvalues.sum() == pytest.approx(150.0, abs=1e-8)
    assert len(out[PART_COSINE]) == 150

    raw = spectrum(e, PART_SINC, shift=0.0)
    np.testing.assert_allclose(raw.eigenvalues + 1.0, out[PART_SINC].eigenvalues, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        spectra(e, ("sinc", "tangent"))


# ==================================================
# DESK-SCALE SPECTRAL LAWS
# ==================================================
def _ks(n, side_m, seed, part):
    res = spectrum(CubeEnsemble(n=n, side_m=side_m, lambda_m=0.3, seed=seed), part)
    return compare_esd(res.eigenvalues, law_for(part, res.regime))[0]


@pytest.mark.slow
@pytest.mark.parametrize("part", [PART_SINC, PART_COSINE])
def test_desk_scale_spectrum_matches_law(part):
    ks = [_ks(2000, 10.0, seed, part) for seed in range(5)]
    assert np.median(ks) <= 0.05


@pytest.mark.slow
def test_sinc_spectrum_converges_with_size():
    means = []
    for n in (500, 1000, 2000):
        side = 10.0 * math.sqrt(n / 2000)
        means.append(np.mean([_ks(n, side, seed, PART_SINC) for seed in range(5)]))
    assert means[0] > means[1] > means[2]
