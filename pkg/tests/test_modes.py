"""Modal solver oracles: closed-form duct, Pekeris dispersion roots,
orthonormality, perturbation attenuation, and the far-field modal sum."""

import math
import warnings

import numpy as np
import pytest
from scipy.optimize import brentq

from seabedbench.environments import SedimentClass, nominal_environments
from seabedbench.modes import (
    ComplexField,
    DepthModel,
    ModeError,
    ModeSet,
    build_depth_model,
    pressure_field,
    solve_modes,
    wavenumber_table_csv,
)

F = 400.0
OMEGA = 2 * math.pi * F


def isovelocity_duct(depth=111.0, c=1500.0, rho=1000.0, ppw=40.0) -> DepthModel:
    n = int(math.ceil(depth / (c / F / ppw)))
    return DepthModel(z=np.linspace(0.0, depth, n + 1), speed=np.full(n, c),
                      density=np.full(n, rho), absorption=np.zeros(n),
                      interfaces=(), frequency=F)


def pekeris_model(depth=111.0, c1=1500.0, c2=1800.0, rho1=1000.0, rho2=1800.0,
                  extension=150.0, ppw=20.0, alpha2=0.0) -> DepthModel:
    n1 = int(math.ceil(depth / (c1 / F / ppw)))
    n2 = int(math.ceil(extension / (c2 / F / ppw)))
    z = np.concatenate([np.linspace(0, depth, n1 + 1),
                        depth + np.linspace(0, extension, n2 + 1)[1:]])
    return DepthModel(z=z,
                      speed=np.concatenate([np.full(n1, c1), np.full(n2, c2)]),
                      density=np.concatenate([np.full(n1, rho1), np.full(n2, rho2)]),
                      absorption=np.concatenate([np.zeros(n1), np.full(n2, alpha2)]),
                      interfaces=(depth,), frequency=F)


def pekeris_dispersion_roots(depth=111.0, c1=1500.0, c2=1800.0, rho1=1000.0,
                             rho2=1800.0) -> np.ndarray:
    """Brute-force root scan of the Pekeris characteristic equation."""
    k1, k2 = OMEGA / c1, OMEGA / c2

    def char(k):
        g1 = math.sqrt(k1**2 - k**2)
        g2 = math.sqrt(k**2 - k2**2)
        return (g1 / rho1) * math.cos(g1 * depth) + (g2 / rho2) * math.sin(g1 * depth)

    grid = np.linspace(k2 * (1 + 1e-10), k1 * (1 - 1e-10), 200_000)
    vals = np.array([char(k) for k in grid])
    sign_flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    roots = [brentq(char, grid[i], grid[i + 1], xtol=1e-14) for i in sign_flips]
    return np.array(sorted(roots, reverse=True))


class TestBuildDepthModel:
    def test_nominal_clay_geometry(self):
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        model = build_depth_model(env, halfspace_extension=150.0, points_per_wavelength=20)
        assert model.z[-1] == pytest.approx(266.0)
        assert model.interfaces == (111.0, 116.0)
        for d in model.interfaces:
            assert np.min(np.abs(model.z - d)) < 1e-12

    def test_refinement_preserves_geometry(self):
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        coarse = build_depth_model(env, points_per_wavelength=10)
        fine = build_depth_model(env, points_per_wavelength=20)
        assert coarse.interfaces == fine.interfaces
        assert fine.z.size > coarse.z.size

    def test_ppw_floor(self):
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        with pytest.raises(ModeError):
            build_depth_model(env, points_per_wavelength=5)
        with pytest.raises(ModeError):
            build_depth_model(env, halfspace_extension=0.0)

    def test_resolution_validation(self):
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        model = build_depth_model(env, points_per_wavelength=20)
        model.validate_resolution(20.0)
        coarse = build_depth_model(env, points_per_wavelength=10)
        with pytest.raises(ModeError):
            coarse.validate_resolution(20.0)


class TestDuctOracle:
    def test_hard_bottom_duct_wavenumbers(self):
        # pressure-release top over rigid bottom: k_m = sqrt(k^2 - ((m-1/2)pi/D)^2)
        depth, c = 111.0, 1500.0
        model = isovelocity_duct(depth, c)
        modeset = solve_modes(model, F, phase_speed_limits=(c, 1e9))
        k = OMEGA / c
        analytic = []
        m = 1
        while True:
            gamma = (m - 0.5) * math.pi / depth
            if gamma >= k:
                break
            analytic.append(math.sqrt(k**2 - gamma**2))
            m += 1
        assert len(modeset) == len(analytic)
        # the near-cutoff mode has k -> 0, so relative error is the loose one
        rel = np.abs(modeset.k.real - np.array(analytic)) / np.array(analytic)
        assert rel.max() < 1e-4

    def test_lossless_modes_have_zero_imag(self):
        model = isovelocity_duct()
        modeset = solve_modes(model, F, phase_speed_limits=(1500.0, 1e9))
        assert np.all(modeset.k.imag == 0.0)


class TestPekerisOracle:
    def test_wavenumbers_match_dispersion_roots(self):
        model = pekeris_model(ppw=20)
        modeset = solve_modes(model, F)
        exact = pekeris_dispersion_roots()
        assert len(modeset) == len(exact)
        rel = np.abs(modeset.k.real - exact) / exact
        assert rel.max() < 1e-4

    def test_orthonormality(self):
        modeset = solve_modes(pekeris_model(ppw=20), F)
        gram = (modeset.psi * modeset.weight[:, None]).T @ modeset.psi
        assert np.abs(gram - np.eye(len(modeset))).max() < 1e-6

    def test_grid_convergence_doubling(self):
        k20 = solve_modes(pekeris_model(ppw=20), F).k.real
        k40 = solve_modes(pekeris_model(ppw=40), F).k.real
        n = min(k20.size, k40.size)
        assert np.max(np.abs(k20[:n] - k40[:n]) / k40[:n]) < 1e-5

    def test_halfspace_truncation_robustness(self):
        k150 = solve_modes(pekeris_model(extension=150.0), F).k.real
        k225 = solve_modes(pekeris_model(extension=225.0), F).k.real
        n = min(k150.size, k225.size)
        assert np.max(np.abs(k150[:n] - k225[:n]) / k225[:n]) < 1e-6

    def test_attenuation_perturbation_sign_and_scale(self):
        lossy = solve_modes(pekeris_model(alpha2=0.01), F)
        assert np.all(lossy.k.imag >= 0)
        assert np.any(lossy.k.imag > 0)
        # least-trapped modes live deepest in the halfspace: larger Im(k)
        assert lossy.k.imag[-1] > lossy.k.imag[0]

    def test_no_trapped_modes_yields_empty_set(self):
        # halfspace slower than the water column traps nothing
        model = pekeris_model(c2=1400.0)
        modeset = solve_modes(model, F)
        assert modeset.is_empty

    def test_re_k_strictly_decreasing(self):
        modeset = solve_modes(pekeris_model(), F)
        assert np.all(np.diff(modeset.k.real) < 0)


@pytest.fixture(scope="module")
def clay_modes():
    env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
    model = build_depth_model(env)
    return env, solve_modes(model, F)


class TestNominalEnvironments:
    def test_orthonormality_nominal_clay(self, clay_modes):
        _, modeset = clay_modes
        gram = (modeset.psi * modeset.weight[:, None]).T @ modeset.psi
        assert np.abs(gram - np.eye(len(modeset))).max() < 1e-6

    def test_imag_positive_with_loss(self, clay_modes):
        _, modeset = clay_modes
        assert np.all(modeset.k.imag >= 0)
        assert np.any(modeset.k.imag > 0)

    def test_modeset_round_trip(self, clay_modes, tmp_path):
        _, modeset = clay_modes
        p = tmp_path / "clay.modes"
        modeset.save(p)
        back = ModeSet.load(p)
        assert np.array_equal(back.k, modeset.k)
        assert np.array_equal(back.psi, modeset.psi)
        assert back.frequency == modeset.frequency

    def test_wavenumber_csv(self, clay_modes):
        import io
        _, modeset = clay_modes
        buf = io.StringIO()
        wavenumber_table_csv(modeset, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "mode,re_k_per_m,im_k_per_m,phase_speed_m_s"
        assert len(lines) == 1 + len(modeset)


class TestPressureField:
    def test_empty_modeset_gives_zero_field_with_warning(self):
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        empty = solve_modes(pekeris_model(c2=1400.0), F)
        with pytest.warns(UserWarning, match="empty mode set"):
            field = pressure_field(empty, env)
        assert np.all(field.values == 0)
        assert field.n_modes == 0

    def test_reciprocity_in_water(self):
        from dataclasses import replace
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        model = build_depth_model(env)
        modeset = solve_modes(model, F)
        phone = 7  # depth 40 m
        forward = pressure_field(modeset, env).values[phone]
        depths = env.array.depths()
        swapped_env = replace(env, source=replace(env.source, depth=depths[phone]),
                              array=replace(env.array, first_depth=50.0, n_phones=1))
        backward = pressure_field(modeset, swapped_env).values[0]
        assert abs(forward - backward) / abs(forward) < 1e-10

    def test_single_mode_spreading_exponent(self):
        from dataclasses import replace
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        model = build_depth_model(env)
        modeset = solve_modes(model, F)
        single = ModeSet(frequency=F, k=modeset.k[:1].real.astype(complex),
                         psi=modeset.psi[:, :1], z=modeset.z, weight=modeset.weight)
        ranges = np.array([5_000.0, 10_000.0, 20_000.0, 40_000.0])
        mags = []
        for r in ranges:
            e = replace(env, source=replace(env.source, range=r))
            mags.append(np.abs(pressure_field(single, e).values[3]))
        slope = np.polyfit(np.log(ranges), np.log(mags), 1)[0]
        assert slope == pytest.approx(-0.5, rel=0.01)

    def test_four_nominal_fields_distinct(self):
        fields = []
        for cls, env in nominal_environments("lowfreq"):
            model = build_depth_model(env)
            field = pressure_field(solve_modes(model, F), env)
            assert field.values.size == 20
            assert np.all(np.isfinite(field.values))
            fields.append(field.values / np.linalg.norm(field.values))
        for i in range(4):
            for j in range(i + 1, 4):
                assert abs(np.vdot(fields[i], fields[j])) < 1.0 - 1e-6

    def test_invalid_source_range(self):
        from dataclasses import replace
        env = dict(nominal_environments("lowfreq"))[SedimentClass.CLAY]
        modeset = solve_modes(build_depth_model(env), F)
        bad = replace(env, source=replace(env.source, range=-1.0))
        with pytest.raises(ModeError):
            pressure_field(modeset, bad)
