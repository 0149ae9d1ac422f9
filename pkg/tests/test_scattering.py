"""Helmholtz scattering: incident wave, assembly contracts, Fresnel oracles,
PML quality, sampling, and physical sanity checks."""

import math

import numpy as np
import pytest

from seabedbench.environments import HighFreqTemplate, RoughnessSpec
from seabedbench.roughness import flat_surface, generate_surface
from seabedbench.scattering import (
    GeometryError,
    IncidentSpec,
    FieldSolution,
    SamplingError,
    assemble,
    discrete_wavenumber,
    domain_for_template,
    fluid_reflection_coefficient,
    incident_field,
    incident_on,
    layered_reflection_coefficient,
    pml_reflection_estimate,
    sample_field,
    solve_scattered,
)
from tests.conftest import flat_template


class TestIncidentField:
    def test_origin_value(self):
        spec = IncidentSpec(angle=math.pi / 12, wavenumber=62.8)
        assert incident_field(spec, [(0.0, 0.0)])[0] == pytest.approx(1.0 + 0.0j)

    def test_unit_modulus(self):
        spec = IncidentSpec(angle=math.pi / 7, wavenumber=40.0)
        pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
        assert np.allclose(np.abs(incident_field(spec, pts)), 1.0, atol=1e-14)

    def test_phase_gradient_along_x(self):
        # d(phase)/dx = -(omega/c) sin(theta); finite difference on the exponent
        spec = IncidentSpec(angle=math.pi / 12, wavenumber=2 * math.pi * 15000 / 1500)
        eps = 1e-6
        p0 = incident_field(spec, [(0.3, 0.2)])[0]
        p1 = incident_field(spec, [(0.3 + eps, 0.2)])[0]
        grad = (np.angle(p1 / p0)) / eps
        expected = -spec.wavenumber * math.sin(math.pi / 12)
        assert abs(abs(grad) - abs(expected)) < 1e-9 * abs(expected) + 1e-6
        assert grad == pytest.approx(expected, rel=1e-6)
        assert abs(expected) == pytest.approx(16.27, abs=0.01)


class TestAssembly:
    def test_zero_contrast_gives_zero_field(self):
        template = HighFreqTemplate(top_speed=1500.0, top_density=1000.0,
                                    top_thickness=0.5, bottom_speed=1500.0,
                                    bottom_density=1000.0,
                                    roughness=RoughnessSpec(0.0, 0.02, 0),
                                    attenuation=0.0)
        system = assemble(domain_for_template(template, flat_surface(2.0),
                                              nodes_per_wavelength=8))
        assert np.all(system.rhs == 0)
        solution = solve_scattered(system)
        assert np.all(solution.values == 0)
        assert solution.residual == 0.0

    def test_unknown_count_scale(self):
        template = flat_template(1500.0, 1500.0, 0.5)
        coarse = assemble(domain_for_template(template, flat_surface(2.0),
                                              nodes_per_wavelength=8))
        assert 3e4 <= coarse.n_unknowns <= 3e5      # order 1e5 at 8 nodes/lambda
        production = assemble(domain_for_template(template, flat_surface(2.0),
                                                  nodes_per_wavelength=12))
        assert 0.5e5 <= production.n_unknowns <= 2e5

    def test_geometry_error_interface_exits_domain(self):
        template = HighFreqTemplate(top_speed=1500.0, top_density=1500.0,
                                    top_thickness=0.5, bottom_speed=5250.0,
                                    bottom_density=2700.0,
                                    roughness=RoughnessSpec(0.9, 0.3, 1))
        with pytest.raises(GeometryError):
            assemble(domain_for_template(template, surface_points=1024,
                                         nodes_per_wavelength=8))

    def test_geometry_error_interfaces_cross(self):
        template = HighFreqTemplate(top_speed=1500.0, top_density=1500.0,
                                    top_thickness=0.02, bottom_speed=5250.0,
                                    bottom_density=2700.0,
                                    roughness=RoughnessSpec(0.02, 0.1, 1))
        with pytest.raises(GeometryError):
            assemble(domain_for_template(template, nodes_per_wavelength=8))

    def test_discrete_wavenumber_matches_continuum_to_second_order(self):
        k = 2 * math.pi * 15000 / 1500
        for npw in (8, 12, 16):
            h = 0.1 / npw
            k_num = discrete_wavenumber(k, h, (math.sin(0.3), -math.cos(0.3)))
            assert abs(k_num - k) / k < (k * h) ** 2 / 12


class TestFlatInterfaceOracle:
    def test_fresnel_single_interface(self, clay_halfspace_solution):
        template, solution = clay_halfspace_solution
        R = fluid_reflection_coefficient(template)
        pts = np.stack(np.meshgrid(np.linspace(0.45, 1.55, 23),
                                   np.linspace(0.3, 0.9, 13), indexing="ij"),
                       axis=-1).reshape(-1, 2)
        err = np.abs(np.abs(sample_field(solution, pts)) - abs(R)) / abs(R)
        assert err.max() < 0.02

    @staticmethod
    def _discrete_layered_reflection(template, h):
        """Transfer-matrix reflection of the two-interface stack using the
        vertical wavenumbers of the *discrete* dispersion relation, which is
        what the grid solution should reproduce up to interface errors."""
        from seabedbench.environments import attenuation_to_nepers
        omega = 2 * math.pi * template.frequency
        alpha = attenuation_to_nepers(template.attenuation, "dB_per_m_per_kHz",
                                      template.frequency)
        k1 = omega / template.water_speed
        v = discrete_wavenumber(k1, h, (math.sin(template.incident_angle),
                                        -math.cos(template.incident_angle)))
        kx = v * math.sin(template.incident_angle)
        lateral = (2 - 2 * math.cos(kx * h)) / h**2

        def kz(k_complex):
            rhs = k_complex**2 - lateral
            val = np.arccos(1 - h**2 * rhs / 2 + 0j) / h
            return val if val.imag <= 0 else np.conj(val)

        k2 = omega / template.top_speed - 1j * alpha
        k3 = omega / template.bottom_speed - 1j * alpha
        k1z, k2z, k3z = kz(k1 + 0j), kz(k2), kz(k3)
        z1 = template.water_density * omega / k1z
        z2 = template.top_density * omega / k2z
        z3 = template.bottom_density * omega / k3z
        r12 = (z2 - z1) / (z2 + z1)
        r23 = (z3 - z2) / (z3 + z2)
        phase = np.exp(-2j * k2z * template.top_thickness)
        return complex((r12 + r23 * phase) / (1 + r12 * r23 * phase))

    def test_layered_oracle_discrete_dispersion(self, clay_layered_solution):
        template, solution = clay_layered_solution
        R = self._discrete_layered_reflection(template, solution.h)
        pts = np.stack(np.meshgrid(np.linspace(0.45, 1.55, 23),
                                   np.linspace(0.3, 0.9, 13), indexing="ij"),
                       axis=-1).reshape(-1, 2)
        measured = np.abs(sample_field(solution, pts)).mean()
        assert measured == pytest.approx(abs(R), rel=0.05)

    def test_layered_continuum_limit_trend(self, clay_layered_solution):
        # the discrete stack approaches the physical one as the grid refines
        template, solution = clay_layered_solution
        exact = abs(layered_reflection_coefficient(template))
        coarse = abs(self._discrete_layered_reflection(template, 0.1 / 8))
        fine = abs(self._discrete_layered_reflection(template, 0.1 / 32))
        assert abs(fine - exact) < abs(coarse - exact)
        assert fine == pytest.approx(exact, rel=0.05)

    def test_lossless_energy_balance(self):
        template = flat_template(1650.0, 1900.0, 5.0, attenuation=0.0)
        solution = solve_scattered(assemble(domain_for_template(
            template, flat_surface(2.0), nodes_per_wavelength=12)))
        above = np.stack(np.meshgrid(np.linspace(0.5, 1.5, 21),
                                     np.linspace(0.3, 0.9, 11), indexing="ij"),
                         axis=-1).reshape(-1, 2)
        below = np.stack(np.meshgrid(np.linspace(0.5, 1.5, 21),
                                     np.linspace(-0.9, -0.3, 11), indexing="ij"),
                         axis=-1).reshape(-1, 2)
        r_mag = np.abs(sample_field(solution, above)).mean()
        t_mag = np.abs(sample_field(solution, below) + incident_on(solution, below)).mean()
        theta1 = template.incident_angle
        sin2 = math.sin(theta1) * 1650.0 / 1500.0
        cos2 = math.sqrt(1 - sin2**2)
        flux = r_mag**2 + t_mag**2 * (1000.0 * 1500.0 * cos2) / (1900.0 * 1650.0 * math.cos(theta1))
        assert flux == pytest.approx(1.0, abs=0.02)

    def test_attenuation_monotonicity_below_second_interface(self):
        # transmission through the top layer decays with its absorption
        rms_vals = []
        below = np.stack(np.meshgrid(np.linspace(0.6, 1.4, 15),
                                     np.linspace(-1.1, -0.8, 7), indexing="ij"),
                         axis=-1).reshape(-1, 2)
        for alpha in (0.0, 0.25, 0.5, 1.0, 2.0):
            template = flat_template(1575.0, 1700.0, 0.6, attenuation=alpha)
            solution = solve_scattered(assemble(domain_for_template(
                template, flat_surface(2.0), nodes_per_wavelength=8)))
            rms_vals.append(float(np.sqrt(np.mean(
                np.abs(sample_field(solution, below) + incident_on(solution, below)) ** 2))))
        assert all(b <= a * (1 + 1e-6) for a, b in zip(rms_vals, rms_vals[1:]))


class TestPml:
    def test_plane_wave_reflection_below_one_percent(self):
        assert pml_reflection_estimate(nodes_per_wavelength=12) < 0.01

    def test_reflection_small_even_at_coarse_grid(self):
        assert pml_reflection_estimate(nodes_per_wavelength=8) < 0.01


class TestSelfConvergence:
    def test_backscatter_observable_converges(self):
        from seabedbench.nmla import backscatter_signal
        template = HighFreqTemplate(top_speed=1500.0, top_density=1500.0,
                                    top_thickness=0.5, bottom_speed=5250.0,
                                    bottom_density=2700.0,
                                    roughness=RoughnessSpec(0.005, 0.02, 11))
        surface = generate_surface(2.0, 1024, 0.005, 0.02, 11)
        signals = {}
        for npw in (12, 16):
            solution = solve_scattered(assemble(domain_for_template(
                template, surface, nodes_per_wavelength=npw)))
            signals[npw] = backscatter_signal(solution, template, n_points=64).y
        rel = (np.sqrt(np.mean((signals[12] - signals[16]) ** 2))
               / np.sqrt(np.mean(signals[16] ** 2)))
        assert rel < 0.15
        assert np.corrcoef(signals[12], signals[16])[0, 1] > 0.95


def synthetic_plane_wave_solution(k_vector, h=0.01, extent=2.0) -> FieldSolution:
    n = int(extent / h) + 1
    x = np.linspace(0.0, extent, n)
    z = np.linspace(-extent / 2, extent / 2, n)
    values = np.exp(-1j * (k_vector[0] * x[:, None] + k_vector[1] * z[None, :]))
    return FieldSolution(x=x, z=z, values=values, h=h, pml_cells=0, residual=0.0)


class TestSampling:
    def test_nodal_exactness(self, clay_halfspace_solution):
        _, solution = clay_halfspace_solution
        p = solution.pml_cells
        ix, iz = p + 40, p + 50
        got = sample_field(solution, [(solution.x[ix], solution.z[iz])])[0]
        assert got == pytest.approx(solution.values[ix, iz], rel=1e-5)

    def test_synthetic_plane_wave_values(self):
        k = 2 * math.pi * 15000 / 1500
        kv = k * np.array([math.sin(0.4), -math.cos(0.4)])
        solution = synthetic_plane_wave_solution(kv, h=0.1 / 12)
        pts = np.array([[0.73, 0.21], [1.31, -0.44], [0.95, 0.0]])
        expected = np.exp(-1j * (pts @ kv))
        got = sample_field(solution, pts)
        assert np.max(np.abs(got - expected)) < 2e-3   # cubic interpolation error

    def test_radial_derivative_oracle(self):
        k = 2 * math.pi * 15000 / 1500
        kv = k * np.array([math.sin(0.4), -math.cos(0.4)])
        solution = synthetic_plane_wave_solution(kv, h=0.1 / 12)
        center = np.array([1.0, 0.0])
        t = np.linspace(0, 2 * math.pi, 40, endpoint=False)
        pts = center + 0.25 * np.stack([np.cos(t), np.sin(t)], axis=1)
        values, dr = sample_field(solution, pts, want_radial_derivative_about=center)
        rhat = (pts - center) / 0.25
        expected = -1j * (rhat @ kv) * np.exp(-1j * (pts @ kv))
        assert np.max(np.abs(dr - expected)) / k < 5e-3

    def test_point_in_pml_rejected(self, clay_halfspace_solution):
        _, solution = clay_halfspace_solution
        with pytest.raises(SamplingError):
            sample_field(solution, [(-0.05, 0.5)])
        with pytest.raises(SamplingError):
            sample_field(solution, [(1.0, 5.0)])

    def test_center_on_circle_rejected(self, clay_halfspace_solution):
        _, solution = clay_halfspace_solution
        with pytest.raises(SamplingError):
            sample_field(solution, [(1.0, 0.5)], want_radial_derivative_about=(1.0, 0.5))


class TestSerialization:
    def test_round_trip(self, clay_halfspace_solution, tmp_path):
        _, solution = clay_halfspace_solution
        p = tmp_path / "field.sbf"
        solution.save(p)
        back = FieldSolution.load(p)
        assert np.array_equal(back.values, solution.values)
        assert np.array_equal(back.material, solution.material)
        assert back.pml_cells == solution.pml_cells
        assert back.h == solution.h

    def test_deterministic_solve(self):
        template = flat_template(1575.0, 1700.0, 0.5)
        domain = domain_for_template(template, flat_surface(2.0), nodes_per_wavelength=8)
        a = solve_scattered(assemble(domain)).values
        b = solve_scattered(assemble(domain)).values
        assert np.array_equal(a, b)
