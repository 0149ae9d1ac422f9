import numpy as np
import pytest

from seabedbench.environments import HighFreqTemplate, RoughnessSpec
from seabedbench.roughness import flat_surface
from seabedbench.scattering import assemble, domain_for_template, solve_scattered


def flat_template(top_speed, top_density, thickness, **kwargs):
    return HighFreqTemplate(top_speed=top_speed, top_density=top_density,
                            top_thickness=thickness, bottom_speed=5250.0,
                            bottom_density=2700.0,
                            roughness=RoughnessSpec(0.0, 0.02, 0), **kwargs)


@pytest.fixture(scope="session")
def clay_halfspace_solution():
    """Flat single-interface clay scene (bottom layer outside the domain)."""
    template = flat_template(1500.0, 1500.0, 5.0)
    domain = domain_for_template(template, flat_surface(2.0), nodes_per_wavelength=12)
    return template, solve_scattered(assemble(domain))


@pytest.fixture(scope="session")
def clay_layered_solution():
    """Flat two-interface clay scene with a 0.5 m top layer."""
    template = flat_template(1500.0, 1500.0, 0.5)
    domain = domain_for_template(template, flat_surface(2.0), nodes_per_wavelength=12)
    return template, solve_scattered(assemble(domain))
