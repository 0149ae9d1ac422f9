"""High-frequency scattering solves checked against closed-form reflection.

A flat, lossless-water template with each sediment class on the bottom is
solved at 15 kHz; the scattered amplitude in the water column must match the
fluid-fluid reflection coefficient.  The script ends with a plane-wave probe
of the absorbing layers.  (Runs at 8 nodes/wavelength to stay quick; the
production default is 12.)
"""

import numpy as np

from seabedbench import HighFreqTemplate, RoughnessSpec
from seabedbench.roughness import flat_surface
from seabedbench.scattering import (
    assemble,
    domain_for_template,
    fluid_reflection_coefficient,
    pml_reflection_estimate,
    sample_field,
    solve_scattered,
)

classes = [("clay", 1500.0, 1500.0), ("silt", 1575.0, 1700.0),
           ("sand", 1650.0, 1900.0), ("gravel", 1800.0, 2000.0)]

pts = np.stack(np.meshgrid(np.linspace(0.5, 1.5, 15),
                           np.linspace(0.3, 0.9, 9), indexing="ij"), axis=-1).reshape(-1, 2)

print("flat single-interface scenes, 8 nodes per wavelength:")
print(f"{'class':8s} {'|R| analytic':>12s} {'|p_scatt|':>10s} {'error':>8s} {'unknowns':>9s}")
for name, c_top, rho_top in classes:
    template = HighFreqTemplate(top_speed=c_top, top_density=rho_top, top_thickness=5.0,
                                bottom_speed=5250.0, bottom_density=2700.0,
                                roughness=RoughnessSpec(0.0, 0.02, 0))
    system = assemble(domain_for_template(template, flat_surface(2.0),
                                          nodes_per_wavelength=8))
    solution = solve_scattered(system)
    measured = np.abs(sample_field(solution, pts)).mean()
    exact = abs(fluid_reflection_coefficient(template))
    print(f"{name:8s} {exact:12.4f} {measured:10.4f} {abs(measured - exact) / exact:8.2%}"
          f" {solution.n_unknowns:9d}")

print("\nThe amplitude ladder clay < silt < sand < gravel is what the")
print("backscatter classifiers ultimately exploit.")

r = pml_reflection_estimate(nodes_per_wavelength=8)
print(f"\nPML probe: plane-wave amplitude reflection = {r:.2e} (contract: < 1e-2)")
