"""A walk through the environment catalogs and unit conversions.

The benchmark ships two catalogs: low-frequency waveguide environments (a
training column plus ten perturbed test columns) and high-frequency rough
seafloor template families (training plus four test columns).  Everything a
forward solver needs is in these tables.
"""

import sys

from seabedbench import (
    SedimentClass,
    attenuation_to_nepers,
    nominal_environments,
    test_environment,
)
from seabedbench.environments import dump_catalog_csv

print("=== low-frequency training environments ===")
for cls, env in nominal_environments("lowfreq"):
    s = env.sediment
    print(f"{cls.name.lower():7s} c={s.speed:6.0f} m/s  alpha={s.attenuation:5.2f} dB/wl  "
          f"rho={s.density:6.0f} kg/m3  tau={s.thickness} m")

print("\n=== the same sediments in test column 1 (perturbed) ===")
for cls in SedimentClass:
    env = test_environment("lowfreq", 1, cls)
    s = env.sediment
    print(f"{cls.name.lower():7s} c={s.speed:6.0f} m/s  alpha={s.attenuation:5.3f} dB/wl")

print("\n=== backscatter template families, training column ===")
for cls, env in nominal_environments("backscatter"):
    print(f"{cls.name.lower():7s} c=({env.top_speed:7.2f},{env.bottom_speed:7.2f}) m/s  "
          f"rho=({env.top_density:7.2f},{env.bottom_density:6.1f}) kg/m3  "
          f"tau choices {env.thickness_choices}")

print("\nTest 3 perturbs only the layer thickness:")
env = test_environment("backscatter", 3, SedimentClass.SAND)
print(f"  sand thickness choices -> {env.thickness_choices}")

print("\n=== attenuation units entering the Helmholtz operators ===")
a_lf = attenuation_to_nepers(0.2, "dB_per_wavelength", 400.0, 1500.0)
a_hf = attenuation_to_nepers(0.5, "dB_per_m_per_kHz", 15_000.0)
print(f"clay 0.2 dB/wavelength at 400 Hz  -> {a_lf:.4e} np/m")
print(f"0.5 dB/m/kHz at 15 kHz            -> {a_hf:.4f} np/m")

print("\nFull catalog as CSV (first 8 rows):")
import io
buf = io.StringIO()
dump_catalog_csv(buf)
print("\n".join(buf.getvalue().splitlines()[:8]))
print("... (run `seabedbench catalog dump` for the rest)")
