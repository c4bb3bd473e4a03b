"""Steady-state validation at 11 and 20 m/s.

With constant wind, still water and fixed pitch and torque the platform
settles to a static offset.  At 20 m/s the blades are pitched to 18 deg,
so the rotor thrust drops and the platform drifts less than at 11 m/s even
though the wind is stronger.

    python demos/steady_state.py
"""

import math

from fowtlab import default_parameters, default_surfaces
from fowtlab.sim import SimConfig, steady_state_run

p = default_parameters()
surfaces = default_surfaces()

cases = {11.0: (0.0, 40000.0), 20.0: (18.0, 43093.55)}
for wind, (beta_deg, torque) in cases.items():
    cfg = SimConfig(duration=600.0, wind=wind, wave=None, controller=False,
                    beta=math.radians(beta_deg), torque=torque)
    _, report = steady_state_run(cfg, p, surfaces)
    f = report.final
    print(f"{wind:4.0f} m/s  converged={report.converged}  settled after {report.settling_time:.0f} s")
    print(f"          surge {f['surge']:.3f} m  heave {f['heave']:.4f} m  "
          f"pitch {math.degrees(f['pitch']):.3f} deg  rotor {f['rotor_speed'] * 30 / math.pi:.3f} rpm")
