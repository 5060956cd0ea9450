"""
Charging decisions of a single driver
=====================================

Each EV decides on its own when to plug in. On arrival at an activity it
charges with a probability that falls linearly from 1 to 0 between two SoC
thresholds; before departing it detours to a fast charger when the battery
cannot cover the rest of the day's plan.
"""

import numpy as np

from evdeploy.charging import (ChargingBehaviorParams, assign_required_charger_type, charge_session,
                               destination_charge_probability, should_charge_enroute)

params = ChargingBehaviorParams()

# Public chargers: certain below 20%, never above 80%.
for soc in np.linspace(0.0, 1.0, 11):
    p = destination_charge_probability(soc, params.public)
    print(f"SoC {soc:4.0%}  P(charge) {p:.2f}  {'#' * int(round(20 * p))}")

# A 64 kWh car at 0.16 kWh/km with 50 km still to drive needs 8 kWh.
for soc_kwh in (5.0, 8.0, 20.0):
    print(f"{soc_kwh:5.1f} kWh left, 50 km to go -> detour to a fast charger: "
          f"{should_charge_enroute(soc_kwh, 50.0, 0.16)}")

# The dwell time decides between slow and fast AC at a destination.
for need, dwell_h in ((10.0, 2.0), (20.0, 1.0)):
    ctype = assign_required_charger_type(False, need, dwell_h * 3600)
    energy, seconds = charge_session(64.0 * 0.8 - need, 64.0, ctype.power_kw, dwell_h * 3600, 64.0 * 0.8)
    print(f"need {need:.0f} kWh in {dwell_h:.0f} h -> {ctype.value}: {energy:.1f} kWh in {seconds / 60:.0f} min")
