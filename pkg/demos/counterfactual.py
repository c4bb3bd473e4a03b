"""Is a large pitch excursion driven by the wind or by the waves?

Starting from one run of a campaign, the run is repeated twice: once with
the same wind and fresh waves, once with the same waves and fresh wind.
If the pitch history survives only when the wind is kept, the excursion is
wind-driven.

    python demos/counterfactual.py [campaign_dir]
"""

import sys
from pathlib import Path

import numpy as np

from fowtlab import default_parameters, default_surfaces
from fowtlab.analysis import attribution_report
from fowtlab.ensemble import (CampaignSpec, CounterfactualSpec, counterfactual, load_campaign,
                              run_campaign)
from fowtlab.environment import WaveSpec, WindSpec
from fowtlab.sim import SimConfig

p = default_parameters()
surfaces = default_surfaces()
directory = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-cf-campaign")
if (directory / "index.csv").exists():
    campaign = load_campaign(directory)
else:
    campaign = run_campaign(CampaignSpec(5, 7, str(directory), SimConfig(duration=300.0, decimation=4),
                                         WindSpec(duration=300.0), WaveSpec()), p, surfaces)

# the run with the largest pitch excursion
source = int(np.argmax(campaign.extremes("pitch")[1]))
print(f"source run {source}")
same_wind = counterfactual(CounterfactualSpec(source, "wind", "resample", repetitions=3),
                           campaign, p, surfaces)
same_wave = counterfactual(CounterfactualSpec(source, "wave", "resample", repetitions=3),
                           campaign, p, surfaces)
report = attribution_report(campaign.load(source), same_wind, same_wave, "pitch")
print("correlation with the source, same wind:", np.round(report.same_wind, 3))
print("correlation with the source, same wave:", np.round(report.same_wave, 3))
print("wind-consistent:", report.wind_consistent, " wave-consistent:", report.wave_consistent)
