"""Map Arnold tongues for a 13 Hz rhythm and pick a stimulation frequency.

A periodic pulse train drives a sine circle map. Sweeping the pulse rate and
coupling strength gives a grid of winding numbers. Cells that land on a ratio
p:q form the tongue regions. The widest one is 1:1, where the rhythm follows
the stimulator beat for beat.

Run:  python3 demos/01_tongues.py
"""

import numpy as np

from chronostim.tongues import (RationalLock, SweepAxis, fs_amplitude_grid, largest_region, select_stim_frequency, sweep,
                                tongue_regions)

# A coarser grid than the default keeps this under a few seconds.
grid = sweep(fs_amplitude_grid(13.0, SweepAxis(6.0, 30.0, 121), SweepAxis(0.0, 1.0, 21)), workers=4)
regions = tongue_regions(grid)

print("Widest tongues at full coupling (I = 1):")
top = sorted(regions, key=lambda r: r.width_by_row[-1], reverse=True)[:5]
for r in top:
    print(f"  {r.lock}  width {r.width_by_row[-1]:.2f} Hz")

one = largest_region(regions, RationalLock(1, 1))
print("\n1:1 width as coupling grows:")
for i, w in zip(grid.y_axis.values[::4], one.width_by_row[::4]):
    print(f"  I = {i:.2f}  {'#' * int(round(w * 4)):<40} {w:.1f} Hz")

# Healthy rhythm 12 Hz, pathological band 2-3 Hz. The chosen frequency must lock
# 12 Hz 1:1 and keep every tongue that reaches the band narrow.
choice = select_stim_frequency(12.0, (2.0, 3.0), np.arange(8.0, 20.0, 1.0), tuning_target=12.0)
print(f"\nChosen stimulation frequency: {choice.chosen_fs} Hz")
print(choice.rationale)
