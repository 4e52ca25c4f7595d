"""Material and numerical defaults for Pr:YSO-like AFC memories.

All frequencies are ordinary frequencies in Hz.
"""

GROUND_SPLITTING_HZ = 10.2e6
PREPARATION_WINDOW_HZ = 18e6
HOMOGENEOUS_LINEWIDTH_HZ = 1e3
SPIN_FWHM_HZ = 26e3

DEFAULT_DT = 5e-9
