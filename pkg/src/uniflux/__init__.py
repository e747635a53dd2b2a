"""uniflux: desk-scale models of single-line fluxonium flux control.

Subpackages cover the full chain: circuit spectra (`fluxonium`), control-line
drive/noise budgets (`linebudget`), compensation-filter design (`filters`),
flux-line distortion models (`distortion`), instruction-level pulse
compilation (`pulsec`), time-domain qubit dynamics and benchmarking
(`dynamics`), and measurement fit models (`analysis`). `cli` exposes the
command-line tool.
"""

__version__ = "0.1.0"

from .waveform import Waveform  # noqa: F401
