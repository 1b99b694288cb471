"""How sparse are degradation residuals in the frequency domain?

For each degradation the residual y - x of 40 procedural images is scaled to
unit energy, and the Gini coefficient of its DFT amplitudes is averaged.
Higher means sparser. A histogram of log-amplitudes is written to
``residual_spectra.png``.

    python demos/residual_spectra.py
"""

from dataclasses import replace

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from rcot.degrade import DegradationSpec, degrade, synth_image
from rcot.metrics import spectrum_stats
from rcot.spectral import amplitude

kinds = {
    "noise (sigma=25)": DegradationSpec("gaussian_noise", sigma=25),
    "rain": DegradationSpec("rain_streaks"),
    "haze": DegradationSpec("haze"),
    "down/up x2": DegradationSpec("down_up", scale=2),
}

fig, ax = plt.subplots(figsize=(6, 3.5))
for label, spec in kinds.items():
    ginis, amps = [], []
    for i in range(40):
        x = synth_image(32, 1, 100 + i)
        r = degrade(x, replace(spec, seed=i)) - x
        r = r / np.linalg.norm(r)
        ginis.append(spectrum_stats(r)[0])
        amps.append(amplitude(r).ravel())
    print(f"{label:>18}: mean gini {np.mean(ginis):.3f}")
    ax.hist(np.log10(np.concatenate(amps) + 1e-12), bins=60, range=(-6, 1), histtype="step",
            label=label)

ax.set_xlabel("log10 amplitude (unit-energy residual)")
ax.set_ylabel("count")
ax.legend()
fig.tight_layout()
fig.savefig("residual_spectra.png", dpi=100)
print("wrote residual_spectra.png")
