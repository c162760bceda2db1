"""X_pi infidelity along FWHM at fixed amplitude, minimised over the plateau length.

    python scripts/fwhm_profile.py [--step 0.5] [--out fwhm_profile.csv]

A one-dimensional cut through the FWHM/amplitude heatmap; the local minima
of the infidelity are the fidelity maxima along FWHM.
"""

import argparse

import numpy as np

from fluxsim import io
from fluxsim.circuits import TunableEjParams
from fluxsim.optimize import OptimizationProblem, grid_scan
from fluxsim.tomography import GateTarget


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--step", type=float, default=0.5)
    ap.add_argument("--amplitude", type=float, default=0.963)
    ap.add_argument("--out", default="fwhm_profile.csv")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    prob = OptimizationProblem(
        GateTarget.named("X_pi"),
        TunableEjParams(0.25, 0.5, phi_ext=0.5, n_fock=60),
        bounds={},
        fixed={"fwhm": 8.0, "l_flat": 2.0, "amplitude": args.amplitude, "baseline": 12.0},
        levels=10,
        vz_grid=32,
    )
    fwhm = np.arange(4.0, 16.0 + 1e-9, args.step)
    hm = grid_scan(prob, {"fwhm": fwhm, "amplitude": [args.amplitude]}, inner={"l_flat": np.arange(0.0, 5.01, 1.0)}, workers=args.workers)
    infid, lflat = hm.infidelity[:, 0], hm.best_inner[:, 0]
    io.write_csv(args.out, ["fwhm", "infidelity", "best_l_flat"], np.column_stack([fwhm, infid, lflat]))
    minima = [fwhm[i] for i in range(1, len(fwhm) - 1) if infid[i] < infid[i - 1] and infid[i] < infid[i + 1]]
    print("fidelity maxima along FWHM (ns):", minima)


if __name__ == "__main__":
    main()
