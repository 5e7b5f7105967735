"""Green's function decay on exact KCS ground states: power law vs exponential."""

import argparse

import numpy as np

from alqst.models import KcsSpec, ground_state
from alqst.observables import decay_fits, density_vector, greens_vector, total_density


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=19)
    ap.add_argument("--fields", default="0,1", help="comma-separated h/t values")
    args = ap.parse_args()
    for h in (float(x) for x in args.fields.split(",")):
        mu = 1e-7 if h == 0 else 1.0
        res = ground_state(KcsSpec(args.L, 1.0, h, mu))
        c = greens_vector(res.state)
        fit = decay_fits(c)
        print(f"h={h:g} E0={res.energy:.10f} n_tot={total_density(res.state):.10f}")
        print("  n(j) =", np.array2string(density_vector(res.state), precision=4))
        print("  c(d) =", np.array2string(c, precision=5))
        print(f"  R2 power={fit['power_r2']:.4f} exp={fit['exp_r2']:.4f} -> {fit['decay']}")


if __name__ == "__main__":
    main()
