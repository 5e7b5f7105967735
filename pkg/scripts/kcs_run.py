"""AL run on a KCS ground state followed by the budget-matched baseline."""

import argparse

import numpy as np

from alqst.committee import QueryPolicy, StoppingRule, al_loop, baseline_budget, baseline_run
from alqst.models import KcsSpec, ground_state
from alqst.observables import density_vector, greens_vector, relative_diff
from alqst.rbm import TrainConfig
from alqst.sources import SimulatorSource


def errors(states, target):
    n_t, c_t = density_vector(target), greens_vector(target)
    n = np.mean([relative_diff(density_vector(s), n_t) for s in states])
    c = np.mean([relative_diff(greens_vector(s), c_t) for s in states])
    return n, c


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=7)
    ap.add_argument("--h", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-queries", type=int, default=5)
    args = ap.parse_args()

    tgt = ground_state(KcsSpec(args.L, 1.0, args.h, 1e-7 if args.h == 0 else 1.0)).state
    cfg = TrainConfig(exact_negative_phase=True, num_hidden=2 * args.L)
    pol = QueryPolicy(n_per_query=2, max_queries=args.max_queries, bootstrap_per_basis=200,
                      stop=StoppingRule("kcs_observables"))
    al = al_loop(SimulatorSource(tgt, np.random.default_rng([args.seed, 1])), pol, cfg, seed=args.seed, target=tgt)
    budget = baseline_budget(al.state)
    base = baseline_run(SimulatorSource(tgt, np.random.default_rng([args.seed, 2])), budget, cfg,
                        np.random.default_rng([args.seed, 3]), seed=args.seed, target=tgt)
    print("reference", al.state.reference, "scores", al.reference_scores)
    print("met", al.met, "queries", al.state.n_queries, "N_tot", al.state.n_tot, "budget", budget)
    for name, res in (("AL", al), ("baseline", base)):
        n, c = errors(res.final_states(), tgt)
        print(f"{name:9s} density err {n:.3f}  greens err {c:.3f}")


if __name__ == "__main__":
    main()
