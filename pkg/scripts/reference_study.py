"""How often each uniform basis wins reference selection over a range of seeds."""

import argparse
import time
from collections import Counter

import numpy as np

from alqst.committee import Committee, bootstrap, select_reference
from alqst.models import KcsSpec, ground_state, named_state
from alqst.rbm import TrainConfig
from alqst.sources import SimulatorSource


def target_state(args):
    if args.kind == "kcs":
        return ground_state(KcsSpec(args.L, 1.0, args.h, 1e-7 if args.h == 0 else 1.0)).state
    return named_state(args.kind, args.L)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="kcs", help="kcs or a named state (ghz, ghz_phi, ...)")
    ap.add_argument("--L", type=int, default=7)
    ap.add_argument("--h", type=float, default=1.0)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--bootstrap", type=int, default=200)
    ap.add_argument("--alpha", type=int, default=2, help="hidden units per visible unit")
    ap.add_argument("--members", type=int, default=4)
    ap.add_argument("--fraction", type=float, default=3.0)
    ap.add_argument("--no-bagging", action="store_true")
    args = ap.parse_args()

    tgt = target_state(args)
    n = tgt.num_qubits
    cfg = TrainConfig(exact_negative_phase=True, num_hidden=args.alpha * n)
    wins = Counter()
    for seed in range(args.seeds):
        t0 = time.time()
        # same streams as al_loop, so seed s here matches seed s of an AL run
        pool = bootstrap(SimulatorSource(tgt, np.random.default_rng([seed, 1])), args.bootstrap)
        bag = None if args.no_bagging else np.random.default_rng([seed, 0xB0])
        factory = lambda: Committee.create(n, args.members, seed, cfg.num_hidden, cfg.resolved_init_scale(n))  # noqa: E731
        ref, scores = select_reference(pool, factory, cfg, "hadamard_k", args.fraction, "amplitude", bag)
        wins[ref[0]] += 1
        print(seed, ref, {k[0]: round(v, 5) for k, v in scores.items()}, f"{time.time() - t0:.0f}s", flush=True)
    print(dict(wins))


if __name__ == "__main__":
    main()
