"""Attack plain, decomposed and encrypted consensus runs over many seeds.

Counts how often each attack recovers the private initial values exactly.
Only the plain protocol should leak.

    python scripts/privacy_separation.py --runs 50
"""

import argparse
from collections import Counter

import numpy as np

from privmas import paillier
from privmas.adversary import HBC, AdversaryView, attack_decomposed, attack_plain_consensus, attack_secure_edge
from privmas.graph import circle, path
from privmas.observation import ObservationLog
from privmas.static import SecureEdgeConfig, run_decomposed, run_plain, run_secure_edge


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--key-bits", type=int, default=512)
    args = ap.parse_args()

    g = circle(args.m, 0.3)
    keys = [paillier.keygen(args.key_bits, 100 + i) for i in range(2)]
    tally = {name: Counter() for name in ("plain", "decomposed", "secure-edge eavesdropper", "secure-edge agent")}
    for seed in range(args.runs):
        x0 = np.random.default_rng(seed).uniform(-5, 5, size=args.m)

        log = ObservationLog()
        run_plain(g, x0, 0.5, 30, log=log)
        tally["plain"][attack_plain_consensus(AdversaryView.eavesdropper(), log, g, 0.5, truth=x0).outcome] += 1

        log = ObservationLog()
        dec = run_decomposed(g, x0, 0.3, 40, seed=seed, log=log)
        tally["decomposed"][attack_decomposed(AdversaryView.from_run(dec), log, g, 0.3, truth=x0).outcome] += 1

        log = ObservationLog()
        sec = run_secure_edge(path(2), x0[:2], 1.0, 30, SecureEdgeConfig(key_bits=args.key_bits), seed=seed,
                              log=log, keys=keys)
        eve = attack_secure_edge(AdversaryView.from_run(sec), log, path(2), 1.0, truth=x0[:2])
        hbc = attack_secure_edge(AdversaryView.from_run(sec, HBC, agent=0), log, path(2), 1.0, truth=x0[:2])
        tally["secure-edge eavesdropper"][eve.outcome] += 1
        tally["secure-edge agent"][hbc.outcome] += 1

    for name, counts in tally.items():
        print(f"{name:>25}: " + ", ".join(f"{k} {v}/{args.runs}" for k, v in sorted(counts.items())))


if __name__ == "__main__":
    main()
