"""Finite-step derivative of E_Q[tr(sigma a) f(X)] against the hybrid generator, for every built-in.

    python scripts/generator_checks.py --n 200000 --json reports/generator.json
"""

import argparse
import json
import os

import numpy as np

from hybridq.config import default_observables, observable_matrix
from hybridq.models import build_builtin, list_models
from hybridq.semigroup import cosine, gaussian, generator_consistency_check, plane_wave
from hybridq.states import projector, random_pure_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write the reports to this file")
    args = ap.parse_args()
    reports = []
    for name in list_models():
        model = build_builtin(name)
        lo, hi = (np.asarray(b) for b in model.x_box)
        x = lo + 0.4 * (hi - lo)
        obs = [observable_matrix(o, model.n) for o in default_observables(model.n)]
        rho = projector(random_pure_state(model.n, np.random.default_rng(args.seed)))
        k = np.linspace(0.6, 1.1, model.s)
        for F in (cosine(k, obs[0]), gaussian(x + 0.3, 0.8, obs[-1]), plane_wave(-k)):
            rep = generator_consistency_check(model, F, rho, x, N=args.n, seed=args.seed)
            gen = rep.details["generator"]
            print(f"{name:22s} {F.name:10s} generator={gen.real:+.4f}{gen.imag:+.4f}i "
                  f"{'PASS' if rep.passed else 'FAIL'}")
            reports.append({"model": name, **rep.to_dict()})
    if args.json:
        os.makedirs(os.path.dirname(args.json) or ".", exist_ok=True)
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(reports, fh, indent=2)


if __name__ == "__main__":
    main()
