"""Compare Q-weighted and P-mode estimates for every built-in model.

Prints, per model, the largest deviation between the two estimates of the
default observables and of the classical bin masses, in joint standard errors.
Bins hit by fewer than ``--min-hits`` trajectories in either mode are left out
of the maximum: there a handful of large Q weights carry the whole estimate
and the batch-means error is unreliable.

    python scripts/mode_equivalence.py --n-traj 10000
"""

import argparse

import numpy as np

from hybridq.analysis import BinSpec, batch_stderr, joint_sigma
from hybridq.config import default_observables, observable_matrix
from hybridq.engine import simulate_ensemble
from hybridq.models import build_builtin, list_models
from hybridq.semigroup import derived_seed
from hybridq.states import expect, maximally_mixed


def estimates(ens, obs, bins):
    sig = ens.sigma[:, -1]
    w = np.trace(sig, axis1=-2, axis2=-1).real
    cols = [expect(sig, a).real for a in obs]
    idx = bins.index(ens.x[:, -1])
    masses = np.zeros((ens.n_traj, bins.n_bins + 1))
    masses[np.arange(ens.n_traj), idx] = w
    vals = np.concatenate([np.stack(cols, axis=1), masses], axis=1)
    hits = np.concatenate([np.full(len(obs), ens.n_traj), np.bincount(idx, minlength=bins.n_bins + 1)])
    return vals.mean(axis=0), batch_stderr(vals, ens.traj_indices), hits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=10_000)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--min-hits", type=int, default=30)
    args = ap.parse_args()
    n_steps = int(round(args.T / args.dt))
    for name in list_models():
        model = build_builtin(name)
        x0 = np.zeros(model.s)
        rho = maximally_mixed(model.n)
        obs = [observable_matrix(o, model.n) for o in default_observables(model.n)]
        pilot = simulate_ensemble(model, x0, rho, args.T, args.dt, "P", 500, derived_seed(args.seed, 9),
                                  grid=[n_steps], record_states=False, psd_check_every=0)
        bins = BinSpec.from_sample(pilot.x[:, -1], n_bins=6)
        out = {}
        for mode, seed in (("Q", args.seed), ("P", derived_seed(args.seed, 1))):
            ens = simulate_ensemble(model, x0, rho, args.T, args.dt, mode, args.n_traj, seed, grid=[n_steps],
                                    psd_check_every=0)
            out[mode] = estimates(ens, obs, bins)
        (mq, sq, hq), (mp, sp, hp) = out["Q"], out["P"]
        z = joint_sigma(mq, sq, mp, sp)
        dense = np.minimum(hq, hp) >= args.min_hits
        worst = float(z[dense].max())
        print(f"{name:22s} quantities={int(dense.sum()):3d} (+{int((~dense).sum())} sparse) "
              f"max z={worst:5.2f} {'ok' if worst <= 3 else 'CHECK'}")


if __name__ == "__main__":
    main()
