"""Brownian transition densities on the sphere for an isotropic and a tilted frame.

Each density is written as a lat x lon CSV grid next to the sample endpoints.
"""

import argparse
from pathlib import Path

import numpy as np

from geomkit import framebundle as fb
from geomkit.manifold import sphere_stereographic
from geomkit.stats import density_grid, frame_from_covariance, sample_brownian, write_samples


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_output")
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)

    S = sphere_stereographic()
    frames = {"isotropic": np.diag([0.15, 0.15]), "anisotropic": np.array([[0.2, 0.1], [0.1, 0.1]])}
    for name, cov in frames.items():
        u0 = fb.pack(np.zeros(2), frame_from_covariance(cov, "columns"))
        ends = np.asarray(S.embed(sample_brownian(S, u0, n_paths=args.paths, seed=args.seed)))
        write_samples(out / f"normal_{name}_samples.csv", ends)
        grid = density_grid(ends, 0.1)
        grid.to_csv(out / f"normal_{name}_density.csv")
        grid.to_json(out / f"normal_{name}_density.json")
        _, second = grid.moments()
        print(f"{name}: mass {grid.mass():.6f}, xy second moment {second[0, 1]:+.4f}")


if __name__ == "__main__":
    main()
