"""Geodesic, parallel transport and frame-bundle geodesic on the unit sphere.

Writes CSV files (embedded coordinates included) into the output directory.
"""

import argparse
from pathlib import Path

import numpy as np

from geomkit import framebundle as fb
from geomkit.geodesics import geodesic, parallel_transport
from geomkit.manifold import sphere_stereographic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_output")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)

    S = sphere_stereographic()
    x0, v0 = np.zeros(2), np.array([1.0, -1.0])
    traj = geodesic(S, x0, v0, 100)
    traj.to_csv(out / "sphere_geodesic.csv")
    print("geodesic endpoint", traj.final[:2], "on sphere:", np.linalg.norm(S.embed(traj.final[:2])))

    t = np.linspace(0.0, 1.0, 101)
    curve = np.stack([t ** 2, -np.sin(t)], axis=1)
    pt = parallel_transport(S, np.array([-0.5, -0.5]), curve)
    pt.to_csv(out / "sphere_transport.csv")
    norms = np.sqrt(S.inner(curve, pt.values[:, -2:], pt.values[:, -2:]))
    print("transported norm drift", float(np.ptp(norms)))

    u0 = fb.pack(x0, np.array([[0.5, 0.0], [0.0, 0.5]]))
    fm = fb.exp_fm(S, u0, np.array([1.0, 0.5, 0, 0, 0, 0]), 100)
    fm.to_csv(out / "sphere_frame_geodesic.csv")
    print("frame orthonormality error at t=1", float(fb.orthonormality_error(S, fm.final[:6])))


if __name__ == "__main__":
    main()
