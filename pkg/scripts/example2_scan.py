"""Per-annulus homomorphisms of the alternating example map on shrinking balls.

    python3 scripts/example2_scan.py [--radii 1,0.5,0.3,0.2,0.1]

Each row lists the verdict on the ball of the given radius around 0 and the
homomorphism C4 -> C4 induced on every band the continuation reached.
"""
import argparse

from orbilift.counterexamples import example2_analysis


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--radii", default="1,0.5,0.3,0.25,0.2,0.15,0.1")
    args = p.parse_args()
    for r in (float(x) for x in args.radii.split(",")):
        rep = example2_analysis(r)
        bands = []
        for piece in rep.pieces:
            h = piece.homomorphism
            if h is None:
                continue
            kind = "trivial" if h.is_trivial else \
                "identity" if h.map == tuple(range(len(h.map))) else str(h.map)
            bands.append(f"n={piece.band}:{kind}")
        print(f"radius={r:g} status={rep.status} " + " ".join(bands))


if __name__ == "__main__":
    main()
