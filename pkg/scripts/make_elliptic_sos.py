"""Regenerate the shipped elliptic ECG bandpass coefficient files.

Run once; the output files are committed under src/affectfusion/data/.
"""

import argparse
from pathlib import Path

import scipy.signal

from affectfusion.filters import BiquadCascade, write_sos_file

DATA = Path(__file__).resolve().parents[1] / "src" / "affectfusion" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--order", type=int, default=4)
    ap.add_argument("--ripple-db", type=float, default=0.5)
    ap.add_argument("--stop-db", type=float, default=40.0)
    ap.add_argument("--fs", type=float, nargs="+", default=[1000.0, 250.0])
    args = ap.parse_args()
    for fs in args.fs:
        sos = scipy.signal.ellip(args.order, args.ripple_db, args.stop_db, [5.0, 45.0],
                                 btype="bandpass", fs=fs, output="sos")
        rows = sos[:, [0, 1, 2, 4, 5]] / sos[:, [3]]
        meta = {"kind": "bandpass", "family": "elliptic", "cutoffs_hz": "5 45",
                "order": args.order, "passband_ripple_db": args.ripple_db,
                "stopband_atten_db": args.stop_db, "sample_rate_hz": fs}
        out = DATA / f"ecg_elliptic_5_45_fs{int(fs)}.sos"
        write_sos_file(BiquadCascade(rows, meta), out)
        print("wrote", out)


if __name__ == "__main__":
    main()
