"""Run the synthetic study over several seeds and tabulate LOSO accuracy.

For each seed the pipeline runs up to the metric stage; accuracy is then
computed for every feature set with and without resting-baseline correction.

    python scripts/run_study.py --seeds 0 1 2 --out /tmp/study
"""

import argparse
import os
import time

import numpy as np

from affectfusion import features, infer, pipeline
from affectfusion.config import PipelineConfig, load_config


def accuracies(out_dir: str, correct: bool) -> dict[str, float]:
    table = pipeline.read_metric_table(os.path.join(out_dir, "metrics", "metrics.csv"))
    index = pipeline.trial_index(os.path.join(out_dir, "data"))
    return {fs: infer.loso_cv(pipeline.examples_for(table, index, fs, correct),
                              n_permutations=0).aggregate["accuracy"]
            for fs in features.FEATURE_SETS}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--out", default="study_runs")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else PipelineConfig()
    head = "seed  mode  " + " ".join(f"{fs:>7}" for fs in features.FEATURE_SETS)
    print(head)
    fusion = {True: [], False: []}
    for seed in args.seeds:
        t0 = time.perf_counter()
        out = pipeline.run_pipeline(cfg.replace(seed=seed), out_dir=os.path.join(args.out, str(seed)),
                                    until="metrics")
        for correct in (False, True):
            acc = accuracies(out, correct)
            fusion[correct].append(acc["Fusion"])
            mode = "corr" if correct else "raw "
            print(f"{seed:4d}  {mode}  " + " ".join(f"{acc[fs]:7.3f}" for fs in features.FEATURE_SETS),
                  flush=True)
        print(f"      ({time.perf_counter() - t0:.0f} s)")
    print(f"median Fusion accuracy: corrected {np.median(fusion[True]):.3f}, "
          f"uncorrected {np.median(fusion[False]):.3f}")


if __name__ == "__main__":
    main()
