"""Build the desk benchmark (data, pretrained object field, the three
trained variants) and print reconstruction, pose and contact tables.

    python scripts/desk_benchmark.py --cache .cache/desk
"""
import argparse
import time

from vtfield.bench import DeskSetup, dataset, field_model, object_model
from vtfield.evaluate import ablation_suite, build_report, reconstruction_cd
from vtfield.infer import InferConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cache", default=".cache/desk")
    p.add_argument("--icp", action="store_true", help="include the ICP baseline")
    args = p.parse_args()
    t0 = time.perf_counter()
    log = lambda s: print(f"[{time.perf_counter() - t0:7.1f}s] {s}", flush=True)
    setup = DeskSetup(args.cache)
    obj = object_model(setup, log)
    recon = {t: reconstruction_cd(obj, t) for t in setup.tools}
    log("recon " + " ".join(f"{t}={v:.5f}" for t, v in recon.items()))
    models = {v: field_model(setup, v, log) for v in ("full", "wo_acts", "wo_obj_pose")}
    test = dataset(setup, "test", log)
    report, results = ablation_suite(models, test, InferConfig(), icp=args.icp, log=log)
    report = build_report(results, recon, report.absent)
    print(report.to_text())
    log("done")


if __name__ == "__main__":
    main()
