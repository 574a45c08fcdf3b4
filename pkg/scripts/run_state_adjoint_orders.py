#!/usr/bin/env python3
"""Reproduce the scenario-1 study: state and multiplier errors vs step count
for the stiff Dirichlet benchmark, integrated with the exact optimal control.

Writes report.csv / report.txt / report.gp into the output directory."""

import argparse

from heatoc import ExperimentConfig, emit_report, render_table, run_scenario1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out_scenario1")
    ap.add_argument("--m", type=int, nargs="+", default=[250, 500])
    ap.add_argument("--methods", nargs="+", default=["gauss2", "lobatto3", "peer_toy2"])
    ap.add_argument("--kmax", type=int, default=11, help="largest N is 2^kmax")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        m_values=tuple(args.m),
        methods=tuple(args.methods),
        N_values=tuple(2**k for k in range(4, args.kmax + 1)),
        scenario=1,
        jobs=args.jobs,
    )
    report = run_scenario1(cfg)
    print(render_table(report))
    paths = emit_report(report, args.out)
    for fmt, path in paths.items():
        print(f"wrote {fmt}: {path}")


if __name__ == "__main__":
    main()
