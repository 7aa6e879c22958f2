import os
import sys
import argparse
import subprocess

# gen -> prune -> rearrange -> simulate -> report, each step a separate laep command.
steps = [
    {
        "command": "gen",
        "out": "trace.csv",
        "args": ["--spec", "{spec}"],
    },
    {
        "command": "prune",
        "out": "decision.json",
        "args": ["--trace", "{out}/trace.csv", "--alpha-edge", "{alpha_edge}", "--alpha-mid", "{alpha_mid}", "--beta", "{beta}", "--stability", "{stability}"],
    },
    {
        "command": "rearrange",
        "out": "placement.json",
        "args": ["--trace", "{out}/trace.csv", "--decision", "{out}/decision.json", "--groups", "{groups}"],
    },
    {
        "command": "simulate",
        "out": "report.json",
        "args": ["--trace", "{out}/trace.csv", "--decision", "{out}/decision.json", "--placement", "{out}/placement.json"],
    },
    {
        "command": "report",
        "out": "report",
        "args": ["--trace", "{out}/trace.csv"],
    },
]


def main():
    parser = argparse.ArgumentParser(description="Runs the full laep pipeline on a generated trace.")
    parser.add_argument("--spec", required=True, help="Trace generation spec file.")
    parser.add_argument("--structure", required=True, help="Structure preset or file.")
    parser.add_argument("--out", default="pipeline", help="Output directory.")
    parser.add_argument("--alpha-edge", dest="alpha_edge", default="0.2")
    parser.add_argument("--alpha-mid", dest="alpha_mid", default="0.4")
    parser.add_argument("--beta", default="0.1")
    parser.add_argument("--stability", default="fixed:0")
    parser.add_argument("--groups", default="8")
    args = vars(parser.parse_args())

    os.makedirs(args["out"], exist_ok=True)
    for step in steps:
        command = [sys.executable, "-m", "laep", step["command"]]
        command += [arg.format(**args) for arg in step["args"]]
        command += ["--structure", args["structure"], "--out", os.path.join(args["out"], step["out"])]
        print(" ".join(command))
        result = subprocess.run(command)
        if result.returncode:
            sys.exit(result.returncode)


if __name__ == "__main__":
    main()
