"""Fit a simulated dataset through the CLI and validate the JSON report."""

import json
import pathlib
import subprocess
import sys

import jsonschema


def main() -> int:
    cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    work.mkdir(parents=True, exist_ok=True)
    data = work / "d.csv"
    subprocess.run([cli, "simulate", "--setting", "imb-lin-lo", "--n", "4000", "--seed", "5", "--out", str(data)],
                   check=True, stdout=subprocess.DEVNULL)
    schema = json.loads(schema_path.read_text())
    variants = {
        "sandwich": [],
        "all": ["--se", "all", "--bootstrap", "20", "--timings"],
        "full": ["--se", "pigeonhole", "--bootstrap", "10", "--bootstrap-mode", "full"],
    }
    for name, extra in variants.items():
        out = work / f"{name}.json"
        subprocess.run([cli, "fit", "--data", str(data), "--response", "y", "--row", "row", "--col", "col",
                        "--features", "x1,x2,x3,x4,x5,x6,x7", "--out", str(out), *extra],
                       check=True, stdout=subprocess.DEVNULL)
        report = json.loads(out.read_text())
        jsonschema.validate(report, schema)
        print(f"{name}: valid")
    return 0


if __name__ == "__main__":
    sys.exit(main())
