import csv
import json
from typing import List

from laep.clustersim.simulate import ScenarioReport
from laep.utils.exceptions import ConfigError, ValidationError

REPORT_CSV_HEADER = ["scenario", "total_params", "mean_step_time", "relative_throughput"]


def write_report(reports: List[ScenarioReport], path: str):
    """Writes the JSON report to ``path`` and the flat CSV next to it (``.csv`` suffix)."""
    with open(path, "w") as f:
        json.dump([r.__state_dict__() for r in reports], f, indent=2, sort_keys=True)
        f.write("\n")

    csv_path = path[: -len(".json")] + ".csv" if path.endswith(".json") else path + ".csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER)
        for r in reports:
            writer.writerow([r.scenario, r.total_params, repr(r.mean_step_time), repr(r.relative_throughput)])
    return csv_path


def read_report(path: str) -> List[ScenarioReport]:
    try:
        with open(path) as f:
            entries = json.load(f)
        return [
            ScenarioReport(
                scenario=e["scenario"],
                total_params=int(e["total_params"]),
                experts_per_layer=[int(n) for n in e["experts_per_layer"]],
                mean_step_time=float(e["mean_step_time"]),
                relative_throughput=float(e["relative_throughput"]),
            )
            for e in entries
        ]
    except FileNotFoundError:
        raise ConfigError(f"report file {path!r} does not exist")
    except KeyError as e:
        raise ConfigError(f"report entry is missing key {e.args[0]!r}", key=e.args[0])
    except (TypeError, ValueError) as e:
        raise ValidationError(f"malformed report {path!r}: {e}")
