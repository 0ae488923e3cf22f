#!/usr/bin/env python3
"""Run the CLI on small inputs and validate every JSON document it writes."""

import json
import pathlib
import subprocess
import sys

import jsonschema


def validator(schema, name):
    sub = {"$defs": schema["$defs"], "$ref": f"#/$defs/{name}"}
    return jsonschema.Draft202012Validator(sub)


def run(cli, *args):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"{' '.join(args)} exited {proc.returncode}: {proc.stderr}")


def main():
    cli, schema_dir, tmp = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    tmp.mkdir(parents=True, exist_ok=True)
    schema = json.loads((schema_dir / "hazardiv.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)

    data = tmp / "data.csv"
    run(cli, "simulate", "--preset", "A", "--psi", "0.5", "--censor-lambda", "1", "--n", "600",
        "--reps", "3", "--seed", "5", "--msm", "--out", str(tmp / "sim"), "--export-data", str(data))
    run(cli, "simulate", "--preset", "B", "--gamma3", "0.5", "--n", "300", "--reps", "2",
        "--method", "iv-ee", "--out", str(tmp / "sim_ee"))
    docs = [(tmp / "sim.json", "replication_summary"), (tmp / "sim_ee.json", "replication_summary")]

    for method in ["iv-closed", "iv-ee", "cox", "cox-adjusted", "cox-msm"]:
        out = tmp / f"est_{method}"
        run(cli, "estimate", "--data", str(data), "--method", method, "--out", str(out))
        docs.append((out.with_suffix(".json"), "estimate_report"))
    run(cli, "estimate", "--data", str(data), "--exposure-model", "plugin-logistic",
        "--nuisance-out", str(tmp / "nuisance.json"), "--out", str(tmp / "est_plugin"))
    docs += [(tmp / "nuisance.json", "nuisance_models"), (tmp / "est_plugin.json", "estimate_report")]

    run(cli, "replicate-table", "--table", "1", "--n", "200", "--reps", "2", "--out", str(tmp / "tab"))
    docs.append((tmp / "tab.json", "simulation_table"))

    failed = 0
    for path, name in docs:
        errors = list(validator(schema, name).iter_errors(json.loads(path.read_text())))
        for e in errors[:5]:
            print(f"{path.name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        print(f"{'FAIL' if errors else 'ok  '} {path.name} ({name})")
        failed += bool(errors)

    # a broken document must be rejected
    bad = json.loads((tmp / "est_iv-closed.json").read_text())
    bad["hr"] = -1
    if validator(schema, "estimate_report").is_valid(bad):
        print("FAIL schema accepted a negative hazard ratio")
        failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
