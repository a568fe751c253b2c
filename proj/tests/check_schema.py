"""Runs a small experiment with JSON output and validates it against the schema."""
import json
import pathlib
import subprocess
import sys

import jsonschema


def main():
    cli, schema_path, data_dir, out_dir = sys.argv[1:5]
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = out / "small.json"
    config.write_text(json.dumps({
        "duration_s": 0.2,
        "n_grid": [2, 4],
        "schemes": ["direct", "sticmac_cs"],
    }))
    subprocess.run([cli, "run", "aggregate_static", "--config", str(config), "--data-dir", data_dir,
                    "--seeds", "3", "--format", "json", "--out", str(out)], check=True)
    schema = json.loads(pathlib.Path(schema_path).read_text())
    doc = json.loads((out / "aggregate_static.json").read_text())
    jsonschema.validate(doc, schema)
    if len(doc["rows"]) != 4:
        sys.exit(f"expected 4 rows, got {len(doc['rows'])}")

    bad = dict(doc, rows=[dict(doc["rows"][0], ci=-1.0)])
    try:
        jsonschema.validate(bad, schema)
    except jsonschema.ValidationError:
        pass
    else:
        sys.exit("schema accepted a negative ci")

    result = subprocess.run([cli, "run", "aggregate_static", "--config", str(config), "--data-dir", data_dir,
                             "--seeds", "2"], capture_output=True)
    if result.returncode != 2:
        sys.exit(f"expected exit code 2 for too few seeds, got {result.returncode}")
    print("ok")


if __name__ == "__main__":
    main()
