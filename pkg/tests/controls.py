"""Hand-built trajectories that each violate exactly one invariant."""
import json

# check -> (model fields, interior rows); rows are u_1..u_3 at steps 0, 1, ...
CONTROLS = {
    "bounds": ({"model": "aggdiff"}, [[0.4, 0.3, 0.6], [0.4, 1.3, 0.6]]),
    "conservation": ({"model": "aggdiff"}, [[0.4, 0.3, 0.6], [0.4, 0.3, 0.7]]),
    "max_principle": ({"model": "aggdiff"}, [[0.6, 0.7, 0.8], [0.6, 0.9, 0.8]]),
    "monotonicity": ({"model": "aggdiff"}, [[0.6, 0.7, 0.8], [0.6, 0.8, 0.7]]),
    "tv_decay": ({"model": "aggdiff"}, [[0.6, 0.7, 0.6], [0.6, 0.9, 0.6]]),
    "mean_convergence": ({"model": "aggdiff"}, [[0.6, 0.7, 0.8], [0.6, 0.7, 0.8]]),
    "heat_vanishing": ({"model": "heat", "p": 0.5}, [[0.2, 0.3, 0.2], [0.2, 0.4, 0.2]]),
}


def write_control(tmp_path, name):
    """Write config + trajectory CSV for one control; return their paths."""
    fields, rows = CONTROLS[name]
    cfg = dict(fields, N=4, initial={"type": "values", "values": [0.0] + rows[0] + [0.0]},
               checks=[name])
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    csv_path = tmp_path / f"{name}.csv"
    lines = ["t,u_1,u_2,u_3,mass,tv"]
    for k, row in enumerate(rows):
        tv = abs(row[1] - row[0]) + abs(row[2] - row[1]) + row[0] + row[2]
        lines.append(",".join(str(v) for v in [k * 0.1, *row, sum(row), tv]))
    csv_path.write_text("\n".join(lines) + "\n")
    return cfg_path, csv_path
