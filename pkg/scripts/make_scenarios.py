"""Regenerate the scenario files shipped in src/reactgrasp/scenarios."""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "reactgrasp" / "scenarios"
POSES = ("left_bottom", "center_up", "right_bottom")
TABLE = {"name": "table", "shape": {"type": "half_space", "normal": [0, 0, 1], "offset": 0.0}}
OBJECT_XY = [0.5, 0.0]


def target(kind):
    if kind == "box":
        return {"name": "box", "role": "target", "shape": {"type": "box"}, "pose": {"xyz": OBJECT_XY + [0.045]}}
    return {"name": kind, "role": "target", "shape": {"type": "point_cloud", "generator": kind},
            "pose": {"xyz": OBJECT_XY + [0.0]}}


def obstacle_box(name, xyz, half=0.02, motion=None):
    spec = {"name": name, "role": "obstacle",
            "shape": {"type": "superellipsoid", "a": half, "b": half, "c": half, "e1": 0.2, "e2": 0.2},
            "pose": {"xyz": list(xyz)}}
    if motion:
        spec["motion"] = motion
    return spec


def write(path, data):
    path.write_text(json.dumps(data, indent=2) + "\n")


def main():
    for kind in ("box", "bowl", "dish", "mug", "wine_glass"):
        for pose in POSES:
            write(OUT / "suite" / f"{kind}_{pose}.json", {
                "name": f"{kind}_{pose}", "robot": "builtin", "initial": pose,
                "objects": [target(kind)], "environment": [TABLE], "duration": 20.0, "seed": 0,
            })
    write(OUT / "disturbance.json", {
        "name": "disturbance", "robot": "builtin", "initial": "center_up",
        "objects": [target("box")], "environment": [TABLE], "duration": 20.0, "seed": 0,
        "disturbances": [
            {"time": 3.0, "kind": "object_teleport", "object": "box", "pose": {"xyz": [0.5, 0.12, 0.045]}},
            {"time": 8.0, "kind": "object_teleport", "object": "box", "pose": {"xyz": [0.4, 0.04, 0.045]}},
            {"time": 12.0, "kind": "robot_push", "qdot": [0.3, -0.5, 0.0, 0.0, 0.0, 0.43, 0.0] + [0.0] * 8,
             "duration": 0.2},
        ],
    })
    # four boxes on the diagonals around the wine glass, sweeping across the
    # descent corridor at about 4 cm/s
    amp, period, r, z = 0.04, 6.0, 0.14, 0.14
    moving = []
    for name, (sx, sy) in zip("abcd", [(1, 1), (-1, 1), (-1, -1), (1, -1)]):
        tangent = [-sy * amp / 2**0.5, sx * amp / 2**0.5, 0.0]
        moving.append(obstacle_box(f"box_{name}", [OBJECT_XY[0] + sx * r, OBJECT_XY[1] + sy * r, z],
                                   half=0.025, motion={"amplitude": tangent, "period": period, "phase": "random"}))
    write(OUT / "moving_boxes.json", {
        "name": "moving_boxes", "robot": "builtin", "initial": "left_bottom",
        "objects": [target("wine_glass")] + moving, "environment": [TABLE], "duration": 20.0, "seed": 0,
    })
    write(OUT / "bench.json", {
        "name": "bench", "robot": "builtin", "initial": "left_bottom",
        "objects": [target("bowl"), obstacle_box("obstacle_a", [0.55, 0.22, 0.1]),
                    obstacle_box("obstacle_b", [0.55, -0.22, 0.1])],
        "environment": [TABLE], "duration": 20.0, "seed": 0,
    })


if __name__ == "__main__":
    main()
