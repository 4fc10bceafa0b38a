"""Write the built-in example systems and the robot grid config to models/."""

import argparse
from pathlib import Path

from rsb.gridabs import dump_grid_config, robot_model
from rsb.models import four_class_system, two_goal_system
from rsb.ts import save_ts


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "models")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "two_goal.json").write_text(save_ts(two_goal_system()), encoding="utf-8")
    (args.out / "four_class.json").write_text(save_ts(four_class_system()), encoding="utf-8")
    (args.out / "robot.cfg").write_text(dump_grid_config(robot_model()), encoding="utf-8")
    for name in ("two_goal.json", "four_class.json", "robot.cfg"):
        print(args.out / name)


if __name__ == "__main__":
    main()
