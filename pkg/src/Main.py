import sys

from src.lcv_auto.cli import main

if __name__ == "__main__":
    # e.g. python -m src.Main run --scenario data/scenarios/double_lane_change.ini --out results/dlc
    sys.exit(main())
