"""Run the desk-scale AC-LSTM / LSTM / MP comparison and print a summary table.

    python3 scripts/desk_experiment.py [--seeds 0 1 2 3 4] [--epochs 100]
"""

import argparse
import logging
from dataclasses import replace

from aclstm.experiment import DeskConfig, run_desk


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    base = DeskConfig()
    dcfg = replace(base, seeds=tuple(args.seeds), train=replace(base.train, epochs=args.epochs))
    res = run_desk(dcfg)
    print(res.table())
    ac, ls = res.median("aclstm"), res.median("lstm")
    print(f"AC-LSTM minus LSTM (median): {ac - ls:+.2f} dB")
    print(f"margin over MP: AC-LSTM {res.mp_nmse_db - ac:+.2f} dB, LSTM {res.mp_nmse_db - ls:+.2f} dB")


if __name__ == "__main__":
    main()
