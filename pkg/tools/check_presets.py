"""Report the quantities the preset noise levels were tuned to hit.

    python tools/check_presets.py [--runs 50]

Speaker: calibrated threshold (target 2.4 mV) and the mean attack-free
impact (target about -52.7 dB). Motor: calibrated threshold (target 0.17 mV)
and the attacked duty cycle (target 0.56).
"""

import argparse

import numpy as np

from emshield import scenarios


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=50)
    args = ap.parse_args()

    sp = scenarios.speaker_preset()
    cal = scenarios.calibrate(sp, runs=args.runs)
    quiet = [scenarios.cell_config(sp, None, None, scenarios.cell_seed(sp.seed, (1, j)))
             for j in range(args.runs)]
    impacts = [scenarios.run_scenario(c).impact_db for c in quiet]
    print(f"speaker  epsilon {cal.epsilon * 1e3:.3f} mV   "
          f"no-attack impact {np.mean(impacts):.1f} dB (sd {np.std(impacts):.1f})")

    mo = scenarios.motor_preset()
    cal = scenarios.calibrate(mo, runs=args.runs)
    duty = scenarios.run_scenario(mo).duty_cycle
    print(f"motor    epsilon {cal.epsilon * 1e3:.3f} mV   attacked duty {duty:.4f} "
          f"(target {scenarios.expected_attacked_duty():.2f})")


if __name__ == "__main__":
    main()
