#!/usr/bin/env python3
"""
Sample Data Generator for agitationlab
======================================

Writes raw wrist-sensor signal files and their episode annotations for a small
synthetic cohort, the input the `features` command expects. Use
`python -m agitationlab synth` for ready-made feature datasets.

⚠️  WARNING: existing signal files in the output directory are overwritten! ⚠️
"""

import sys
import argparse
from dataclasses import replace
from pathlib import Path

from agitationlab.core import save_annotations
from agitationlab.errors import AgitationLabError
from agitationlab.signals import save_signal_frame
from agitationlab.synth import CohortConfig, iter_cohort_days, plan_episodes


def get_user_confirmation(out):
    """Require explicit YES confirmation before overwriting signal files"""
    existing = sorted(out.glob('*.signal.txt'))
    if not existing:
        return
    print(f"🚨 {len(existing)} signal files already in {out}")
    print("⚠️  To overwrite them, type 'YES' exactly (case sensitive)")
    if input("Type 'YES' to continue: ").strip() != "YES":
        print("❌ Operation cancelled. Output directory unchanged.")
        sys.exit(0)
    print("✅ Confirmation received.")


def write_sample(config, out):
    plan = plan_episodes(config)
    out.mkdir(parents=True, exist_ok=True)
    for day in iter_cohort_days(config, plan):
        path = save_signal_frame(day.frame, out)
        marker = f" ({len(day.annotations)} episodes)" if day.annotations else ""
        print(f"   ✅ {path.name}{marker}")
    save_annotations(plan, out / 'annotations.csv')
    return plan


def main():
    parser = argparse.ArgumentParser(description='Generate sample signal files for agitationlab')
    parser.add_argument('--out', default='sample_data', help='Output directory')
    parser.add_argument('--participants', type=int, default=2)
    parser.add_argument('--days', type=int, default=3, help='Days per participant')
    parser.add_argument('--hours', type=float, default=2, help='Wear hours per day')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--yes', action='store_true', help='Overwrite without asking')
    args = parser.parse_args()

    print("🌟 AGITATIONLAB SAMPLE DATA GENERATOR")
    print("=" * 50)
    out = Path(args.out)
    if not args.yes:
        get_user_confirmation(out)

    try:
        # Short days need a higher prevalence to hold at least one episode
        config = replace(CohortConfig(), n_participants=args.participants, days_per_participant=args.days,
                         wear_hours=args.hours, agitation_day_fraction=0.5, target_prevalence=0.03,
                         seed=args.seed)
        plan = write_sample(config, out)
    except AgitationLabError as e:
        print(f"\n❌ {e}")
        sys.exit(e.exit_code)

    print(f"\n🎉 Wrote {args.participants * args.days} participant-days and {len(plan)} episodes to {out}")
    print(f"Next: python -m agitationlab features --signals {out} "
          f"--annotations {out / 'annotations.csv'} --out {out / 'dataset.csv'}")


if __name__ == "__main__":
    main()
