#!/usr/bin/env python3
"""
Run directory management for agitationlab
"""

import sys
import json
import argparse
from pathlib import Path

from dotenv import load_dotenv

from agitationlab.reporting import ReportError, prune_run, read_run_index

load_dotenv()


def list_runs(run_dir):
    """List the index of a run directory"""
    index = read_run_index(run_dir)
    if index.empty:
        print("No runs recorded")
        return
    print(f"\n📋 Runs in {run_dir}:")
    print("-" * 80)
    print(f"{'Config':<14} {'Label':<20} {'Seeds2':<12} {'Folds':<6} {'Proportion':<11} {'AUROC'}")
    print("-" * 80)
    for row in index.itertuples():
        print(f"{row.config_hash[:12]:<14} {row.label:<20} {row.seeds2:<12} {row.n_folds:<6} "
              f"{row.mean_proportion:<11.3f} {row.mean_auroc:.4f}")


def show_run(run_dir, label):
    """Print the per-fold results of one report"""
    path = Path(run_dir) / f"report_{label}.json"
    if not path.exists():
        print(f"❌ No report for {label} in {run_dir}")
        return False
    report = json.loads(path.read_text(encoding='utf-8'))
    print(f"\n📊 {label} (config {report['config_hash'][:12]}, seed1 {report['seed1']})")
    print("-" * 60)
    print(f"{'Seed':<6} {'Fold':<6} {'Train':<8} {'Kept normals':<14} {'AUROC'}")
    for fold in report['folds']:
        print(f"{fold['seed']:<6} {fold['fold']:<6} {fold['n_train_rebuilt']:<8} "
              f"{fold['retained_normal_count']:<14} {fold['auroc']:.4f}")
    print(f"Mean AUROC: {report['mean_auroc']:.4f}")
    return True


def confirm(question):
    answer = input(f"{question} Type 'YES' to continue: ").strip()
    return answer == "YES"


def prune(run_dir, config_hash, assume_yes):
    """Remove a configuration's rows and files from a run directory"""
    matches = [h for h in read_run_index(run_dir)['config_hash'].unique() if h.startswith(config_hash)]
    if len(matches) != 1:
        print(f"❌ {len(matches)} configurations match {config_hash}")
        return False
    if not assume_yes and not confirm(f"⚠️  Remove every run of config {matches[0][:12]}?"):
        print("❌ Operation cancelled. Run directory unchanged.")
        return False
    labels = prune_run(run_dir, matches[0])
    print(f"✅ Removed {len(labels)} runs: {', '.join(labels)}")
    return True


def main():
    parser = argparse.ArgumentParser(description='Manage agitationlab run directories')
    parser.add_argument('command', choices=['list', 'show', 'prune'], help='Command to execute')
    parser.add_argument('run_dir', help='Directory written by agitationlab run')
    parser.add_argument('target', nargs='?', help='Run label (show) or config hash prefix (prune)')
    parser.add_argument('--yes', action='store_true', help='Do not ask before pruning')

    args = parser.parse_args()

    try:
        if args.command == 'list':
            list_runs(args.run_dir)
            ok = True
        elif not args.target:
            print(f"❌ {args.command} needs a target")
            print(f"Usage: python manage_experiments.py {args.command} <run_dir> <target>")
            ok = False
        elif args.command == 'show':
            ok = show_run(args.run_dir, args.target)
        else:
            ok = prune(args.run_dir, args.target, args.yes)
    except ReportError as e:
        print(f"❌ {e}")
        ok = False
    sys.exit(0 if ok else 1)


if __name__ == '__main__':
    main()
