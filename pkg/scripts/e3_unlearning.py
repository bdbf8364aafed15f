"""Unlearning: start from clustered endpoints (run e1 first) and train with sleep."""
from pathlib import Path

from _common import parser

from wakesleep import experiments as E

ap = parser(__doc__, 3000)
ap.add_argument("--from", dest="src", default="runs",
                help="directory holding the e1_clustering_s<seed> runs")
args = ap.parse_args()
cfgs = []
for s in args.seeds:
    snap = Path(args.src) / f"e1_clustering_s{s}" / "final.wsnp"
    if not snap.exists():
        raise SystemExit(f"missing {snap}; run e1_clustering.py first")
    cfgs.append(E.unlearning(s, snap, args.examples))
print("\n".join(E.summary_lines(E.sweep(cfgs, args.out, args.workers))))
