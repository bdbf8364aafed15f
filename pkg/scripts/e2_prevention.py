"""Cluster prevention: 10x learning rate with wake-sleep phases."""
from _common import parser

from wakesleep import experiments as E

ap = parser(__doc__, 3000)
ap.add_argument("--t-sleep", type=float, default=E.T_SLEEP)
args = ap.parse_args()
cfgs = [E.cluster_prevention(s, args.examples, t_sleep=args.t_sleep) for s in args.seeds]
print("\n".join(E.summary_lines(E.sweep(cfgs, args.out, args.workers))))
