"""Cluster formation: 10x learning rate without sleep phases."""
from _common import parser

from wakesleep import experiments as E

args = parser(__doc__, 3000).parse_args()
res = E.sweep([E.cluster_formation(s, args.examples) for s in args.seeds], args.out, args.workers)
print("\n".join(E.summary_lines(res)))
