"""Standard learning rate with and without wake-sleep, paired by seed."""
import numpy as np
from _common import parser

from wakesleep import experiments as E

args = parser(__doc__, 6000).parse_args()
final = {}
for wsa in (False, True):
    res = E.sweep([E.low_rate(s, wsa, args.examples) for s in args.seeds], args.out, args.workers)
    print("\n".join(E.summary_lines(res)))
    final[wsa] = np.array([ck[-1]["error"] for _, ck, _ in res])
wins = int(np.sum(final[True] < final[False]))
print(f"final error: wsa {final[True].mean():.4f}  none {final[False].mean():.4f}  "
      f"wsa better on {wins}/{len(args.seeds)} seeds")
