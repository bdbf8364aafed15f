import argparse

from wakesleep.experiments import SEEDS


def parser(doc, examples):
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    ap.add_argument("--examples", type=int, default=examples)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    return ap
