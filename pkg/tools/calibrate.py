"""Evaluate transcriber settings on the synthetic corpus.

Usage: python tools/calibrate.py [--domain time|freq] [--search] [key=value ...]
"""
from __future__ import annotations

import argparse
import itertools


from chromabident.config import AnalysisConfig, TranscriberConfig
from chromabident.corpus import corpus
from chromabident.evaluation import evaluate, notes_to_mask
from chromabident.pipeline import analyze
from chromabident.transcriber import transcribe


def prepare(domain):
    acfg = AnalysisConfig(domain=domain)
    data = []
    for lick in corpus():
        buf, ref = lick.render()
        Yw, Yi = analyze(buf, acfg)
        data.append((lick, buf, ref, Yw, Yi))
    return acfg, data


def score(data, tcfg, verbose=False):
    cells_hit = cells_det = cells_ref = 0
    errs = 0
    rows = []
    for lick, buf, ref, Yw, Yi in data:
        notes = transcribe(Yw, Yi, tcfg)
        fp = Yw.frame_period_s
        rng = (40, 88)
        d = notes_to_mask(notes, fp, rng, buf.duration_s, fp)
        r = notes_to_mask(ref, fp, rng, buf.duration_s, fp)
        rep = evaluate(d, r)
        cells_hit += int((d.cells & r.cells).sum())
        cells_det += d.count()
        cells_ref += r.count()
        errs += rep.substitutions + rep.deletions + rep.insertions
        rows.append((lick.name, rep, len(notes), len(ref), notes, ref))
    P = cells_hit / max(cells_det, 1)
    R = cells_hit / max(cells_ref, 1)
    F = 2 * P * R / (P + R) if P + R else 0
    E = errs / cells_ref
    if verbose:
        for name, rep, nd, nr, notes, refn in rows:
            print(f"{name:14s} F={rep.f_measure:.3f} E={rep.error_score:.3f} "
                  f"S={rep.substitutions} D={rep.deletions} I={rep.insertions} events {nd}/{nr}")
        print(f"TOTAL F={F:.4f} E={E:.4f}")
    return F, E, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--domain", default="time")
    ap.add_argument("--search", action="store_true")
    ap.add_argument("--dump", default=None)
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    kw = {}
    for item in args.overrides:
        k, v = item.split("=")
        default = getattr(TranscriberConfig(), k)
        kw[k] = (v == "True" if v in ("True", "False") else
                 int(v) if isinstance(default, int) and not isinstance(default, bool) else float(v))
    base = TranscriberConfig.for_domain(args.domain, **kw)
    _, data = prepare(args.domain)
    if not args.search:
        F, E, rows = score(data, base, verbose=True)
        if args.dump:
            for name, rep, nd, nr, notes, refn in rows:
                if name == args.dump:
                    print("det", [(n.onset_frame, n.pitch, n.offset_frame, n.velocity) for n in notes])
                    print("ref", [(n.onset_frame, n.pitch, n.offset_frame) for n in refn])
        return
    best = None
    grid = dict(eps1=[0.08, 0.1, 0.12], eps2=[0.3, 0.5, 1.0],
                eps3=[0.03, 0.06, 0.09], eps4=[-0.02, -0.05, -0.1, -0.2],
                eps4_weighted=[-0.35, -0.45, -0.55], ambiguity_hi=[None, 0.5],
                rising_slope=[True, False], transient_eps=[0.25])
    for vals in itertools.product(*grid.values()):
        c = dict(zip(grid, vals))
        if c["eps3"] >= c["eps1"]:
            continue
        try:
            cfg = base.replace(**c)
        except Exception:
            continue
        F, E, _ = score(data, cfg)
        if best is None or F > best[0]:
            best = (F, E, c)
            print(best, flush=True)
    print("BEST", best)


if __name__ == "__main__":
    main()
