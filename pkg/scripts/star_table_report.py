#!/usr/bin/env python3
"""Build star-product coefficient tables for the reference potentials and
print a compact summary: term counts per order and the low-order coefficients
acting on monomial probes.
"""

import argparse
import json

from starq.jets import Jet, jet_to_json
from starq.formal import star_eval, star_table_to_json
from starq.karabegov import bt_star_from, karabegov_star, reference_potentials


def summarize(name, table):
    probe_f = Jet.variable(0, table.n, table.D, "anti")
    probe_g = Jet.variable(0, table.n, table.D)
    out = star_eval(table, probe_f, probe_g)
    return {
        "potential": name,
        "convention": table.convention,
        "terms_per_order": [len(op.terms) for op in table.C],
        "zbar_star_z": [jet_to_json(j.truncate(4)) for j in out],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--order", type=int, default=2)
    ap.add_argument("--max-degree", type=int, default=0,
                    help="degree budget (default 3*order + 8)")
    ap.add_argument("--full", action="store_true",
                    help="dump the complete tables instead of summaries")
    args = ap.parse_args()
    D = args.max_degree or (3 * args.order + 8)

    report = []
    for name, P in reference_potentials(D).items():
        for flavor, build in (("anti_wick", karabegov_star),
                              ("toeplitz", bt_star_from)):
            t = build(P, args.order)
            entry = (star_table_to_json(t) if args.full
                     else summarize(name, t))
            entry["flavor"] = flavor
            report.append(entry)
    print(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
